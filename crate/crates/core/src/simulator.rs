//! Monte Carlo runs of the full pipeline (hash, noise, match, score) over
//! scenarios with controlled value overlap, and comparison of the observed
//! event rates with the analytic bounds.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bitkeys::{add_noise, hash_value, Bits, HashCode, KeyRef, NoisyKey};
use crate::bounds::{bound_set, mismatch_prob, missed_match_prob, revelation_prob, CohortSpec};
use crate::error::{check_flip_prob, invalid, Error, Result};
use crate::matcher::{merge, revelation_groups, MatchReport, Truth};

/// z-scores beyond this magnitude are reported as failures.
pub const FAIL_Z: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashMode {
    /// Fresh uniformly random codes for every value in every trial.
    Idealized,
    /// HMAC codes keyed by the per-trial seed.
    Keyed,
}

/// `count` distinct values held by exactly the sources in `sources`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueGroup {
    pub sources: BTreeSet<u32>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    s: u32,
    groups: Vec<ValueGroup>,
    n: u32,
    p_f: f64,
    t: u32,
    hash_mode: HashMode,
    master_seed: Vec<u8>,
    cohort: CohortSpec,
    pairs: u128,
    same_value_pairs: u64,
}

impl Scenario {
    /// Sources are numbered `1..=s`; every source must hold at least one value.
    pub fn new(
        s: u32,
        groups: Vec<ValueGroup>,
        n: u32,
        p_f: f64,
        t: u32,
        hash_mode: HashMode,
        master_seed: Vec<u8>,
    ) -> Result<Self> {
        if s == 0 {
            return Err(invalid("sources: need at least one source"));
        }
        if groups.is_empty() {
            return Err(invalid("groups: need at least one group"));
        }
        if n == 0 {
            return Err(invalid("n: key length must be at least 1 bit"));
        }
        if t == 0 || t > n {
            return Err(invalid(format!("t: threshold {t} outside [1, {n}]")));
        }
        check_flip_prob(p_f)?;
        let mut m = vec![0u64; s as usize];
        let mut same_value_pairs = 0u64;
        for (i, g) in groups.iter().enumerate() {
            if g.sources.is_empty() {
                return Err(invalid(format!("groups[{i}]: empty source set")));
            }
            if g.count == 0 {
                return Err(invalid(format!("groups[{i}]: count must be positive")));
            }
            for &src in &g.sources {
                if src == 0 || src > s {
                    return Err(invalid(format!("groups[{i}]: source {src} outside 1..={s}")));
                }
                m[src as usize - 1] += g.count;
            }
            let z = g.sources.len() as u64;
            same_value_pairs += g.count * (z * (z - 1) / 2);
        }
        if let Some(i) = m.iter().position(|&c| c == 0) {
            return Err(invalid(format!("groups: source {} holds no values", i + 1)));
        }
        let cohort = CohortSpec::new(m)?;
        let pairs = crate::bounds::pair_count(&cohort)?;
        Ok(Scenario {
            s,
            groups,
            n,
            p_f,
            t,
            hash_mode,
            master_seed,
            cohort,
            pairs,
            same_value_pairs,
        })
    }

    pub fn sources(&self) -> u32 {
        self.s
    }

    pub fn groups(&self) -> &[ValueGroup] {
        &self.groups
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn p_f(&self) -> f64 {
        self.p_f
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn hash_mode(&self) -> HashMode {
        self.hash_mode
    }

    /// Keys held by each source, in source order.
    pub fn key_counts(&self) -> &[u64] {
        self.cohort.counts()
    }

    pub fn cohort(&self) -> &CohortSpec {
        &self.cohort
    }

    /// Cross-source pairs per trial.
    pub fn pairs(&self) -> u128 {
        self.pairs
    }

    pub fn same_value_pairs(&self) -> u64 {
        self.same_value_pairs
    }

    pub fn diff_value_pairs(&self) -> u64 {
        (self.pairs - self.same_value_pairs as u128) as u64
    }
}

/// Seed for trial `index`:
/// `SHA-256("noisykey/trial/v1" ‖ le64(len(master)) ‖ master ‖ le64(index))`.
pub fn trial_seed(master_seed: &[u8], index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"noisykey/trial/v1");
    h.update((master_seed.len() as u64).to_le_bytes());
    h.update(master_seed);
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// Revelation tally for groups of one size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupTally {
    pub groups: u64,
    pub revealed: u64,
}

/// One trial's report plus the per-size revelation tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub report: MatchReport,
    pub revelation_by_size: BTreeMap<u64, GroupTally>,
}

fn random_code(n: usize, rng: &mut ChaCha20Rng) -> Result<Bits> {
    let words = (0..n.div_ceil(64)).map(|_| rng.next_u64()).collect();
    Bits::from_words(words, n)
}

/// Runs the pipeline once. Values are numbered in group order; within each
/// source, key ids follow the same order starting at 0.
pub fn run_trial(scenario: &Scenario, index: u64) -> Result<TrialOutcome> {
    let seed = trial_seed(&scenario.master_seed, index);
    let mut rng = ChaCha20Rng::from_seed(seed);
    let n = scenario.n as usize;

    let mut next_key = vec![0u64; scenario.s as usize];
    let mut keys = Vec::with_capacity(scenario.cohort.total_keys()? as usize);
    let mut labels: HashMap<KeyRef, u64> = HashMap::with_capacity(keys.capacity());
    let mut codes: HashMap<u64, HashCode> = HashMap::new();
    let mut value = 0u64;
    for g in &scenario.groups {
        for _ in 0..g.count {
            let code = match scenario.hash_mode {
                HashMode::Idealized => HashCode(random_code(n, &mut rng)?),
                HashMode::Keyed => hash_value(&value.to_le_bytes(), &seed, n)?,
            };
            for &src in &g.sources {
                let slot = &mut next_key[src as usize - 1];
                let key = NoisyKey::new(add_noise(code.bits(), scenario.p_f, &mut rng)?, src, *slot);
                *slot += 1;
                labels.insert(key.key_ref(), value);
                keys.push(key);
            }
            codes.insert(value, code);
            value += 1;
        }
    }

    let truth = Truth {
        labels: &labels,
        hash_codes: None,
    };
    let mut report = merge(&keys, scenario.t, Some(truth))?;
    let mut by_size: BTreeMap<u64, GroupTally> = BTreeMap::new();
    let mut revealed_keys = 0;
    for g in revelation_groups(&keys, &labels, &codes)? {
        let tally = by_size.entry(g.size as u64).or_default();
        tally.groups += 1;
        if g.revealed {
            tally.revealed += 1;
            revealed_keys += g.size as u64;
        }
    }
    report.revelations = Some(revealed_keys);
    Ok(TrialOutcome {
        report,
        revelation_by_size: by_size,
    })
}

/// Totals over a batch of trials. Merging is associative and commutative.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrialStats {
    pub trials: u64,
    pub observed_m: u64,
    pub observed_u: u64,
    /// Keys in revealed groups.
    pub observed_r: u64,
    pub pairs_same_value: u64,
    pub pairs_diff_value: u64,
    pub keys: u64,
    /// Trials with no matching error at all.
    pub error_free_trials: u64,
    pub sum_errors: u64,
    pub sum_errors_sq: u128,
    pub revelation_by_size: BTreeMap<u64, GroupTally>,
}

impl TrialStats {
    fn from_outcome(o: &TrialOutcome, scenario: &Scenario) -> Self {
        let m = o.report.false_matches.unwrap_or(0);
        let u = o.report.missed_matches.unwrap_or(0);
        let w = m + u;
        TrialStats {
            trials: 1,
            observed_m: m,
            observed_u: u,
            observed_r: o.report.revelations.unwrap_or(0),
            pairs_same_value: scenario.same_value_pairs(),
            pairs_diff_value: scenario.diff_value_pairs(),
            keys: o.report.keys as u64,
            error_free_trials: u64::from(w == 0),
            sum_errors: w,
            sum_errors_sq: (w as u128) * (w as u128),
            revelation_by_size: o.revelation_by_size.clone(),
        }
    }

    pub fn merge(mut self, other: TrialStats) -> TrialStats {
        self.trials += other.trials;
        self.observed_m += other.observed_m;
        self.observed_u += other.observed_u;
        self.observed_r += other.observed_r;
        self.pairs_same_value += other.pairs_same_value;
        self.pairs_diff_value += other.pairs_diff_value;
        self.keys += other.keys;
        self.error_free_trials += other.error_free_trials;
        self.sum_errors += other.sum_errors;
        self.sum_errors_sq += other.sum_errors_sq;
        for (z, t) in other.revelation_by_size {
            let e = self.revelation_by_size.entry(z).or_default();
            e.groups += t.groups;
            e.revealed += t.revealed;
        }
        self
    }
}

/// Runs trials `0..trials` in parallel and sums the outcomes.
pub fn run_trials(scenario: &Scenario, trials: u64) -> Result<TrialStats> {
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    (0..trials)
        .into_par_iter()
        .map(|i| run_trial(scenario, i).map(|o| TrialStats::from_outcome(&o, scenario)))
        .try_reduce(TrialStats::default, |a, b| Ok(a.merge(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

/// One empirical-versus-analytic row.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub name: String,
    pub empirical: f64,
    pub analytic: f64,
    pub stderr: f64,
    pub zscore: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Copy)]
enum Side {
    Both,
    /// Only an empirical value above the analytic one can fail.
    Upper,
    /// Only an empirical value below the analytic one can fail.
    Lower,
}

fn compare(name: String, empirical: f64, analytic: f64, stderr: f64, side: Side) -> Comparison {
    let d = empirical - analytic;
    let zscore = if stderr > 0.0 {
        d / stderr
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    };
    let fail = match side {
        Side::Both => zscore.abs() > FAIL_Z,
        Side::Upper => zscore > FAIL_Z,
        Side::Lower => zscore < -FAIL_Z,
    };
    Comparison {
        name,
        empirical,
        analytic,
        stderr,
        zscore,
        verdict: if fail { Verdict::Fail } else { Verdict::Pass },
    }
}

/// Rate of `hits` in `trials` Bernoulli(p) observations against `p`.
fn rate_row(name: String, hits: u64, trials: u64, p: f64) -> Comparison {
    let empirical = hits as f64 / trials as f64;
    let stderr = (p * (1.0 - p) / trials as f64).sqrt();
    compare(name, empirical, p, stderr, Side::Both)
}

/// Compares observed rates with the analytic values at the scenario's threshold.
pub fn compare_to_bounds(stats: &TrialStats, scenario: &Scenario) -> Result<Vec<Comparison>> {
    compare_at_threshold(stats, scenario, scenario.t)
}

/// As [`compare_to_bounds`], with the analytic side evaluated at threshold `t`.
///
/// Rows: `p_m` and `p_u` (skipped when no pair of that kind exists),
/// `p_r(z=K)` per group size present, then one-sided rows
/// `expected_errors` and `prob_all_correct`.
pub fn compare_at_threshold(stats: &TrialStats, scenario: &Scenario, t: u32) -> Result<Vec<Comparison>> {
    if stats.trials == 0 {
        return Err(invalid("no trials to compare"));
    }
    let (n, p_f) = (scenario.n as u64, scenario.p_f);
    let mut rows = Vec::new();
    if stats.pairs_diff_value > 0 {
        rows.push(rate_row("p_m".into(), stats.observed_m, stats.pairs_diff_value, mismatch_prob(n, t as u64)?));
    }
    if stats.pairs_same_value > 0 {
        rows.push(rate_row(
            "p_u".into(),
            stats.observed_u,
            stats.pairs_same_value,
            missed_match_prob(n, t as u64, p_f)?,
        ));
    }
    for (&z, tally) in &stats.revelation_by_size {
        rows.push(rate_row(format!("p_r(z={z})"), tally.revealed, tally.groups, revelation_prob(z, n, p_f)?));
    }

    let bounds = bound_set(&scenario.cohort, n, t as u64, p_f)?;
    let trials = stats.trials as f64;
    let mean = stats.sum_errors as f64 / trials;
    let var = (stats.sum_errors_sq as f64 / trials - mean * mean).max(0.0);
    let se_mean = (var / trials).sqrt();
    rows.push(compare("expected_errors".into(), mean, bounds.expected_errors, se_mean, Side::Upper));
    let frac = stats.error_free_trials as f64 / trials;
    let se_frac = (frac * (1.0 - frac) / trials).sqrt();
    rows.push(compare(
        "prob_all_correct".into(),
        frac,
        bounds.prob_all_correct_lb,
        se_frac,
        Side::Lower,
    ));
    Ok(rows)
}

pub const COMPARISON_HEADER: &str = "name,empirical,analytic,stderr,zscore,verdict";

/// CSV with a header row; numbers carry 17 significant digits.
pub fn comparisons_csv(rows: &[Comparison]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.name, r.empirical, r.analytic, r.stderr, r.zscore, r.verdict
        );
    }
    out
}

/// A parsed scenario file.
///
/// ```toml
/// sources = 2
/// groups = [{ sources = [1, 2], count = 100 }]
/// n = 32
/// p_f = 0.1
/// t = 10
/// hash_mode = "idealized"   # or "keyed"; optional
/// seed = "smoke"            # master seed, taken as UTF-8 bytes
/// trials = 1000
/// compare_t = 6             # optional: evaluate bounds at another threshold
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub trials: u64,
    pub compare_t: Option<u32>,
}

fn key_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("key `{key}`: {msg}"))
}

fn get_uint(table: &toml::Table, key: &str, required: bool) -> Result<Option<u64>> {
    match table.get(key) {
        None if required => Err(key_err(key, "missing")),
        None => Ok(None),
        Some(toml::Value::Integer(v)) if *v > 0 => Ok(Some(*v as u64)),
        Some(_) => Err(key_err(key, "expected a positive integer")),
    }
}

fn get_u32(table: &toml::Table, key: &str, required: bool) -> Result<Option<u32>> {
    get_uint(table, key, required)?
        .map(|v| u32::try_from(v).map_err(|_| key_err(key, "value too large")))
        .transpose()
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        const KEYS: [&str; 9] = ["sources", "groups", "n", "p_f", "t", "hash_mode", "seed", "trials", "compare_t"];
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        if let Some(k) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(key_err(k, "unknown key"));
        }
        let s = get_u32(&table, "sources", true)?.unwrap();
        let n = get_u32(&table, "n", true)?.unwrap();
        let t = get_u32(&table, "t", true)?.unwrap();
        let trials = get_uint(&table, "trials", true)?.unwrap();
        let compare_t = get_u32(&table, "compare_t", false)?;
        let p_f = match table.get("p_f") {
            None => return Err(key_err("p_f", "missing")),
            Some(toml::Value::Float(v)) => *v,
            Some(toml::Value::Integer(v)) => *v as f64,
            Some(_) => return Err(key_err("p_f", "expected a number")),
        };
        if !(0.0..=0.5).contains(&p_f) {
            return Err(key_err("p_f", format!("{p_f} outside [0, 0.5]")));
        }
        let hash_mode = match table.get("hash_mode") {
            None => HashMode::Idealized,
            Some(toml::Value::String(m)) if m == "idealized" => HashMode::Idealized,
            Some(toml::Value::String(m)) if m == "keyed" => HashMode::Keyed,
            Some(_) => return Err(key_err("hash_mode", "expected \"idealized\" or \"keyed\"")),
        };
        let seed = match table.get("seed") {
            None => return Err(key_err("seed", "missing")),
            Some(toml::Value::String(s)) => s.as_bytes().to_vec(),
            Some(_) => return Err(key_err("seed", "expected a string")),
        };
        let groups = match table.get("groups") {
            None => return Err(key_err("groups", "missing")),
            Some(toml::Value::Array(items)) if !items.is_empty() => items
                .iter()
                .enumerate()
                .map(|(i, item)| parse_group(item, i, s))
                .collect::<Result<Vec<_>>>()?,
            Some(_) => return Err(key_err("groups", "expected a non-empty array of tables")),
        };
        if t > n {
            return Err(key_err("t", format!("{t} exceeds n = {n}")));
        }
        if let Some(ct) = compare_t.filter(|&ct| ct > n) {
            return Err(key_err("compare_t", format!("{ct} exceeds n = {n}")));
        }
        let scenario = Scenario::new(s, groups, n, p_f, t, hash_mode, seed).map_err(|e| match e {
            Error::InvalidParameter(m) => Error::InvalidInput(m),
            other => other,
        })?;
        Ok(ScenarioConfig {
            scenario,
            trials,
            compare_t,
        })
    }
}

fn parse_group(item: &toml::Value, i: usize, s: u32) -> Result<ValueGroup> {
    let key = format!("groups[{i}]");
    let toml::Value::Table(t) = item else {
        return Err(key_err(&key, "expected a table"));
    };
    if let Some(k) = t.keys().find(|k| *k != "sources" && *k != "count") {
        return Err(key_err(&format!("{key}.{k}"), "unknown key"));
    }
    let count = get_uint(t, "count", true).map_err(|_| key_err(&format!("{key}.count"), "expected a positive integer"))?;
    let sources = match t.get("sources") {
        Some(toml::Value::Array(ids)) if !ids.is_empty() => ids
            .iter()
            .map(|v| match v {
                toml::Value::Integer(x) if *x >= 1 && *x <= s as i64 => Ok(*x as u32),
                _ => Err(key_err(&format!("{key}.sources"), format!("entries must be source ids in 1..={s}"))),
            })
            .collect::<Result<BTreeSet<u32>>>()?,
        _ => return Err(key_err(&format!("{key}.sources"), "expected a non-empty array")),
    };
    Ok(ValueGroup {
        sources,
        count: count.unwrap(),
    })
}
