//! Closed-form matching and revelation probabilities.
//!
//! For a cross-source pair of noisy keys with matching threshold `t`
//! (match iff Hamming distance `< t`):
//!
//! * false match, different values: `p_M = B(0, t−1; n, ½)`; independent of `p_f`
//!   because noise preserves the uniform bit distribution of unrelated codes;
//! * missed match, equal values: `p_U = B(t, n; n, p_Δ)` with `p_Δ = 2 p_f (1 − p_f)`;
//! * either error: `p_W ≤ max(p_M, p_U)`, so `E[w] ≤ max(p_M, p_U)·|Q|`.
//!
//! A group of `z` same-value keys reveals its hash code through the
//! positionwise median with probability `p_R(z) = B(0, ⌊z/2⌋; z, p_f)^n`, and
//! `E[r] ≤ max_{z ≤ s} p_R(z) · Σ m_i`.

use serde::{Deserialize, Serialize};

use crate::binomial::{binom_range_prob, LogProb};
use crate::error::{check_flip_prob, invalid, Error, Result};

/// Key counts per data source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSpec {
    m: Vec<u64>,
}

impl CohortSpec {
    pub fn new(m: Vec<u64>) -> Result<Self> {
        if m.is_empty() {
            return Err(invalid("cohort needs at least one data source"));
        }
        if let Some(i) = m.iter().position(|&x| x == 0) {
            return Err(invalid(format!("source {} has no keys", i + 1)));
        }
        Ok(CohortSpec { m })
    }

    /// `s` sources holding `m` keys each.
    pub fn uniform(s: usize, m: u64) -> Result<Self> {
        CohortSpec::new(vec![m; s])
    }

    pub fn sources(&self) -> usize {
        self.m.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.m
    }

    pub fn total_keys(&self) -> Result<u128> {
        self.m
            .iter()
            .try_fold(0u128, |acc, &x| acc.checked_add(u128::from(x)))
            .ok_or_else(|| Error::Overflow("total key count".into()))
    }
}

/// Bound values for one `(cohort, n, t, p_f)` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub p_m: f64,
    pub p_u: f64,
    pub p_w_bound: f64,
    pub pairs: u128,
    pub expected_errors: f64,
    pub prob_all_correct_lb: f64,
    pub p_r_max: f64,
    pub expected_revealed_ub: f64,
}

fn check_threshold(n: u64, t: u64) -> Result<()> {
    if n == 0 {
        return Err(invalid("key length must be at least 1 bit"));
    }
    if t == 0 || t > n {
        return Err(invalid(format!("threshold t = {t} outside [1, {n}]")));
    }
    Ok(())
}

/// Probability that one position differs between two noisy copies of the same code.
pub fn delta_prob(p_f: f64) -> Result<f64> {
    check_flip_prob(p_f)?;
    Ok(2.0 * p_f * (1.0 - p_f))
}

pub fn mismatch_log(n: u64, t: u64) -> Result<LogProb> {
    check_threshold(n, t)?;
    binom_range_prob(0, t - 1, n, 0.5)
}

/// `p_M`: probability two keys of different values fall within distance `t − 1`.
pub fn mismatch_prob(n: u64, t: u64) -> Result<f64> {
    Ok(mismatch_log(n, t)?.prob())
}

pub fn missed_match_log(n: u64, t: u64, p_f: f64) -> Result<LogProb> {
    check_threshold(n, t)?;
    let p_delta = delta_prob(p_f)?;
    binom_range_prob(t, n, n, p_delta)
}

/// `p_U`: probability two keys of the same value end up at distance `≥ t`.
pub fn missed_match_prob(n: u64, t: u64, p_f: f64) -> Result<f64> {
    Ok(missed_match_log(n, t, p_f)?.prob())
}

/// `|Q|`, the number of key pairs that span two different sources.
pub fn pair_count(cohort: &CohortSpec) -> Result<u128> {
    let overflow = || Error::Overflow("pair count exceeds 128 bits".into());
    let choose2 = |x: u128| -> Result<u128> {
        x.checked_mul(x.saturating_sub(1))
            .map(|v| v / 2)
            .ok_or_else(overflow)
    };
    let all = choose2(cohort.total_keys()?)?;
    let same = cohort
        .counts()
        .iter()
        .try_fold(0u128, |acc, &m| acc.checked_add(choose2(u128::from(m))?).ok_or_else(overflow))?;
    Ok(all - same)
}

pub fn pair_error_log(n: u64, t: u64, p_f: f64) -> Result<LogProb> {
    let m = mismatch_log(n, t)?;
    let u = missed_match_log(n, t, p_f)?;
    Ok(if m.ln() >= u.ln() { m } else { u })
}

/// `max(p_M, p_U)`, the per-pair bound on either kind of matching error.
pub fn pair_error_bound(n: u64, t: u64, p_f: f64) -> Result<f64> {
    Ok(pair_error_log(n, t, p_f)?.prob())
}

/// Upper bound on the expected number of matching errors over all of `Q`.
pub fn expected_match_errors(cohort: &CohortSpec, n: u64, t: u64, p_f: f64) -> Result<f64> {
    let pairs = pair_count(cohort)?;
    let p_w = pair_error_bound(n, t, p_f)?;
    Ok(if pairs == 0 { 0.0 } else { p_w * pairs as f64 })
}

/// Markov bound on `P(w ≥ h)`.
pub fn match_error_tail(cohort: &CohortSpec, n: u64, t: u64, p_f: f64, h: f64) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(invalid(format!("tail level h = {h} must be positive")));
    }
    let e = expected_match_errors(cohort, n, t, p_f)?;
    Ok((e / h).min(1.0))
}

/// Lower bound on the probability that no pair in `Q` is mismatched or missed.
pub fn prob_all_correct(cohort: &CohortSpec, n: u64, t: u64, p_f: f64) -> Result<f64> {
    let e = expected_match_errors(cohort, n, t, p_f)?;
    Ok((1.0 - e).max(0.0))
}

pub fn revelation_log(z: u64, n: u64, p_f: f64) -> Result<LogProb> {
    if z == 0 {
        return Err(invalid("group size z must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("key length must be at least 1 bit"));
    }
    check_flip_prob(p_f)?;
    let per_bit = binom_range_prob(0, z / 2, z, p_f)?;
    Ok(LogProb::new(n as f64 * per_bit.ln()))
}

/// `p_R(z)`: probability the median of `z` same-value keys equals their hash code.
pub fn revelation_prob(z: u64, n: u64, p_f: f64) -> Result<f64> {
    Ok(revelation_log(z, n, p_f)?.prob())
}

/// Largest `p_R(z)` over group sizes `1..=s` with the maximizing `z`
/// (smallest `z` on ties).
pub fn revelation_bound_log(s: u64, n: u64, p_f: f64) -> Result<(u64, LogProb)> {
    if s == 0 {
        return Err(invalid("number of sources must be at least 1"));
    }
    let mut best = (1, revelation_log(1, n, p_f)?);
    for z in 2..=s {
        let l = revelation_log(z, n, p_f)?;
        if l.ln() > best.1.ln() {
            best = (z, l);
        }
    }
    Ok(best)
}

/// `max_{z ∈ 1..=s} p_R(z)`.
pub fn revelation_bound(s: u64, n: u64, p_f: f64) -> Result<f64> {
    Ok(revelation_bound_log(s, n, p_f)?.1.prob())
}

/// Upper bound on the expected number of keys whose hash code is revealed.
pub fn expected_revealed(cohort: &CohortSpec, n: u64, p_f: f64) -> Result<f64> {
    let bound = revelation_bound(cohort.sources() as u64, n, p_f)?;
    Ok(bound * cohort.total_keys()? as f64)
}

/// Every bound for one configuration.
pub fn bound_set(cohort: &CohortSpec, n: u64, t: u64, p_f: f64) -> Result<BoundSet> {
    let p_m = mismatch_prob(n, t)?;
    let p_u = missed_match_prob(n, t, p_f)?;
    let p_w_bound = p_m.max(p_u);
    let pairs = pair_count(cohort)?;
    let expected_errors = if pairs == 0 { 0.0 } else { p_w_bound * pairs as f64 };
    let p_r_max = revelation_bound(cohort.sources() as u64, n, p_f)?;
    Ok(BoundSet {
        p_m,
        p_u,
        p_w_bound,
        pairs,
        expected_errors,
        prob_all_correct_lb: (1.0 - expected_errors).max(0.0),
        p_r_max,
        expected_revealed_ub: p_r_max * cohort.total_keys()? as f64,
    })
}
