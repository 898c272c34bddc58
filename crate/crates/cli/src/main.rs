use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisykey::bitkeys::{hash_value, session_id, KeySetFile};
use noisykey::bounds::bound_set;
use noisykey::figures::{FigureId, FigureRequest};
use noisykey::matcher::{merge, Truth};
use noisykey::planner::{min_key_length, plan_at_length, FlipStrategy, DEFAULT_MAX_N};
use noisykey::simulator::{compare_at_threshold, comparisons_csv, run_trials, ScenarioConfig, Verdict};
use noisykey::{BoundSet, CohortSpec, Error, HashCode, KeyRef, NoiseConfig, Plan, PlanOptions, Targets};

mod range;

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_VALIDATION: u8 = 5;
const EXIT_INPUT: u8 = 6;
const EXIT_CONFLICT: u8 = 7;

/// Noisy hash keys: planning, bounds, key generation, matching and simulation.
#[derive(Parser)]
#[command(name = "noisykey", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the shortest key length meeting both targets.
    Plan(PlanArgs),
    /// Evaluate every bound for one configuration as a CSV row.
    Bounds(BoundsArgs),
    /// Hash and noise a file of values, one per line.
    Keygen(KeygenArgs),
    /// Match key-set files and report clusters.
    Match(MatchArgs),
    /// Run a Monte Carlo scenario and compare with the bounds.
    Simulate(SimulateArgs),
    /// Emit sweep data for one of the standard plots.
    Figure(FigureArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Keys per source, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sources: Vec<u64>,
    #[arg(long)]
    revelation_target: f64,
    #[arg(long)]
    match_confidence: f64,
    /// Candidate key lengths are multiples of this.
    #[arg(long, default_value_t = 10)]
    grid: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_N)]
    max_n: u64,
    /// Evaluate at this key length instead of searching.
    #[arg(long)]
    n: Option<u64>,
    /// Also sweep this many flip probabilities above the minimum.
    #[arg(long)]
    joint_sweep: Option<u32>,
    /// Write the plan as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    t: u64,
    #[arg(long)]
    pf: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    sources: Vec<u64>,
}

#[derive(Args)]
struct KeygenArgs {
    /// Values, one per line.
    #[arg(long)]
    input: PathBuf,
    /// Shared hash seed, hex.
    #[arg(long)]
    seed: String,
    /// Private noise seed, hex. Defaults to the hash seed.
    #[arg(long)]
    noise_seed: Option<String>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    pf: f64,
    #[arg(long)]
    source_id: u32,
    #[arg(long)]
    out: PathBuf,
    /// Also write `source,key,value` truth records.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long, num_args = 1.., required = true)]
    keys: Vec<PathBuf>,
    #[arg(long)]
    t: u32,
    /// Truth files of `source,key,value` records.
    #[arg(long, num_args = 1..)]
    truth: Vec<PathBuf>,
    /// Hash seed (hex) used to score revelations; needs --truth.
    #[arg(long)]
    hash_seed: Option<String>,
    /// Exit with a distinct code when any cluster is conflicted.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long)]
    id: String,
    #[arg(long, value_parser = range::u64_list)]
    n: Option<range::U64List>,
    #[arg(long, value_parser = range::u64_list)]
    s: Option<range::U64List>,
    #[arg(long, value_parser = range::u64_list)]
    m: Option<range::U64List>,
    #[arg(long, value_parser = range::f64_list)]
    pf: Option<range::F64List>,
    #[arg(long, alias = "target", value_parser = range::f64_list)]
    targets: Option<range::F64List>,
    #[arg(long, value_parser = range::f64_list)]
    t_fraction: Option<range::F64List>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    grid: Option<u64>,
    #[arg(long)]
    max_n: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

type CmdResult = Result<u8, Failure>;

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) => EXIT_USAGE,
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::InvalidInput(_) | Error::Parse { .. } | Error::Overflow(_) | Error::Refused(_) => EXIT_INPUT,
        };
        fail(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| fail(EXIT_IO, format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_hex(flag: &str, s: &str) -> Result<Vec<u8>, Failure> {
    hex::decode(s).map_err(|e| fail(EXIT_USAGE, format!("--{flag}: {e}")))
}

fn prob(x: f64) -> String {
    format!("{x:.16e}")
}

fn bound_lines(out: &mut String, b: &BoundSet) {
    let _ = writeln!(out, "pairs={}", b.pairs);
    for (name, v) in [
        ("p_m", b.p_m),
        ("p_u", b.p_u),
        ("p_w_bound", b.p_w_bound),
        ("expected_errors", b.expected_errors),
        ("prob_all_correct_lb", b.prob_all_correct_lb),
        ("p_r_max", b.p_r_max),
        ("expected_revealed_ub", b.expected_revealed_ub),
    ] {
        let _ = writeln!(out, "{name}={}", prob(v));
    }
}

fn plan_text(plan: &Plan) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n={}", plan.n);
    let _ = writeln!(out, "p_f={}", prob(plan.p_f));
    let _ = writeln!(out, "t={}", plan.t);
    bound_lines(&mut out, &plan.bounds);
    if plan.bounds.pairs == 0 {
        let _ = writeln!(out, "note=single source, no cross-source pairs to match");
    }
    out
}

fn cmd_plan(a: PlanArgs) -> CmdResult {
    let cohort = CohortSpec::new(a.sources)?;
    let targets = Targets::new(a.revelation_target, a.match_confidence)?;
    let flip = match a.joint_sweep {
        Some(steps) => FlipStrategy::JointSweep { steps },
        None => FlipStrategy::Minimal,
    };
    let result = match a.n {
        Some(n) => plan_at_length(&cohort, n, targets, flip),
        None => min_key_length(
            &cohort,
            targets,
            PlanOptions {
                grid_step: a.grid,
                max_n: a.max_n,
                flip,
            },
        ),
    };
    let plan = match result {
        Ok(plan) => plan,
        Err(Error::Infeasible(inf)) => {
            let mut out = String::from("feasible=false\n");
            if let Some(n) = inf.max_n {
                let _ = writeln!(out, "max_n={n}");
            }
            if let Some(r) = inf.achievable_revelation {
                let _ = writeln!(out, "achievable_revelation={}", prob(r));
            }
            if let Some(c) = inf.achievable_confidence {
                let _ = writeln!(out, "achievable_confidence={}", prob(c));
            }
            print!("{out}");
            return Err(fail(EXIT_INFEASIBLE, format!("infeasible: {inf}")));
        }
        Err(e) => return Err(e.into()),
    };
    let feasible = plan.meets_targets();
    print!("feasible={feasible}\n{}", plan_text(&plan));
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&plan).expect("plan serializes");
        write_or_print(Some(path), &(json + "\n"))?;
    }
    Ok(if feasible { 0 } else { EXIT_INFEASIBLE })
}

fn cmd_bounds(a: BoundsArgs) -> CmdResult {
    let cohort = CohortSpec::new(a.sources)?;
    let b = bound_set(&cohort, a.n, a.t, a.pf)?;
    println!("n,t,p_f,pairs,p_m,p_u,p_w_bound,expected_errors,prob_all_correct_lb,p_r_max,expected_revealed_ub");
    println!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        a.n,
        a.t,
        prob(a.pf),
        b.pairs,
        prob(b.p_m),
        prob(b.p_u),
        prob(b.p_w_bound),
        prob(b.expected_errors),
        prob(b.prob_all_correct_lb),
        prob(b.p_r_max),
        prob(b.expected_revealed_ub)
    );
    Ok(0)
}

fn cmd_keygen(a: KeygenArgs) -> CmdResult {
    let hash_seed = parse_hex("seed", &a.seed)?;
    let noise_seed = match &a.noise_seed {
        Some(s) => parse_hex("noise-seed", s)?,
        None => {
            eprintln!("warning: no --noise-seed; noise is reproducible by anyone holding the hash seed");
            hash_seed.clone()
        }
    };
    let config = NoiseConfig::new(a.n, a.pf, hash_seed.clone(), noise_seed)?;
    let text = read(&a.input)?;
    let mut keys = Vec::new();
    let mut truth = String::new();
    let mut seen = HashMap::new();
    for (i, value) in text.lines().enumerate() {
        let value = value.trim_end_matches('\r');
        if let Some(first) = seen.insert(value, i + 1) {
            return Err(fail(
                EXIT_INPUT,
                format!("line {}: value repeats line {first}", i + 1),
            ));
        }
        let key = config.noisy_key(value.as_bytes(), a.source_id, i as u64)?;
        let _ = writeln!(truth, "{},{},{value}", a.source_id, i);
        keys.push(key);
    }
    let file = KeySetFile::new(a.n, session_id(&hash_seed), keys)?;
    write_or_print(Some(&a.out), &file.to_text())?;
    if let Some(path) = &a.truth_out {
        write_or_print(Some(path), &truth)?;
    }
    Ok(0)
}

fn parse_truth(path: &Path, into: &mut HashMap<KeyRef, String>) -> Result<(), Failure> {
    let text = read(path)?;
    for (i, line) in text.lines().enumerate() {
        let bad = |m: &str| fail(EXIT_INPUT, format!("{} line {}: {m}", path.display(), i + 1));
        let mut parts = line.trim_end_matches('\r').splitn(3, ',');
        let (Some(s), Some(k), Some(v)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected source,key,value"));
        };
        let s = s.parse().map_err(|_| bad("bad source id"))?;
        let k = k.parse().map_err(|_| bad("bad key id"))?;
        if into.insert(KeyRef::new(s, k), v.to_string()).is_some() {
            return Err(bad("duplicate key"));
        }
    }
    Ok(())
}

fn cmd_match(a: MatchArgs) -> CmdResult {
    let mut files = Vec::new();
    for path in &a.keys {
        let f = KeySetFile::parse(&read(path)?)
            .map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
        files.push((path, f));
    }
    let (first_path, first) = &files[0];
    for (path, f) in &files[1..] {
        if f.n != first.n {
            return Err(fail(
                EXIT_INPUT,
                format!(
                    "{} declares n={} but {} declares n={}",
                    path.display(),
                    f.n,
                    first_path.display(),
                    first.n
                ),
            ));
        }
        if f.session != first.session {
            return Err(fail(
                EXIT_INPUT,
                format!("{} was hashed under a different seed than {}", path.display(), first_path.display()),
            ));
        }
    }
    let n = first.n;
    let session = first.session.clone();
    let keys: Vec<_> = files.into_iter().flat_map(|(_, f)| f.keys).collect();

    let report = if a.truth.is_empty() {
        if a.hash_seed.is_some() {
            return Err(fail(EXIT_USAGE, "--hash-seed needs --truth"));
        }
        merge::<String>(&keys, a.t, None)?
    } else {
        let mut labels = HashMap::new();
        for path in &a.truth {
            parse_truth(path, &mut labels)?;
        }
        let codes = match &a.hash_seed {
            Some(h) => {
                let seed = parse_hex("hash-seed", h)?;
                if session_id(&seed) != session {
                    return Err(fail(EXIT_INPUT, "--hash-seed does not match the key files' session"));
                }
                let mut codes: HashMap<String, HashCode> = HashMap::new();
                for v in labels.values() {
                    if !codes.contains_key(v) {
                        codes.insert(v.clone(), hash_value(v.as_bytes(), &seed, n)?);
                    }
                }
                Some(codes)
            }
            None => None,
        };
        merge(
            &keys,
            a.t,
            Some(Truth {
                labels: &labels,
                hash_codes: codes.as_ref(),
            }),
        )?
    };
    write_or_print(a.out.as_deref(), &report.to_text())?;
    if a.strict && report.conflicted_clusters > 0 {
        return Err(fail(
            EXIT_CONFLICT,
            format!("{} conflicted clusters", report.conflicted_clusters),
        ));
    }
    Ok(0)
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let config = ScenarioConfig::parse(&read(&a.config)?)
        .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", a.config.display())))?;
    let stats = run_trials(&config.scenario, config.trials)?;
    let t = config.compare_t.unwrap_or(config.scenario.t());
    let rows = compare_at_threshold(&stats, &config.scenario, t)?;
    write_or_print(a.out.as_deref(), &comparisons_csv(&rows))?;
    let failed: Vec<_> = rows
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        Err(fail(EXIT_VALIDATION, format!("FAIL: {}", failed.join(", "))))
    }
}

fn cmd_figure(a: FigureArgs) -> CmdResult {
    let id: FigureId = a.id.parse().map_err(|e: Error| fail(EXIT_USAGE, e.to_string()))?;
    let req = FigureRequest {
        n: a.n.map(|l| l.0).unwrap_or_default(),
        s: a.s.map(|l| l.0).unwrap_or_default(),
        m: a.m.map(|l| l.0).unwrap_or_default(),
        pf: a.pf.map(|l| l.0).unwrap_or_default(),
        targets: a.targets.map(|l| l.0).unwrap_or_default(),
        t_fractions: a.t_fraction.map(|l| l.0).unwrap_or_default(),
        confidence: a.confidence,
        grid: a.grid,
        max_n: a.max_n,
    };
    let csv = req.render(id)?;
    write_or_print(a.out.as_deref(), &csv)?;
    Ok(0)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("NOISYKEY_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .parse()
        .map_err(|_| fail(EXIT_USAGE, format!("NOISYKEY_THREADS={v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| fail(EXIT_USAGE, e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Keygen(a) => cmd_keygen(a),
        Command::Match(a) => cmd_match(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Figure(a) => cmd_figure(a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
