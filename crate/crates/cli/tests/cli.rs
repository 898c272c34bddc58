use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use noisykey::bounds::bound_set;
use noisykey::CohortSpec;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisykey"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// `name=value` lookup in line-oriented output.
fn field(text: &str, name: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{name}=")))
        .unwrap_or_else(|| panic!("no {name} in:\n{text}"))
        .to_string()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn plan_for_two_large_sources() {
    let o = run(&["plan", "--sources", "64000,64000", "--revelation-target", "0.05", "--match-confidence", "0.95"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let n: u64 = field(&text, "n").parse().unwrap();
    assert!(n <= 400);
    assert_eq!(field(&text, "pairs"), "4096000000");

    let o = run(&[
        "plan", "--sources", "64000,64000", "--revelation-target", "0.05", "--match-confidence", "0.95", "--n", "400",
    ]);
    let conf: f64 = field(&stdout(&o), "prob_all_correct_lb").parse().unwrap();
    assert!(conf >= 0.999);
}

#[test]
fn plan_single_source_and_json() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("plan.json");
    let o = run(&[
        "plan", "--sources", "5", "--revelation-target", "0.05", "--match-confidence", "0.95", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(field(&text, "pairs"), "0");
    assert!(text.contains("note="));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(json["bounds"]["pairs"], 0);
}

#[test]
fn plan_infeasible_reports_achievable_bound() {
    let o = run(&[
        "plan", "--sources", "100,100", "--revelation-target", "1e-99", "--match-confidence", "0.95", "--max-n", "100",
    ]);
    assert_eq!(code(&o), 3);
    let text = stdout(&o);
    assert_eq!(field(&text, "feasible"), "false");
    let r: f64 = field(&text, "achievable_revelation").parse().unwrap();
    assert!(r > 1e-99 && r < 1.0);
}

#[test]
fn plan_usage_errors() {
    assert_eq!(code(&run(&["plan", "--sources", "5", "--revelation-target", "x", "--match-confidence", "0.9"])), 2);
    assert_eq!(code(&run(&["plan", "--sources", "5", "--revelation-target", "1.5", "--match-confidence", "0.9"])), 2);
}

const BOUNDS_HEADER: &str =
    "n,t,p_f,pairs,p_m,p_u,p_w_bound,expected_errors,prob_all_correct_lb,p_r_max,expected_revealed_ub";

#[test]
fn bounds_rows() {
    let o = run(&["bounds", "--n", "2", "--t", "1", "--pf", "0.5", "--sources", "2,2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), BOUNDS_HEADER);
    let row = &csv_rows(&text)[0];
    assert_eq!(row[5].parse::<f64>().unwrap(), 0.75);

    let row = &csv_rows(&stdout(&run(&["bounds", "--n", "8", "--t", "1", "--pf", "0", "--sources", "1,1"])))[0];
    assert!((row[4].parse::<f64>().unwrap() - 0.00390625).abs() <= 1e-15);
    assert_eq!(row[5].parse::<f64>().unwrap(), 0.0);

    let row = &csv_rows(&stdout(&run(&["bounds", "--n", "400", "--t", "125", "--pf", "0.0864", "--sources", "64000,64000"])))[0];
    assert_eq!(row[3], "4096000000");
}

#[test]
fn bounds_match_library_exactly() {
    let o = run(&["bounds", "--n", "300", "--t", "80", "--pf", "0.1", "--sources", "40,50,60"]);
    let row = &csv_rows(&stdout(&o))[0];
    let b = bound_set(&CohortSpec::new(vec![40, 50, 60]).unwrap(), 300, 80, 0.1).unwrap();
    let fields = [b.p_m, b.p_u, b.p_w_bound, b.expected_errors, b.prob_all_correct_lb, b.p_r_max, b.expected_revealed_ub];
    for (i, v) in fields.iter().enumerate() {
        assert_eq!(row[4 + i].parse::<f64>().unwrap(), *v, "column {}", 4 + i);
    }
    assert_eq!(row[3], b.pairs.to_string());
}

#[test]
fn bounds_range_violation_is_usage_error() {
    assert_eq!(code(&run(&["bounds", "--n", "10", "--t", "11", "--pf", "0.1", "--sources", "2,2"])), 2);
    assert_eq!(code(&run(&["bounds", "--n", "10", "--t", "3", "--pf", "0.7", "--sources", "2,2"])), 2);
}

struct Keys {
    dir: TempDir,
}

impl Keys {
    fn new() -> Self {
        Keys { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn keygen(&self, values: &str, source: u32, pf: &str, n: &str) -> (String, String) {
        let input = self.write(&format!("values{source}.txt"), values);
        let out = self.path(&format!("keys{source}.nkf"));
        let truth = self.path(&format!("truth{source}.csv"));
        let o = run(&[
            "keygen", "--input", &input, "--seed", "a1b2", "--noise-seed", &format!("0{source}"), "--n", n, "--pf", pf,
            "--source-id", &source.to_string(), "--out", &out, "--truth-out", &truth,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (out, truth)
    }
}

#[test]
fn keygen_is_deterministic() {
    let k = Keys::new();
    let (out, _) = k.keygen("x\ny\nz\n", 1, "0.2", "96");
    let first = std::fs::read(&out).unwrap();
    let (out, _) = k.keygen("x\ny\nz\n", 1, "0.2", "96");
    assert_eq!(first, std::fs::read(&out).unwrap());
    assert!(String::from_utf8(first).unwrap().starts_with("nkf1,n=96,session="));
}

#[test]
fn noiseless_shared_value_has_identical_bits() {
    let k = Keys::new();
    let (a, _) = k.keygen("shared\nonly-a\n", 1, "0", "64");
    let (b, _) = k.keygen("only-b\nshared\n", 2, "0", "64");
    let hex = |path: &str, line: usize| {
        std::fs::read_to_string(path).unwrap().lines().nth(line).unwrap().rsplit(',').next().unwrap().to_string()
    };
    assert_eq!(hex(&a, 1), hex(&b, 2));
    assert_ne!(hex(&a, 2), hex(&b, 1));
}

#[test]
fn keygen_errors() {
    let k = Keys::new();
    let input = k.write("v.txt", "a\n");
    let out = k.path("o.nkf");
    let base = ["keygen", "--input", &input, "--n", "32", "--source-id", "1", "--out", &out];
    let with = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        code(&run(&args))
    };
    assert_eq!(with(&["--seed", "00", "--pf", "0.6"]), 2);
    assert_eq!(with(&["--seed", "zz", "--pf", "0.1"]), 2);
    let missing = k.path("missing.txt");
    let o = run(&["keygen", "--input", &missing, "--seed", "00", "--n", "32", "--pf", "0.1", "--source-id", "1", "--out", &out]);
    assert_eq!(code(&o), 4);
    let dup = k.write("dup.txt", "a\na\n");
    let o = run(&["keygen", "--input", &dup, "--seed", "00", "--n", "32", "--pf", "0.1", "--source-id", "1", "--out", &out]);
    assert_eq!(code(&o), 6);
}

#[test]
fn match_noiseless_full_overlap() {
    let k = Keys::new();
    let values = "v1\nv2\nv3\nv4\n";
    let (a, ta) = k.keygen(values, 1, "0", "64");
    let (b, tb) = k.keygen(values, 2, "0", "64");
    let o = run(&["match", "--keys", &a, &b, "--t", "1", "--truth", &ta, &tb, "--hash-seed", "a1b2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(field(&text, "clusters"), "4");
    assert_eq!(field(&text, "conflicted_clusters"), "0");
    assert_eq!(field(&text, "total_errors"), "0");
    assert_eq!(field(&text, "revelations"), "8");
    assert!(text.lines().filter(|l| l.starts_with("cluster=")).all(|l| l.split(' ').count() == 2));
}

#[test]
fn match_planted_fixture() {
    let k = Keys::new();
    let a = k.write("a.nkf", "nkf1,n=8,session=0011223344556677\n1,0,00\n1,1,0f\n");
    let b = k.write("b.nkf", "nkf1,n=8,session=0011223344556677\n2,0,80\n2,1,ff\n2,2,8f\n2,3,f0\n");
    let truth = k.write("truth.csv", "1,0,a\n1,1,b\n2,0,a\n2,1,c\n2,2,d\n2,3,b\n");
    let o = run(&["match", "--keys", &a, &b, "--t", "2", "--truth", &truth]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(field(&text, "false_matches"), "1");
    assert_eq!(field(&text, "missed_matches"), "1");
    assert_eq!(field(&text, "pairs"), "8");
}

#[test]
fn match_rejects_mixed_lengths_and_flags_conflicts() {
    let k = Keys::new();
    let a = k.write("a.nkf", "nkf1,n=8,session=00\n1,0,00\n1,1,01\n");
    let b = k.write("b.nkf", "nkf1,n=16,session=00\n2,0,0000\n");
    assert_eq!(code(&run(&["match", "--keys", &a, &b, "--t", "2"])), 6);

    let c = k.write("c.nkf", "nkf1,n=8,session=00\n2,0,00\n");
    let o = run(&["match", "--keys", &a, &c, "--t", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&stdout(&o), "conflicted_clusters"), "1");
    assert_eq!(code(&run(&["match", "--keys", &a, &c, "--t", "2", "--strict"])), 7);

    let other = k.write("d.nkf", "nkf1,n=8,session=01\n2,0,00\n");
    assert_eq!(code(&run(&["match", "--keys", &a, &other, "--t", "2"])), 6);
}

#[test]
fn simulate_smoke_passes_quickly() {
    let start = Instant::now();
    let path = scenario("smoke.scenario");
    let o = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert!(start.elapsed().as_secs() < 10);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.starts_with("name,empirical,analytic,stderr,zscore,verdict\n"));
    assert!(csv_rows(&text).iter().all(|r| r[5] == "PASS"));
    assert_eq!(text, stdout(&run(&["simulate", "--config", path.to_str().unwrap()])));
}

#[test]
fn simulate_negative_control_fails() {
    let path = scenario("negative_control.scenario");
    let o = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert!(csv_rows(&stdout(&o)).iter().any(|r| r[5] == "FAIL"));
}

#[test]
fn simulate_malformed_config_names_key() {
    let k = Keys::new();
    let text = std::fs::read_to_string(scenario("smoke.scenario")).unwrap().replace("p_f = 0.1", "p_f = \"high\"");
    let cfg = k.write("bad.scenario", &text);
    let o = run(&["simulate", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("p_f"));
}

#[test]
fn figure_min_flip_anchor() {
    let o = run(&["figure", "--id", "min-flip", "--n", "50..1000:50", "--s", "2", "--targets", "0.05,0.01"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("n,target,min_pf\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 40);
    let at50 = rows.iter().find(|r| r[0] == "50" && r[1] == "0.05").unwrap();
    let pf: f64 = at50[2].parse().unwrap();
    assert!((0.23..=0.26).contains(&pf));
}

#[test]
fn figure_pair_count_and_pair_error() {
    let o = run(&["figure", "--id", "pair-count", "--m", "1000..64000:1000", "--s", "2..5"]);
    let rows = csv_rows(&stdout(&o));
    let r = rows.iter().find(|r| r[0] == "64000" && r[1] == "2").unwrap();
    let l: f64 = r[2].parse().unwrap();
    assert!(l > 9.0 && l < 10.0);

    let o = run(&["figure", "--id", "pair-error", "--n", "100", "--s", "5", "--target", "0.05"]);
    let rows = csv_rows(&stdout(&o));
    assert!(rows[0][4].parse::<f64>().unwrap() < 0.05);
}

#[test]
fn figure_schemas_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cases: [(&str, &[&str], &str); 7] = [
        ("required-bits", &["--m", "1000,4000", "--s", "2"], "m,s,n_required"),
        ("revelation-curve", &["--n", "50..100:25", "--pf", "0.1..0.3:0.1"], "n,pf,p_r_bound"),
        ("min-flip", &["--n", "100", "--targets", "0.05"], "n,target,min_pf"),
        ("mismatch-curve", &["--n", "100..400:100", "--t-fraction", "0.25,0.3"], "n,t_fraction,p_m"),
        ("missed-curve", &["--n", "300", "--t-fraction", "0.25"], "n,t_fraction,pf_used,p_u"),
        ("pair-error", &["--n", "100,200", "--s", "2..4"], "n,s,pf_used,t_opt,p_w"),
        ("pair-count", &["--m", "10", "--s", "1..3"], "m,s,log10_pairs"),
    ];
    for (id, flags, header) in cases {
        let out = dir.path().join(format!("{id}.csv"));
        let mut args = vec!["figure", "--id", id, "--out", out.to_str().unwrap()];
        args.extend_from_slice(flags);
        assert_eq!(code(&run(&args)), 0, "{id}");
        let first = std::fs::read_to_string(&out).unwrap();
        assert_eq!(first.lines().next().unwrap(), header);
        assert!(first.lines().count() > 1);
        assert_eq!(code(&run(&args)), 0);
        assert_eq!(first, std::fs::read_to_string(&out).unwrap(), "{id}");
    }
}

#[test]
fn figure_usage_errors() {
    assert_eq!(code(&run(&["figure", "--id", "min-flip", "--n", "50"])), 2);
    assert_eq!(code(&run(&["figure", "--id", "no-such", "--n", "50"])), 2);
    assert_eq!(code(&run(&["figure", "--id", "pair-count", "--m", "9..1"])), 2);
}

#[test]
fn thread_override_keeps_output_identical() {
    let path = scenario("smoke.scenario");
    let one = bin().env("NOISYKEY_THREADS", "1").args(["simulate", "--config", path.to_str().unwrap()]).output().unwrap();
    let four = bin().env("NOISYKEY_THREADS", "4").args(["simulate", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(one.stdout, four.stdout);
    let bad = bin().env("NOISYKEY_THREADS", "many").args(["simulate", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
