use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"
region = { kind = "interval", lo = 0.0, hi = 1.0 }

[process1]
drift = ["0"]
diffusion = [["1"]]
start = [0.3]

[process2]
drift = ["-y1"]
diffusion = [["1"]]
start = [0.6]

[grid]
resolution = 201

[mc]
n_replicates = 2000
dt = 1e-3
bridge_correction = true
base_seed = 9
"#;

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_exitbound")
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("s.scn");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(exe())
        .args(args)
        .env_remove("EXITBOUND_OUT")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_bound_passes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&["verify-bound", s(&scn), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("bound_report.json")).unwrap()).unwrap();
    assert_eq!(report["holds"], true);
    assert_eq!(report["n_replicates"], 2000);
    for key in [
        "lhs_mean",
        "rhs_mean",
        "decomposition_residual",
        "dynkin_residual_1",
        "dynkin_residual_2",
    ] {
        assert!(report[key].is_number(), "{key}");
    }
    assert!(out.join("bound_report.txt").exists());
    assert!(out.join("run_metadata.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn report_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), SMALL);
    let mut reports = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(format!("w{w}"));
        let o = run(&["verify-bound", s(&scn), "--workers", w, "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0));
        reports.push(fs::read(out.join("bound_report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn seed_flag_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["simulate", s(&scn), "--out", s(&a)]);
    run(&["simulate", s(&scn), "--out", s(&b), "--seed", "10"]);
    let ta = fs::read_to_string(a.join("outcomes.csv")).unwrap();
    let tb = fs::read_to_string(b.join("outcomes.csv")).unwrap();
    assert_eq!(ta.lines().count(), 2001);
    assert_ne!(ta, tb);
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), SMALL);
    let out = dir.path().join("from-env");
    let o = Command::new(exe())
        .args(["solve-pde", s(&scn)])
        .env("EXITBOUND_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    for f in ["field_1.csv", "field_1.json", "field_2.csv", "field_2.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("field_1.json")).unwrap()).unwrap();
    assert!((meta["value_at_start"].as_f64().unwrap() - 0.21).abs() < 1e-12);
    assert!(meta["sup_grad_norm"]["coarse"].is_number());
}

#[test]
fn out_flag_beats_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), SMALL);
    let env_dir = dir.path().join("env");
    let flag_dir = dir.path().join("flag");
    let o = Command::new(exe())
        .args(["solve-pde", s(&scn), "--out", s(&flag_dir)])
        .env("EXITBOUND_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("field_1.csv").exists());
    assert!(!env_dir.exists());
}

#[test]
fn validation_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        SMALL.replace("start = [0.3]", "start = [1.3]"),
        SMALL.replace("drift = [\"0\"]", "drift = [\"0\", \"1\"]"),
        SMALL.replace("drift = [\"0\"]", "drift = [\"2*^3\"]"),
        SMALL
            .replace("diffusion = [[\"1\"]]", "diffusion = [[\"0\"]]")
            .replace("bridge_correction = true", ""),
        SMALL.replace("resolution = 201", "resolution = "),
    ];
    for text in cases {
        let scn = write_scenario(dir.path(), &text);
        let o = run(&["verify-bound", s(&scn), "--out", s(&out)]);
        assert_eq!(
            o.status.code(),
            Some(3),
            "{text}\n{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
    let o = run(&["verify-bound", "/nonexistent.scn"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn start_outside_message() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), &SMALL.replace("start = [0.6]", "start = [-0.5]"));
    let o = run(&["solve-pde", s(&scn), "--out", s(&dir.path().join("o"))]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("start outside closure"));
}

#[test]
fn numerical_failures_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // coefficient blows up at a grid node
    let singular = SMALL.replace("drift = [\"-y1\"]", "drift = [\"1 / (y1 - 0.5)\"]");
    let scn = write_scenario(dir.path(), &singular);
    let o = run(&["solve-pde", s(&scn), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    // horizon far too short: almost every replicate is censored
    let censored = SMALL.replace("base_seed = 9", "base_seed = 9\nt_max = 0.01");
    let scn = write_scenario(dir.path(), &censored);
    let o = run(&["verify-bound", s(&scn), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("censored"));
}

#[test]
fn convergence_command_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        "[mc]",
        "[convergence]\ndt_coarse = 1e-2\ndt_levels = 3\ndt_replicates = 20000\n\n[mc]",
    );
    let scn = write_scenario(dir.path(), &text);
    let out = dir.path().join("out");
    let o = run(&["convergence", s(&scn), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(r["pass"], true);
    assert_eq!(r["spatial"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("kind,process,level,step,value,se,difference\n"));
}

#[test]
fn usage_errors() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["verify-bound", "x.scn", "--workers", "many"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("verify-bound"));
}

#[test]
fn example_field_csv_has_the_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let scn = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/example.scn");
    let o = run(&["solve-pde", s(&scn), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("field_1.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("0.5,")).expect("node at 0.5");
    let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 0.25).abs() < 1e-12, "{row}");
}
