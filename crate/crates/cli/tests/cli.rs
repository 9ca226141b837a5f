use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nqac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nqac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("cfg.json");
    let text = format!(
        r#"{{
  "problem": "fixture:k4",
  "levels": [1, 2],
  "alphas": [0.3, 1.0],
  "gammas": [0.5, 1.0],
  "sqa": {{"sweeps": 200, "trotter_slices": 8}},
  "cycles": 2,
  "runs_per_cycle": 10,
  "seed": 3
}}"#
    );
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn bruteforce_reports_the_six_k4_ground_states() {
    let o = nqac(&["bruteforce", "--problem", "fixture:k4"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["energy"], -2.0);
    assert_eq!(v["states"].as_array().unwrap().len(), 6);
}

#[test]
fn encode_embed_sqa_analyze_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    let o = nqac(&["encode", "--problem", "fixture:k4", "--level", "2", "--gamma", "0.5", "--out", &d("nested.json"), "--sidecar", &d("side.json")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(d("side.json")).unwrap()).unwrap();
    assert_eq!(side["C"], 2);

    let o = nqac(&["embed", "--problem", &d("nested.json"), "--method", "choi", "--out", &d("emb.json")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = nqac(&["embed", "--problem", &d("nested.json"), "--dw2-like", "--seed", "1"]);
    assert!(o.status.success());

    let o = nqac(&["sqa", "--problem", &d("nested.json"), "--anneals", "20", "--sweeps", "300", "--slices", "8", "--out", &d("s.ndjson")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = nqac(&["analyze", "--samples", &d("s.ndjson"), "--problem", "fixture:k4", "--level", "2", "--gamma", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let p: f64 = line.split(',').next().unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn pt_and_meanfield_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pt");
    let o = nqac(&["pt", "--problem", "fixture:k4", "--ladder", "4", "--sweeps", "100", "--samples", "50", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("betas.csv")).unwrap().lines().count(), 5);
    assert!(out.join("beta_03.ndjson").exists());

    let o = nqac(&["meanfield", "--level", "2", "--s-steps", "2", "--m-steps", "4"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 3 * 5);
    let o = nqac(&["meanfield", "--minimize-at", "1.0", "--beta", "20"]);
    assert!(stdout(&o).trim_end().ends_with(",1"), "{}", stdout(&o));
}

#[test]
fn run_is_deterministic_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, jobs) in [(&a, "1"), (&b, "4")] {
        let o = nqac(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["curves.csv", "boost.csv", "eta.txt", "grid.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let curves = fs::read_to_string(a.join("curves.csv")).unwrap();
    assert!(curves.starts_with("C,alpha,gamma_star,P,stderr\n"));
    assert_eq!(curves.lines().count(), 5);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = nqac(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad_problem = dir.path().join("bad.json");
    fs::write(
        &bad_problem,
        r#"{"problem": "absent.json", "levels": [1], "alphas": [1.0], "seed": 1}"#,
    )
    .unwrap();
    let o = nqac(&["run", "--config", bad_problem.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = nqac(&["embed", "--problem", "fixture:k10_harder", "--method", "choi", "--dw2-like"]);
    assert_eq!(o.status.code(), Some(3));

    let no_seed = dir.path().join("noseed.json");
    fs::write(&no_seed, r#"{"levels": [1], "alphas": [1.0]}"#).unwrap();
    let o = nqac(&["run", "--config", no_seed.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = nqac(&["sqa", "--problem", "fixture:k4", "--slices", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
