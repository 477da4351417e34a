use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_polybubble"));
    c.env_remove("POLYBUBBLE_OUT");
    c
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(out).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bubble_check_cases() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bubble-check", "--n", "7", "--k", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("bubble-check/report.json"));
    assert_eq!(r["passed"], true);
    assert_eq!(r["results"].as_array().unwrap().len(), 1);
    assert_eq!(r["config"]["tol"], 1e-9);
    // n = 2k is outside the admissible range
    assert_eq!(code(&run(dir.path(), &["bubble-check", "--n", "4", "--k", "2"])), 2);
    // a failing case is listed and gives exit 1
    let o = run(dir.path(), &["--tol", "1e-30", "bubble-check", "--n", "5", "--k", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n=5 k=1"));
}

#[test]
fn cayley_green_table_and_empty_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--seed", "3", "cayley-green", "--pairs", "50"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cayley-green/residuals.csv")).unwrap();
    assert!(csv.starts_with("check,n,k,count,max_residual,threshold,passed\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    assert_eq!(code(&run(dir.path(), &["cayley-green", "--pairs", "0"])), 2);
}

#[test]
fn tree_reports_and_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["tree", &fixture("separated.json"), "--alphas", "100", "--samples", "500"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("tree/report.json"));
    for e in r["results"][0]["influence"]["entries"].as_array().unwrap() {
        assert!(e["b"].as_array().unwrap().is_empty());
    }
    for f in ["dominance.csv", "interaction.csv", "rho_split.csv", "eta.csv"] {
        assert!(dir.path().join("tree").join(f).exists(), "{f}");
    }
    let o = run(dir.path(), &["tree", &fixture("tower.json"), "--alphas", "100", "--samples", "500"]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("tree/report.json"));
    assert_eq!(r["results"][0]["influence"]["entries"][0]["b"], serde_json::json!([2]));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n\": 7,").unwrap();
    assert_eq!(code(&run(dir.path(), &["tree", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&run(dir.path(), &["tree"])), 2);
}

#[test]
fn pohozaev_suites() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["manufactured", "bubble"] {
        let o = run(dir.path(), &["pohozaev", "--suite", suite, "--n", "3", "--k", "1"]);
        assert_eq!(code(&o), 0, "{suite}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&run(dir.path(), &["pohozaev", "--suite", "mystery"])), 2);
    assert_eq!(code(&run(dir.path(), &["pohozaev", "--n", "3"])), 2);
}

#[test]
fn solve_branch_resume_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["solve"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("solve/branch.csv")).unwrap();
    let sup: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(sup.len(), 5);
    assert!(sup.windows(2).all(|w| w[1] > w[0]));
    let manifest = dir.path().join("manifest.json");
    std::fs::copy(dir.path().join("solve/manifest.json"), &manifest).unwrap();
    let m = json(&manifest);
    assert_eq!(m["config"]["n"], 7);
    assert_eq!(m["solver"]["rtol"], 1e-10);

    let again = tempfile::tempdir().unwrap();
    let o = run(again.path(), &["solve", "--resume", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv2 = std::fs::read_to_string(again.path().join("solve/branch.csv")).unwrap();
    assert_eq!(csv, csv2);

    assert_eq!(code(&run(dir.path(), &["solve", "--mu-grid"])), 2);
    assert_eq!(code(&run(dir.path(), &["solve", "--mu-grid=-0.5,-0.1,-0.3"])), 2);
    assert_eq!(code(&run(dir.path(), &["solve", "--n", "9", "--k", "2"])), 2);
}

#[test]
fn config_file_env_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"n": 5, "k": 1, "tol": 1e-30}"#).unwrap();
    let out = dir.path().join("env-out");
    // the config's tolerance makes the check fail; the flag restores it
    let o = bin()
        .env("POLYBUBBLE_OUT", &out)
        .args(["--config", cfg.to_str().unwrap(), "bubble-check"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(out.join("bubble-check/report.json").exists());
    let o = bin()
        .env("POLYBUBBLE_OUT", &out)
        .args(["--config", cfg.to_str().unwrap(), "--tol", "1e-9", "bubble-check"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let r = json(&out.join("bubble-check/report.json"));
    assert_eq!(r["config"]["n"], 5);
    // no temporary files survive
    let names: Vec<String> = std::fs::read_dir(out.join("bubble-check"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["report.json".to_string()]);

    std::fs::write(&cfg, r#"{"unknown_field": 1}"#).unwrap();
    let o = bin().args(["--config", cfg.to_str().unwrap(), "bubble-check"]).output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&bin().args(["no-such-command"]).output().unwrap()), 2);
}
