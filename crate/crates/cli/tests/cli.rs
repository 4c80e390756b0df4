use std::path::{Path, PathBuf};
use std::process::Command;

fn recdual(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_recdual"))
        .args(args)
        .env_remove("RECDUAL_THREADS")
        .output()
        .expect("run recdual");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(path: &Path) -> String {
    let mut m = path.as_os_str().to_owned();
    m.push(".manifest");
    std::fs::read_to_string(PathBuf::from(m)).expect("manifest written")
}

fn csv_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key}"))
        .parse()
        .unwrap()
}

#[test]
fn example_one_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex1.csv");
    let (code, _) = recdual(&["example", "1", "--beta", "0.4", "--out", s(&out)]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("quantity,value\n"));
    assert!((csv_value(&csv, "V0") - 0.4).abs() < 1e-12);
    assert!((csv_value(&csv, "V1") - 0.4).abs() < 1e-12);
    assert!((csv_value(&csv, "V2") - 0.416667).abs() < 1e-6);
    assert!(manifest(&out).contains("status=ok"));
}

#[test]
fn bad_model_exits_one_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.model");
    std::fs::write(
        &model,
        "[meta]\nbeta = 1.5\nstates = 1\nactions = 1\nshocks = 1\nconstraints = 0\n\n[transition]\n1.0\n\n[reward]\n0.0\n",
    )
    .unwrap();
    let out = dir.path().join("v.csv");
    let (code, _) = recdual(&["validate", s(&model), "--out", s(&out)]);
    assert_eq!(code, 1);
    let m = manifest(&out);
    assert!(m.contains("status=error") && m.contains("exit_code=1"), "{m}");
}

#[test]
fn missing_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    let (code, _) = recdual(&["validate", "/definitely/not/here.model", "--out", s(&out)]);
    assert_eq!(code, 3);
    assert!(manifest(&out).contains("exit_code=3"));
}

#[test]
fn iteration_budget_exhaustion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("ex1.model");
    let ex = dir.path().join("ex.csv");
    assert_eq!(recdual(&["example", "1", "--out", s(&ex), "--model-out", s(&model)]).0, 0);
    let field = dir.path().join("f.rdvf");
    let report = dir.path().join("it.csv");
    let (code, _) = recdual(&["solve", s(&model), "--max-iter", "1", "--out", s(&field), "--report", s(&report)]);
    assert_eq!(code, 2);
    let m = manifest(&field);
    assert!(m.contains("converged=false") && m.contains("status=error"), "{m}");
}

#[test]
fn supinf_pipeline_reproduces_value_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("ex1.model");
    let ex = dir.path().join("ex.csv");
    assert_eq!(recdual(&["example", "1", "--out", s(&ex), "--model-out", s(&model)]).0, 0);
    let field = dir.path().join("f.rdvf");
    let report = dir.path().join("it.csv");
    let (code, _) = recdual(&[
        "solve", s(&model), "--variant", "supinf", "--grid-n", "161", "--gamma-max", "8", "--knots", "1,1.2", "--out",
        s(&field), "--report", s(&report),
    ]);
    assert_eq!(code, 0);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let summary = dir.path().join(format!("sim{run}.csv"));
        let paths = dir.path().join(format!("paths{run}.csv"));
        let (code, _) = recdual(&[
            "simulate", s(&model), s(&field), "--paths", "2000", "--seed", "7", "--threads", "1", "--summary",
            s(&summary), "--out", s(&paths),
        ]);
        assert_eq!(code, 0, "{}", manifest(&summary));
        let sum = std::fs::read_to_string(&summary).unwrap();
        assert!((csv_value(&sum, "mean_objective") - 0.4).abs() < 1e-6);
        outputs.push((sum, std::fs::read(&paths).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let header = String::from_utf8_lossy(&outputs[0].1).lines().next().unwrap().to_string();
    assert_eq!(header, "path_id,t,state,shock,action,reward,g0,promise0,discounted_objective");
}

#[test]
fn policy_reports_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("ex1.model");
    let ex = dir.path().join("ex.csv");
    assert_eq!(recdual(&["example", "1", "--out", s(&ex), "--model-out", s(&model)]).0, 0);
    let field = dir.path().join("f.rdvf");
    let report = dir.path().join("it.csv");
    let args = ["--grid-n", "161", "--gamma-max", "8", "--knots", "1,1.2"];
    let mut solve = vec!["solve", s(&model), "--out", s(&field), "--report", s(&report)];
    solve.extend(args);
    assert_eq!(recdual(&solve).0, 0);
    let stage = dir.path().join("stage.csv");
    let (code, _) = recdual(&["policy", s(&model), s(&field), "--x", "1", "--phi", "0", "--out", s(&stage)]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(&stage).unwrap();
    let probs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(probs.len(), 2);
    assert!(probs.iter().all(|p| (p - 0.5).abs() < 0.05), "{csv}");
    let m = manifest(&stage);
    for line in m.lines().filter(|l| l.starts_with("residual_")) {
        let v: f64 = line.split('=').nth(1).unwrap().parse().unwrap();
        assert!(v <= 1e-2, "{line}");
    }
}

#[test]
fn ramsey_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = recdual(&["ramsey", "--out-dir", s(dir.path())]);
    assert_eq!(code, 0);
    let dom = std::fs::read_to_string(dir.path().join("dominance.csv")).unwrap();
    assert!(dom.contains("dominates,true"));
    let cap = csv_value(&dom, "max_debt");
    assert!((0.02..=0.03).contains(&cap));
    for f in ["fig1.csv", "fig2.csv"] {
        assert!(std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count() > 100);
    }
    assert!(std::fs::read_to_string(dir.path().join("ramsey.manifest")).unwrap().contains("status=ok"));
}
