use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_posthoc-eval"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")))
        .unwrap_or_else(|| panic!("{key} missing from\n{report}"))
        .parse()
        .unwrap()
}

const SMALL_SWEEP: &str = r#"
n_models = 3
master_seed = 5
n_explain = 10
background_size = 60

[generation]
n_features = [2, 4]
n_effects = [1, 3]
max_interaction_order = [1, 2]
validation_points = 1000

[[explainers]]
kind = "pdp"

[[explainers]]
kind = "lime"
n_perturbations = 300

[[explainers]]
kind = "shap"
mode = "exact"
"#;

#[test]
fn generate_writes_one_model_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--d", "4", "--effects", "4", "--dummy", "2", "--seed", "7", "--out", "m.txt"], dir.path());
    let text = fs::read_to_string(dir.path().join("m.txt")).unwrap();
    assert!(text.lines().any(|l| l == "d=4"));
    let dummy = text.lines().find_map(|l| l.strip_prefix("dummy=")).unwrap();
    assert_eq!(dummy.split(',').count(), 2);
    assert!(text.lines().filter(|l| l.starts_with("effect:")).count() >= 1);

    let again = ok(&["generate", "--d", "4", "--effects", "4", "--dummy", "2", "--seed", "7"], dir.path());
    assert_eq!(again, text);
}

#[test]
fn explain_then_evaluate_exact_shap() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("m.txt"), "d=3\nsource := x1*x2 + exp(x3)\n").unwrap();
    ok(&["sample", "--d", "3", "--seed", "2", "--out", "x.csv"], p);
    ok(
        &["explain", "--model", "m.txt", "--data", "x.csv", "--explainer", "shap-exact", "--n-explain", "15", "--out", "e.txt"],
        p,
    );
    let report = ok(&["evaluate", "--model", "m.txt", "--data", "x.csv", "--explanations", "e.txt"], p);
    assert_eq!(value(&report, "instances"), 15.0);
    assert!(value(&report, "acc_rmse") < 1e-10, "{report}");
    assert!(value(&report, "maiou") < 1.0);
}

#[test]
fn mismatched_dimension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("m3.txt"), "d=3\nsource := x1 + x2 + x3\n").unwrap();
    fs::write(p.join("m2.txt"), "d=2\nsource := x1 + x2\n").unwrap();
    ok(&["sample", "--d", "3", "--out", "x.csv"], p);
    ok(&["explain", "--model", "m3.txt", "--data", "x.csv", "--explainer", "pdp", "--n-explain", "5", "--out", "e.txt"], p);
    ok(&["sample", "--d", "2", "--out", "x2.csv"], p);
    let out = run(&["evaluate", "--model", "m2.txt", "--data", "x2.csv", "--explanations", "e.txt"], p);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("signature mismatch"), "{stderr}");
}

#[test]
fn benchmark_is_reproducible_and_rescorable() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("sweep.toml"), SMALL_SWEEP).unwrap();
    let first = ok(&["benchmark", "--config", "sweep.toml", "--out", "a", "--jobs", "2"], p);
    let second = ok(&["benchmark", "--config", "sweep.toml", "--out", "b"], p);
    assert_eq!(first, second);
    let summary_a = ok(&["report", "--records", "a/records.csv"], p);
    let summary_b = ok(&["report", "--records", "b/records.csv"], p);
    assert_eq!(summary_a.lines().count(), 4);
    assert_eq!(summary_a, summary_b);

    let run = p.join("a");
    let gt_report = ok(
        &[
            "evaluate",
            "--ground-truth",
            "a/ground_truth/model_0000.csv",
            "--expectations",
            "a/expectations/model_0000.csv",
            "--explanations",
            "a/explanations/model_0000.shap-exact.txt",
        ],
        p,
    );
    let records = fs::read_to_string(run.join("records.csv")).unwrap();
    let header: Vec<&str> = records.lines().next().unwrap().split(',').collect();
    let shap: Vec<&str> = records
        .lines()
        .find(|l| l.contains(",shap-exact,"))
        .unwrap()
        .split(',')
        .collect();
    let col = |name: &str| shap[header.iter().position(|h| *h == name).unwrap()].parse::<f64>().unwrap();
    for key in ["cos_mean", "euc_mean", "nrmse_mean"] {
        assert!((value(&gt_report, key) - col(key)).abs() <= 1e-6 * (1.0 + col(key).abs()), "{key}");
    }
    assert!(value(&gt_report, "acc_rmse") < 1e-8);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "budget_ms = 0\n").unwrap();
    let out = run(&["benchmark", "--config", "bad.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget_ms"));
}

#[test]
fn usage_errors_fail() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!run(&["explain", "--model", "m.txt"], dir.path()).status.success());
    assert!(!run(&["no-such-command"], dir.path()).status.success());
    let out = run(&["explain", "--model", "m.txt", "--data", "x.csv", "--explainer", "magic"], dir.path());
    assert!(!out.status.success());
}
