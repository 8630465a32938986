use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gyrobs::cli::config::BUNDLED;
use gyrobs::cli::output::{parse_run_csv, CSV_HEADER};

fn gyrobs(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gyrobs"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("GYROBS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn bare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gyrobs"))
        .args(args)
        .env_remove("GYROBS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn bundled(name: &str) -> &'static str {
    BUNDLED.iter().find(|(n, _)| *n == name).unwrap().1
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_paper_experiment_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = gyrobs(&["run", "--config", "paper_experiment"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("paper_experiment.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let rows = parse_run_csv(&text).unwrap();
    assert_eq!(rows.len(), 1501);
    assert!(rows.windows(2).all(|w| w[1].t > w[0].t));
    assert!(text.lines().all(|l| l.split(',').count() == 7));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("paper_experiment_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert!(dir.path().join("plot_paper_experiment.py").exists());
}

#[test]
fn negative_gain_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &bundled("paper_experiment").replace("kp = 2.5", "kp = -1.0"));
    let o = gyrobs(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gains must be positive"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &bundled("paper_experiment").replace("[gains]", "[gains]\nkd = 0.1"));
    let o = gyrobs(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kd"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gyrobs(&["run", "--config", "no_such_config"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_reports_proposed_first() {
    let dir = tempfile::tempdir().unwrap();
    let o = gyrobs(&["compare", "--config", "paper_experiment"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("attitude error < 1e-1: proposed 0.38 s"), "{}", stdout(&o));
    for f in ["paper_experiment_proposed.csv", "paper_experiment_mahony.csv", "paper_experiment_comparison.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn compare_at_equilibrium_ties() {
    let dir = tempfile::tempdir().unwrap();
    let text = bundled("paper_experiment")
        .replace("estimate_offset = [0.0, 0.0, 3.1101767270538954]", "estimate_offset = [0.0, 0.0, 0.0]")
        .replace("b_bar = [0.0, 0.0, 0.0]", "b_bar = [0.0, 0.1, -0.2]")
        .replace("duration = 30.0", "duration = 2.0");
    let cfg = write_config(dir.path(), "eq.toml", &text);
    let o = gyrobs(&["compare", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = stdout(&o);
    let lines: Vec<&str> = report.lines().filter(|l| l.contains("attitude error <")).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.contains("proposed 0.00 s, mahony 0.00 s -> Tie")), "{report}");
}

#[test]
fn compare_without_mahony_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = bundled("paper_experiment").replace("[mahony]\nthresholds = [1.0, 0.1, 0.01, 1e-4]\n", "");
    assert!(!text.contains("[mahony]"));
    let cfg = write_config(dir.path(), "nomahony.toml", &text);
    let o = gyrobs(&["compare", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn montecarlo_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["montecarlo", "--config", "montecarlo_global", "--trials", "5", "--seed", "7"];
    let first = gyrobs(&args, dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let csv_path = dir.path().join("montecarlo_global_montecarlo.csv");
    let a = fs::read(&csv_path).unwrap();
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 6);
    let second = gyrobs(&args, dir.path());
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(a, fs::read(&csv_path).unwrap());
}

#[test]
fn montecarlo_zero_trials_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gyrobs(&["montecarlo", "--config", "montecarlo_global", "--trials", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selfcheck_lists_seven_identities() {
    let o = bare(&["selfcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.contains(" Identity ")).count(), 7);
    assert!(text.lines().filter(|l| l.contains(" Reduction ")).count() >= 1);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn selfcheck_detects_mirrored_hat() {
    let o = bare(&["selfcheck", "--perturb-hat"]);
    assert_eq!(o.status.code(), Some(1));
    let failing: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("FAIL")).map(String::from).collect();
    assert_eq!(failing.len(), 1, "{failing:?}");
    assert!(failing[0].contains("Identity 6:"));
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let text = bundled("inverse_variant_demo").replace("duration = 40.0", "duration = 1.0");
    let cfg = write_config(dir.path(), "short.toml", &text);
    let out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_gyrobs"))
        .args(["run", "--config", &cfg])
        .env("GYROBS_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("short.csv").exists());
}

#[test]
fn certificate_dump() {
    let o = bare(&["certificate", "--config", "paper_experiment"]);
    assert_eq!(o.status.code(), Some(0));
    let cert: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(cert["epsilon"].as_f64().unwrap() > 0.0);
    assert_eq!(cert["ki"].as_f64(), Some(3.0));
    let none = bare(&["certificate", "--config", "inverse_variant_demo"]);
    assert_eq!(none.status.code(), Some(2));
}
