use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use calderonlab::cli::RunReport;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calderonlab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("CALDERONLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(out: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn calderon_on_cauchy_riemann_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["calderon"], &configs().join("calderon_cr.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    assert!(r.all_pass);
    let compl = r.verdicts.iter().find(|v| v.name == "calderon.compl_residual").unwrap();
    assert!(compl.value <= 1e-8 && compl.tolerance == 1e-8);
    assert!(dir.path().join("modes.csv").exists());
    assert!(r.omitted.contains(&"sweep.csv".to_string()));
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn shapiro_lopatinskii_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check"], &configs().join("sl_failure.json"), dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let r = report(dir.path());
    assert!(!r.all_pass);
    assert!(r.verdicts.iter().any(|v| v.name == "shapiro_lopatinskii" && !v.pass));
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"operator": "unused.json", "tolerance": {"idem": 1e-9}}"#);
    let o = run(&["calderon"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tolerance"), "{}", stderr(&o));
}

#[test]
fn unknown_tolerance_key_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{"operator": {:?}, "tolerances": {{"idemp": 1e-9}}}}"#, configs().join("cauchy_riemann.json")),
    );
    let o = run(&["calderon"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("idemp"), "{}", stderr(&o));
}

#[test]
fn malformed_json_and_bad_overrides_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"operator": "#);
    assert_eq!(run(&["check"], &cfg, &dir.path().join("a")).status.code(), Some(2));
    let cr = configs().join("cauchy_riemann.json");
    let o = run(&["check", "--tol", "nonsense=1"], &cr, &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nonsense"), "{}", stderr(&o));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["check"], &missing, &dir.path().join("c")).status.code(), Some(2));
}

#[test]
fn cobordism_rejects_non_self_adjoint_operator() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["cobordism"], &configs().join("cauchy_riemann.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("requires formally self-adjoint A"), "{}", stderr(&o));
}

#[test]
fn cobordism_on_dirac_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["cobordism"], &configs().join("cobordism_dirac.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    let sig = r.verdicts.iter().find(|v| v.name == "cobordism.signature").unwrap();
    assert_eq!(sig.value, 0.0);
}

#[test]
fn eigenvalue_on_contour_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{"operator": {:?}, "contour": {{"cut_radius": 2.0}}}}"#, configs().join("cauchy_riemann.json")),
    );
    let o = run(&["invariants"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn sweep_of_eleven_points_writes_eleven_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--threads", "2"], &configs().join("sweep_crossing.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle-compare"], &configs().join("dirac_sigma1.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    let again: RunReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(r, again);
    assert_eq!(r.command, "oracle-compare");
}

#[test]
fn numbers_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["calderon"], &configs().join("calderon_cr.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("modes.csv")).unwrap();
    let field = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    let mantissa = field.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{field}");
}
