use std::path::Path;
use std::process::{Command, Output};

fn eigsur(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigsur")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_eval_audit_on_example1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = eigsur(&["build", "--fixture", "example1", "--n", "20", "--m", "2", "--derivatives", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "basis.mtx", "report.json", "max_bound.csv", "grid.csv", "samples.csv", "reduced_a_1.mtx", "tall_b_1.mtx"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    assert_eq!(report["config"]["tol"], 1e-5);
    let grid = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 625);

    let o = eigsur(&["eval", path(&out), "--grid", "4,3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 12);
    assert_eq!(text.lines().next().unwrap(), "w1,w2,lambda,bound,gap_estimate");

    let o = eigsur(&["audit", path(&out), "--out", path(&dir.path().join("audit"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("audit/audit.json").exists());
    assert!(dir.path().join("audit/audit.csv").exists());
}

#[test]
fn eval_at_logged_sample_has_tiny_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = eigsur(&["build", "--fixture", "synthetic", "--n", "60", "--tol", "1e-6", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let samples = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    let row: Vec<&str> = samples.lines().nth(1).unwrap().split(',').collect();
    let omega = format!("{},{}", row[0], row[1]);
    let o = eigsur(&["eval", path(&out), "--omega", &omega]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let bound: f64 = text.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(bound <= 1e-8, "bound {bound:e}");
}

#[test]
fn truncated_basis_fails_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = eigsur(&["build", "--fixture", "synthetic", "--n", "80", "--nmax", "0", "--out", path(&out)]);
    assert_eq!(code(&o), 2);
    let o = eigsur(&["audit", path(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn fixture_export_and_build_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    let o = eigsur(&["fixture", "export", "beam", "--n", "30", "--out", path(&fx)]);
    assert_eq!(code(&o), 0);
    assert!(fx.join("pencil.json").exists() && fx.join("A1.mtx").exists() && fx.join("B2.mtx").exists());
    let out = dir.path().join("s");
    let o = eigsur(&[
        "build", "--pencil", path(&fx.join("pencil.json")), "--m", "2", "--bound", "kt", "--train-grid", "9,9", "--out", path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = eigsur(&["audit", path(&out)]);
    assert_eq!(code(&o), 0);
}

#[test]
fn missing_matrix_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    assert_eq!(code(&eigsur(&["fixture", "export", "example3", "--out", path(&fx)])), 0);
    std::fs::remove_file(fx.join("A2.mtx")).unwrap();
    let o = eigsur(&["build", "--pencil", path(&fx.join("pencil.json")), "--out", path(&dir.path().join("s"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("A2.mtx"));
}

#[test]
fn corrupted_manifest_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    assert_eq!(code(&eigsur(&["build", "--fixture", "example3", "--out", path(&out)])), 0);
    std::fs::write(out.join("manifest.json"), "{ broken").unwrap();
    assert_eq!(code(&eigsur(&["eval", path(&out), "--grid", "2,2"])), 1);
}

#[test]
fn reports_are_reproducible_with_one_thread() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v
    };
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("s{k}"));
        let o = eigsur(&[
            "--threads", "1", "build", "--fixture", "synthetic", "--n", "50", "--seed", "3", "--m", "1", "--derivatives", "--tol", "1e-7",
            "--out", path(&out),
        ]);
        assert_eq!(code(&o), 0);
        reports.push(strip(&out));
        assert_eq!(std::fs::read(dir.path().join("s0/basis.mtx")).unwrap(), std::fs::read(out.join("basis.mtx")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn compare_emits_four_by_five_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = eigsur(&["compare", "--fixture", "beam", "--n", "40", "--train-grid", "9,9", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|l| l.split(',').count() == 5));
    assert!(String::from_utf8(o.stdout).unwrap().contains("dimension V"));
}

#[test]
fn bad_arguments_exit_nonzero() {
    assert_ne!(code(&eigsur(&["build", "--out", "x"])), 0);
    assert_eq!(code(&eigsur(&["build", "--fixture", "nope", "--out", "/tmp/none"])), 1);
}
