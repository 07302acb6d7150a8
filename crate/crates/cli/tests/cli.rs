use std::path::Path;
use std::process::{Command, Output};

fn qfj(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfj"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn qfj")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(line: &str, i: usize) -> f64 {
    line.split(',').nth(i).unwrap().parse().unwrap()
}

#[test]
fn analytic_prints_closed_form_and_writes_profile() {
    let dir = tempfile::tempdir().unwrap();
    let o = qfj(dir.path(), &["analytic", "--k1", "0.3", "--lambda", "0.05"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("Lambda,k1,dF,J_Lambda,flux_ratio"));
    let row = lines.next().unwrap();
    let expected = 0.5 * (1.3f64 / 0.7).ln() + 4.0 * 0.05 * 0.3;
    assert!((field(row, 2) - expected).abs() < 1e-12);
    assert!((field(row, 3) + 2.045_655_210_2).abs() < 1e-9);

    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(profile.starts_with("x,a0,f_lambda,total,rho\n"));
    assert_eq!(profile.lines().count(), 202);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# channel\nk1 = 0.5\nLambda = 0.1\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_file = stdout(&qfj(dir.path(), &["--config", cfg, "analytic"]));
    let row = from_file.lines().nth(1).unwrap();
    assert_eq!(field(row, 1), 0.5);
    assert_eq!(field(row, 0), 0.1);

    let overridden = stdout(&qfj(dir.path(), &["--config", cfg, "analytic", "--k1", "0.3"]));
    let row = overridden.lines().nth(1).unwrap();
    assert_eq!(field(row, 1), 0.3);
    assert_eq!(field(row, 0), 0.1);
}

#[test]
fn invalid_parameters_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = qfj(dir.path(), &["analytic", "--k1", "1.2"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("k1"));

    let o = qfj(dir.path(), &["--grid", "50by31", "pde"]);
    assert!(!o.status.success());
}

#[test]
fn sweep_is_deterministic_and_extremum_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--grid",
        "8x5",
        "sweep",
        "--axis",
        "lambda",
        "--samples",
        "0.01,0.02,0.05",
        "--routes",
        "analytic,thermal",
        "--ratio",
        "8",
    ];
    assert!(qfj(dir.path(), &args).status.success());
    let first = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(first.lines().count(), 7);
    assert!(first.lines().skip(1).all(|l| l.split(',').nth(6).is_some_and(|v| !v.is_empty())));

    // Second run is served from the row cache and must be byte-identical.
    assert!(qfj(dir.path(), &args).status.success());
    let second = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(first, second);

    // The analytic barrier is monotone, so no interior maximum exists.
    let csv = dir.path().join("sweep.csv");
    let o = qfj(
        dir.path(),
        &["extremum", csv.to_str().unwrap(), "--x", "Lambda", "--y", "dF", "--route", "analytic"],
    );
    assert!(!o.status.success());
}

#[test]
fn transport_and_pde_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = qfj(
        dir.path(),
        &["--grid", "6x3", "transport", "--ratio", "4", "--lambdas", "0.05,0.1"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = std::fs::read_to_string(dir.path().join("transport.csv")).unwrap();
    assert!(t.starts_with("Lambda,Lx_over_Lomega,k1,J_num,R,residual,method,iterations\n"));
    let first = t.lines().nth(1).unwrap();
    assert!(field(first, 3) < 0.0, "left bias drains the left lead: {first}");
    assert_eq!(field(first, 4), 1.0);

    let o = qfj(dir.path(), &["--grid", "16x15", "pde", "--lambda", "0.02"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = std::fs::read_to_string(dir.path().join("pde_marginal.csv")).unwrap();
    assert_eq!(m.lines().count(), 17);
}
