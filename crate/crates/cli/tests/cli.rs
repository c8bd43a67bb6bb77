use std::process::{Command, Output};

fn fptm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fptm")).args(args).output().expect("spawn fptm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn table_passes() {
    let o = fptm(&["table", "1", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("3.073451E+2"), "{text}");
    assert!(!text.contains(",FAIL,"));
}

#[test]
fn unknown_table_is_an_error() {
    assert_eq!(fptm(&["table", "9"]).status.code(), Some(2));
}

#[test]
fn perturbed_reference_fails_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("t1.csv");
    let bad = dir.path().join("t1_bad.csv");
    let text = include_str!("../../core/data/table1.csv");
    std::fs::write(&ok, text).unwrap();
    std::fs::write(&bad, text.replacen("3.073451E+2", "3.074451E+2", 1)).unwrap();
    assert_eq!(fptm(&["compare", ok.to_str().unwrap()]).status.code(), Some(0));
    let o = fptm(&["compare", bad.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("sigma2=10/t1,") && stdout(&o).contains(",FAIL,"));
}

#[test]
fn malformed_reference_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.csv");
    std::fs::write(&p, "# table=1\nsigma2,t1\n10,abc\n").unwrap();
    let o = fptm(&["compare", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fptm(&["compare", "/nonexistent/ref.csv"]).status.code(), Some(2));
}

#[test]
fn moments_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "model = wiener\nmu = -0.5\nsigma2 = 10, 50\nnu = -80\nS = -50\nx = -70\np_R = 0.5\n").unwrap();
    let out = dir.path().join("out.csv");
    let args = ["moments", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(fptm(&args).status.code(), Some(0));
    let first = std::fs::read_to_string(&out).unwrap();
    assert_eq!(fptm(&args).status.code(), Some(0));
    assert_eq!(first, std::fs::read_to_string(&out).unwrap());
    let lines: Vec<_> = first.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains("3.073451E+2") && lines[1].contains("5.665090E+3"), "{}", lines[1]);
    assert!(lines[2].contains("2.007160E+1"), "{}", lines[2]);
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "model = wiener\n# comment\nsigma2 = ten\n").unwrap();
    let o = fptm(&["moments", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("sigma2"), "{err}");
    assert_eq!(fptm(&["moments", "model=wiener", "mu=0"]).status.code(), Some(2));
}

#[test]
fn counter_distribution_rows() {
    let o = fptm(&["counter", "--lambda", "1", "--T", "5", "--tau", "1", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n,pmf,cumulative");
    // support ends at n = 5
    assert_eq!(rows.len(), 7);
    assert!(rows[3].starts_with("2,3.31611"), "{}", rows[3]);
    assert_eq!(fptm(&["counter", "--lambda", "-1", "--T", "5", "--tau", "1"]).status.code(), Some(2));
}

#[test]
fn simulated_counter_is_seeded() {
    let args = ["simulate", "counter", "--lambda", "2", "--T", "3", "--tau", "0.5", "--n", "20000", "--seed", "5"];
    let a = fptm(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&fptm(&args)));
}
