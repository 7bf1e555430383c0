use std::path::Path;
use std::process::{Command, Output};

fn morspai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morspai"))
        .args(args)
        .output()
        .expect("spawn morspai")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generated_files_round_trip_through_airga() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model");
    let g = morspai(&["gen", "--kind", "disc-brake", "--n", "60", "--out", path(&model)]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    for name in ["M", "D", "K", "F", "C"] {
        assert!(model.join(format!("{name}.mtx")).exists());
    }
    let cfg = dir.path().join("run.toml");
    let mut text = String::from("[files]\n");
    for key in ["m", "d", "k", "f", "c"] {
        text += &format!("{key} = \"{}\"\n", model.join(format!("{}.mtx", key.to_uppercase())).display());
    }
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = morspai(&["airga", "--config", path(&cfg), "--out", path(&out), "--no-error-curve"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.lines().count() > 4);
    assert!(out.join("reduced_K.mtx").exists() && out.join("basis_V.mtx").exists());
    assert!(!out.join("error_curve.csv").exists());
}

#[test]
fn airga_writes_error_curve() {
    let dir = tempfile::tempdir().unwrap();
    let o = morspai(&["airga", "--n", "200", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve = std::fs::read_to_string(dir.path().join("error_curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("f,s,rel_error"));
    assert_eq!(lines.count(), 200);
}

#[test]
fn birka_and_qbihomm_run() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    let o = morspai(&["birka", "--n", "40", "--r", "4", "--out", path(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(b.join("basis_W.mtx").exists() && b.join("reduced_N2.mtx").exists());

    let q = dir.path().join("q");
    let o = morspai(&["qbihomm", "--n", "80", "--points", "1,5", "--out", path(&q)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(q.join("reduced_H.mtx").exists() && q.join("basis_U.mtx").exists());
}

#[test]
fn spai_bench_prints_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = morspai(&["spai-bench", "--n", "150", "--points", "1,50,200", "--first-approach", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 4);
    assert!(dir.path().join("spai_bench.csv").exists());
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = morspai(&["airga", "--n", "50", "--precond", "sometimes", "--out", path(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sometimes"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[airga]\nr_maximum = 3\n").unwrap();
    let o = morspai(&["airga", "--config", path(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("r_maximum"), "{}", stderr(&o));
}

#[test]
fn io_and_parse_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = morspai(&["airga", "--config", path(&dir.path().join("missing.toml"))]);
    assert_eq!(code(&o), 4);

    let bad = dir.path().join("K.mtx");
    std::fs::write(&bad, "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 9 1.0\n").unwrap();
    let cfg = dir.path().join("run.toml");
    let k = bad.display();
    std::fs::write(&cfg, format!("[files]\nm = \"{k}\"\nd = \"{k}\"\nk = \"{k}\"\nf = \"{k}\"\nc = \"{k}\"\n")).unwrap();
    let o = morspai(&["airga", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("K.mtx:3:"), "{}", stderr(&o));
}

#[test]
fn solver_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[gmres]\nmax_iter = 2\n").unwrap();
    let o = morspai(&["airga", "--config", path(&cfg), "--n", "300", "--precond", "none", "--out", path(dir.path())]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}
