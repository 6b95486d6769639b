use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imex-peer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn construct_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.txt");
    let out = cli(&["construct", "--stages", "3", "--gamma", "0.4", "--nodes", "0,0.5,1", "--out", path(&file)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = cli(&["validate", path(&file)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("passed"));
}

#[test]
fn construct_reads_matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.txt");
    let s2 = dir.path().join("s2.txt");
    std::fs::write(&p, "0.5 0.5\n0.5 0.5\n").unwrap();
    std::fs::write(&s2, "0 0\n0.25 0\n").unwrap();
    let file = dir.path().join("m.txt");
    let out = cli(&[
        "construct", "--stages", "2", "--nodes", "0.5,1", "--p-file", path(&p), "--s2-file", path(&s2), "--out", path(&file),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&file).unwrap();
    assert!(text.contains("2.5000000000000000e-1"));
}

#[test]
fn broken_file_is_a_usage_error_and_bad_invariant_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.txt");
    std::fs::write(&file, "peer-coefficients v1\ns 1\nbogus 3\n").unwrap();
    assert_eq!(code(&cli(&["validate", path(&file)])), 1);

    let out = cli(&["construct", "--stages", "1", "--gamma", "1", "--nodes", "1", "--out", path(&file)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&file).unwrap().replace("c 1.0000000000000000e0", "c 9.0000000000000000e-1");
    std::fs::write(&file, text).unwrap();
    let out = cli(&["validate", path(&file)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("c_s = 1"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&cli(&["run", "--method", "builtin:s2"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    assert_eq!(code(&cli(&["wb-test", "--method", "builtin:s7"])), 1);
    let out = cli(&["run", "--method", "builtin:s2", "--problem", "wb", "--dt", "0.3", "--t-end", "1", "--out", "/tmp/x.csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn run_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for f in [&a, &b] {
        let out = cli(&["run", "--method", "builtin:s2", "--problem", "ap", "--dt", "0.1", "--t-end", "1", "--out", path(f)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,u1,u2");
    assert_eq!(lines.len(), 11);
}

#[test]
fn wb_test_passes_for_two_stages() {
    let out = cli(&["wb-test", "--method", "builtin:s2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.txt");
    // Explicit-looking method with a tiny gamma blows up on the stiff problem.
    let out = cli(&["construct", "--stages", "2", "--gamma", "0.01", "--nodes", "0,1", "--out", path(&file)]);
    assert_eq!(code(&out), 0);
    let csv = dir.path().join("t.csv");
    let out = cli(&[
        "run", "--method", path(&file), "--problem", "ap", "--epsilon", "1e-6", "--dt", "0.1", "--t-end", "100", "--out", path(&csv),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}
