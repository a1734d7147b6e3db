use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_breakwatch");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("BREAKWATCH_THREADS").output().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn generate(dir: &Path) -> String {
    let stack = path(dir, "stack.bts");
    let out = run(&["generate", "--m", "300", "--N", "200", "--break-mag", "0.5", "--seed", "3", "--out", &stack]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    stack
}

#[test]
fn generate_then_monitor() {
    let dir = tempfile::tempdir().unwrap();
    let stack = generate(dir.path());
    let csv = path(dir.path(), "breaks.csv");
    let out = run(&["monitor", "--input", &stack, "--lambda", "4.88", "--profile", "--out", &csv]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("lambda: 4.880000"));
    assert!(stdout.contains("breaks: "));
    for phase in ["ingest", "model", "predictions", "residuals", "mosum", "total"] {
        assert!(stdout.contains(&format!("{phase}: ")), "{stdout}");
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 301);
    assert!(text.starts_with("pixel,valid,detected,first_break,max_abs_mo\n"));
}

#[test]
fn monitor_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let stack = generate(dir.path());
    let a = path(dir.path(), "a.csv");
    let b = path(dir.path(), "b.csv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["monitor", "--input", &stack, "--n", "100", "--h", "25", "--lambda", "3.0", "--threads", threads, "--out", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let naive = path(dir.path(), "naive.csv");
    let o = run(&["monitor", "--input", &stack, "--h", "25", "--lambda", "3.0", "--backend", "naive", "--out", &naive]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&naive).unwrap());
}

#[test]
fn bandwidth_above_history_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let stack = generate(dir.path());
    let out = run(&["monitor", "--input", &stack, "--h", "150", "--n", "100", "--out", &path(dir.path(), "x.csv")]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("h <= n"), "{err}");
}

#[test]
fn missing_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["monitor", "--input", &path(dir.path(), "missing.bts"), "--out", &path(dir.path(), "x.csv")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn corrupt_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = path(dir.path(), "bad.bts");
    std::fs::write(&bad, b"BTS1\x01\0\0\0").unwrap();
    let out = run(&["monitor", "--input", &bad, "--out", &path(dir.path(), "x.csv")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constant_stack_is_numerical_error() {
    use breakwatch::{dataio, SeriesStack, TimeAxis};
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "flat.bts");
    let stack = SeriesStack::new(TimeAxis::regular(200).unwrap(), 2, vec![0.0; 400]).unwrap();
    dataio::write_stack(&stack, std::fs::File::create(&file).unwrap()).unwrap();
    let out = run(&["monitor", "--input", &file, "--lambda", "2", "--out", &path(dir.path(), "x.csv")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("zero"));
}

#[test]
fn unknown_flags_rejected() {
    for args in [
        &["generate", "--m", "3", "--out", "x", "--colour", "red"][..],
        &["monitor", "--input", "a", "--out", "b", "--bandwidth", "3"][..],
        &["frobnicate"][..],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn critical_value_subcommand() {
    let out = run(&["critical-value", "--alpha", "0.05", "--h-frac", "0.5", "--horizon", "2", "--n-sim", "100", "--reps", "100000", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "4.883605");
    let out = run(&["critical-value", "--reps", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "bench.csv");
    let out = Command::new(BIN)
        .args(["bench", "--m-list", "100,200,300", "--seed", "2", "--out", &csv])
        .env("BREAKWATCH_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "m,ingest,model,predictions,residuals,mosum,breaks,total");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("100,"));
}
