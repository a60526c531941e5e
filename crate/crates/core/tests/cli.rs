use std::path::Path;
use std::process::{Command, Output};

use pboot::bench::{parse_records, ModeKind};

fn pboot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pboot")).args(args).output().unwrap()
}

fn write_city(dir: &Path) -> String {
    let mut text = String::from("x,u\n");
    for i in 0..49 {
        text.push_str(&format!("{},{}\n", 10 + i * 37 % 101, 5 + i * 53 % 89));
    }
    let path = dir.join("city.csv");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_ratio_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_city(dir.path());
    let csv = dir.path().join("report.csv");
    let out = pboot(&[
        "run", "--data", &data, "--statistic", "ratio:x:u", "--resamples", "999", "--stype", "w", "--seed", "7",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("R = 999"));
    let report = std::fs::read_to_string(csv).unwrap();
    assert_eq!(report.lines().count(), 2);
}

#[test]
fn median_with_weights_exits_1() {
    let out = pboot(&["run", "--synth", "10x2+2", "--statistic", "median", "--stype", "w", "--resamples", "9"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn unknown_column_exits_2() {
    let out = pboot(&["run", "--synth", "10x2+2", "--statistic", "mean:nope", "--resamples", "9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_one_record_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("bench.csv");
    let out = pboot(&[
        "bench", "--synth", "200x4+4", "--statistic", "median", "--resamples", "40", "--workers", "1,2,4,8",
        "--mode", "threaded", "--reps", "3", "--seed", "7", "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let records = parse_records(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records[0].mode, ModeKind::Serial);
    assert_eq!((records[0].speedup, records[0].efficiency()), (1.0, 1.0));
    assert!(records.iter().all(|r| r.reps == 3));
}

#[test]
fn bench_multiprocess_uses_own_binary() {
    let out = pboot(&[
        "bench", "--synth", "50x3+3", "--statistic", "sd", "--resamples", "20", "--workers", "1,2",
        "--mode", "multiprocess", "--reps", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let records = parse_records(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(records[1].mode, ModeKind::MultiProcess);
}

#[test]
fn bench_rejects_unsorted_workers() {
    let out = pboot(&["bench", "--synth", "50x3+3", "--statistic", "sd", "--resamples", "20", "--workers", "4,2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.csv");
    let out = pboot(&["synth", "--synth", "40x3+2", "--seed", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let data = pboot::load_table(&path).unwrap();
    assert_eq!((data.n(), data.num_columns()), (40, 5));
    let out = pboot(&["run", "--data", path.to_str().unwrap(), "--statistic", "sd:g2_1", "--resamples", "50"]);
    assert_eq!(out.status.code(), Some(0));
}
