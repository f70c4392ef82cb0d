use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qempc::mpqp::PwaController;
use tempfile::TempDir;

fn qempc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qempc")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A temp dir with the benchmark controller synthesized into `out/`.
fn synthesized() -> TempDir {
    let dir = TempDir::new().unwrap();
    let out = qempc(dir.path(), &["synthesize"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir
}

fn read(dir: &TempDir, rel: &str) -> String {
    fs::read_to_string(dir.path().join(rel)).unwrap()
}

const UNCONSTRAINED: &str = r#"{
  "name": "free",
  "a": [[1.0, 1.0], [0.0, 1.0]],
  "b": [[0.5], [1.0]],
  "c": [[1.0, 0.0]],
  "horizon": 4,
  "q": [[1.0, 0.0], [0.0, 1.0]],
  "r": [[1.0]],
  "p_term": [[1.0, 0.0], [0.0, 1.0]]
}"#;

#[test]
fn synthesized_controller_round_trips_byte_for_byte() {
    let dir = synthesized();
    let text = read(&dir, "out/controller.json");
    let ctrl = PwaController::from_json(&text).unwrap();
    assert_eq!(ctrl.to_json(), text);
    assert!(ctrl.len() > 1);
}

#[test]
fn unconstrained_scenario_has_one_region() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("free.json"), UNCONSTRAINED).unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"scenario": "free.json"}"#).unwrap();
    let out = qempc(dir.path(), &["synthesize", "--config", "cfg.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("regions: 1\n"), "{}", stdout(&out));
}

#[test]
fn malformed_json_exits_2_with_location() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("cfg.json"), "{\n  \"seeds\": {\"keys\": 1,}\n}").unwrap();
    let out = qempc(dir.path(), &["run", "--config", "cfg.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2, column"), "{}", stderr(&out));

    fs::write(dir.path().join("bad.json"), "{\"name\": \"x\", \"a\": [[1.0]\n").unwrap();
    fs::write(dir.path().join("cfg2.json"), r#"{"scenario": "bad.json"}"#).unwrap();
    let out = qempc(dir.path(), &["synthesize", "--config", "cfg2.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2, column"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_2() {
    let dir = synthesized();
    let cases: &[&[&str]] = &[
        &["run", "--backend", "rot13"],
        &["run", "--epsilon-q", "2.0"],
        &["bench", "--sweep", "colour=1"],
    ];
    for args in cases {
        assert_eq!(code(&qempc(dir.path(), args)), 2, "{args:?}");
    }
    fs::write(dir.path().join("cfg.json"), r#"{"params": {"delta": 5}}"#).unwrap();
    let out = qempc(dir.path(), &["run", "--config", "cfg.json", "--epsilon-q", "0.001"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("delta"), "{}", stderr(&out));
    fs::write(dir.path().join("unknown.json"), r#"{"sedes": {}}"#).unwrap();
    assert_eq!(code(&qempc(dir.path(), &["run", "--config", "unknown.json"])), 2);
    let empty = TempDir::new().unwrap();
    assert_eq!(code(&qempc(empty.path(), &["run"])), 2);
}

#[test]
fn run_is_deterministic_and_exact_for_qe() {
    let dir = synthesized();
    let args = ["run", "--backend", "qe", "--seed-keys", "7", "--seed-quant", "8"];
    assert_eq!(code(&qempc(dir.path(), &args)), 0);
    let first = read(&dir, "out/trajectory.csv");
    assert_eq!(code(&qempc(dir.path(), &args)), 0);
    assert_eq!(first, read(&dir, "out/trajectory.csv"));

    let mut rdr = csv::Reader::from_reader(first.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let u = headers.iter().position(|h| h == "u1").unwrap();
    let up = headers.iter().position(|h| h == "u_plain1").unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let a: f64 = rec[u].parse().unwrap();
        let b: f64 = rec[up].parse().unwrap();
        assert!((a - b).abs() <= 1e-9);
        rows += 1;
    }
    assert_eq!(rows, 60);
}

#[test]
fn infeasible_start_records_fault_and_exits_1() {
    let dir = synthesized();
    fs::write(dir.path().join("cfg.json"), r#"{"x0": [4.9, 4.9]}"#).unwrap();
    let out = qempc(dir.path(), &["run", "--config", "cfg.json"]);
    assert_eq!(code(&out), 1);
    let csv = read(&dir, "out/trajectory.csv");
    assert!(csv.lines().nth(1).unwrap().starts_with("0,,"), "{csv}");
}

#[test]
fn bench_metrics_are_deterministic_and_ordered() {
    let dir = synthesized();
    let args = ["bench", "--epsilon-q", "0.0009765625", "--sweep", "L=2048"];
    let out = qempc(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let first = read(&dir, "out/metrics.csv");
    assert_eq!(code(&qempc(dir.path(), &args)), 0);
    assert_eq!(first, read(&dir, "out/metrics.csv"));

    let mut rdr = csv::Reader::from_reader(first.as_bytes());
    let h = rdr.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let row = |b: &str| rows.iter().find(|r| &r[0] == b).unwrap().clone();
    let (qe, he) = (row("qe"), row("paillier"));
    assert_eq!(&qe[col("delta")], "10");
    assert_eq!(&qe[col("w")], "10");
    let bits = |r: &csv::StringRecord| r[col("s2c_bits")].parse::<f64>().unwrap() + r[col("c2a_bits")].parse::<f64>().unwrap();
    assert!(bits(&qe) < 0.1 * bits(&he));
    let (n, m) = (2u64, 1u64);
    let int = |r: &csv::StringRecord, c: &str| r[col(c)].parse::<u64>().unwrap();
    assert_eq!([int(&qe, "enc"), int(&qe, "con"), int(&qe, "dec"), int(&qe, "sums")], [n + m, m * n, m * n + m, m * n]);
    assert_eq!(
        [int(&he, "he_enc"), int(&he, "he_mul"), int(&he, "he_add"), int(&he, "he_dec")],
        [n + m, m * n, m * n, m]
    );

    let timing = read(&dir, "out/timing.csv");
    let mut t = csv::Reader::from_reader(timing.as_bytes());
    let th = t.headers().unwrap().clone();
    let total = th.iter().position(|c| c == "total_us").unwrap();
    let trows: Vec<csv::StringRecord> = t.records().map(Result::unwrap).collect();
    let time = |b: &str| trows.iter().find(|r| &r[0] == b).unwrap()[total].parse::<f64>().unwrap();
    assert!(time("qe") < time("paillier"));
}

#[test]
fn attack_table_shape_and_determinism() {
    let dir = synthesized();
    fs::write(dir.path().join("cfg.json"), r#"{"params": {"L": 256}, "attack": {"trials": 3, "steps": 30}}"#).unwrap();
    let args = ["attack", "--config", "cfg.json", "--seed-attack", "5"];
    assert_eq!(code(&qempc(dir.path(), &args)), 0);
    let first = read(&dir, "out/attack.csv");
    assert_eq!(code(&qempc(dir.path(), &args)), 0);
    assert_eq!(first, read(&dir, "out/attack.csv"));
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "noise,plaintext,paillier,qe");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["none", "gaussian", "uniform", "impulse"]);
    let plain_none: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(plain_none < 1e-3);
}
