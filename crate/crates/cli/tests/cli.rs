use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use adbid_cli::commands::{SimReport, SweepReport};
use adbid_core::solver::SolveReport;
use adbid_core::PolicyTable;
use tempfile::TempDir;

const PURCHASE: &str = r#"{
  "model": {"kind": "purchase", "K": 2, "rho": 1},
  "eta": {"eta_I": 1, "eta_T": 1},
  "channel_T": {"dist": {"kind": "constant", "value": 0.5}, "rule": "second_price"},
  "sim": {"paths": 100000, "seed": 3},
  "sweep": {"param": "rho", "values": [0.5, 1, 2]}
}"#;

const POPULATION: &str = r#"{
  "model": {"kind": "social_population", "K": 1, "M": 4},
  "eta": {"eta_I": 0.5, "eta_T": 1, "eta_NT": 0, "eta_S": 1},
  "channel_T": {"dist": {"kind": "constant", "value": 0.4}, "rule": "second_price"},
  "sim": {"paths": 10000, "seed": 3},
  "sweep": {"param": "eta_S", "values": [0.5, 1, 2]},
  "meanfield": {"quad_n": 100000, "m_list": [10, 100, 1000]}
}"#;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn adbid(args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_adbid")).args(args).output().unwrap();
    Out {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_purchase_example() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", PURCHASE);
    let out = adbid(&["solve", "--config", s(&cfg), "--format", "csv"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let mut lines = out.stdout.lines();
    assert_eq!(lines.next(), Some("model,method,optimal_value,bid_min,evaluations"));
    let f: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(f[0], "purchase");
    let v: f64 = f[2].parse().unwrap();
    assert!((v - 7.0 / 6.0).abs() < 1e-12);
    assert!((v - 1.16667).abs() < 1e-5);
    assert_eq!(f[3].parse::<f64>().unwrap(), 0.5);
}

#[test]
fn solve_population_example() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m4.json", POPULATION);
    let out = adbid(&["solve", "--config", s(&cfg), "--format", "csv"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.starts_with("p,bid_T,bid_NT,v\n"));
    let table = PolicyTable::read_csv(out.stdout.as_bytes()).unwrap();
    assert_eq!(table.rows().len(), 4);
    assert!((table.total() - 3.05556).abs() < 1e-5);
}

#[test]
fn malformed_json_names_the_location() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.json", "{\"model\": {\"kind\": \"purchase\",, }");
    let out = adbid(&["solve", "--config", s(&cfg)]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("line 1 column"), "{}", out.stderr);
}

#[test]
fn validation_errors_exit_2_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    for (text, field) in [
        (POPULATION.replace("\"quad_n\": 100000", "\"quad_n\": 1"), "quad_n"),
        (PURCHASE.replace("[0.5, 1, 2]", "[]"), "sweep.values"),
        (POPULATION.replace("\"eta_NT\": 0", "\"eta_NT\": 1"), "channel_NT"),
        (PURCHASE.replace("\"rho\": 1", "\"rho\": -1"), "rho"),
        (PURCHASE.replace("\"eta_T\": 1", "\"eta_T\": 1, \"eta_S\": 2"), "eta_S"),
    ] {
        let cfg = write(&dir, "c.json", &text);
        let out = adbid(&["solve", "--config", s(&cfg)]);
        assert_eq!(out.code, 2, "{field}: {}", out.stderr);
        assert!(out.stderr.contains(field), "{field}: {}", out.stderr);
    }
    let cfg = write(&dir, "ok.json", PURCHASE);
    assert_eq!(adbid(&["meanfield", "--config", s(&cfg)]).code, 2);
    assert_eq!(adbid(&["solve", "--config", s(&dir.path().join("missing.json"))]).code, 2);
    assert_eq!(adbid(&["solve", "--config", s(&cfg), "--format", "xml"]).code, 2);
}

#[test]
fn purchase_sweep_verdicts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", PURCHASE);
    let out = adbid(&["sweep", "--config", s(&cfg), "--format", "csv"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let rows: Vec<Vec<&str>> = out.stdout.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let v: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let b: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
    assert!(b[0] <= b[1] && b[1] <= b[2], "{b:?}");
    let verdicts: Vec<&str> = out.stderr.lines().filter(|l| l.starts_with("verdict\t")).collect();
    assert_eq!(verdicts.len(), 2);
    assert!(verdicts.iter().all(|l| l.ends_with("\tok")));
}

#[test]
fn population_sweep_targeted_bids_fall_in_p() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m4.json", POPULATION);
    let out = adbid(&["sweep", "--config", s(&cfg), "--format", "json"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let report: SweepReport = serde_json::from_str(&out.stdout).unwrap();
    for row in &report.rows {
        assert!(row.bid_t.windows(2).all(|w| w[1] <= w[0]));
    }
    assert!(report.verdicts.iter().any(|v| v.claim.starts_with("bid_T(p)")));
    assert!(report.verdicts.iter().all(|v| v.ok));
}

#[test]
fn simulate_baseline_purchase() {
    let dir = TempDir::new().unwrap();
    let text = PURCHASE.replace("\"eta_T\": 1", "\"eta_T\": 0");
    let cfg = write(&dir, "p.json", &text);
    let out = adbid(&["simulate", "--config", s(&cfg), "--format", "json"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let r: SimReport = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(r.analytic, 1.0);
    assert!(r.z.abs() <= 3.0, "z = {}", r.z);
}

#[test]
fn z_tripwire_exits_4() {
    let dir = TempDir::new().unwrap();
    let text = PURCHASE.replacen('{', "{\"z_threshold\": 1e-9,", 1);
    let cfg = write(&dir, "p.json", &text);
    let out = adbid(&["simulate", "--config", s(&cfg), "--paths", "1000"]);
    assert_eq!(out.code, 4, "{}", out.stderr);
    assert!(out.stderr.contains("exceeds"));
}

#[test]
fn halved_policy_is_detectably_worse() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m4.json", POPULATION);
    let out = adbid(&["solve", "--config", s(&cfg), "--format", "csv"]);
    assert_eq!(out.code, 0);
    let table = PolicyTable::read_csv(out.stdout.as_bytes()).unwrap();
    let optimal = table.total();
    let policy = write(&dir, "half.csv", &table.scaled(0.5).unwrap().to_csv_string());
    let out = adbid(&["simulate", "--config", s(&cfg), "--policy", s(&policy), "--format", "json"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let r: SimReport = serde_json::from_str(&out.stdout).unwrap();
    assert!(r.mean - optimal > 3.0 * r.std_error, "mean {} optimal {optimal} se {}", r.mean, r.std_error);

    let wrong_m = write(&dir, "m3.csv", &PolicyTable::constant(3, 0.4, 0.0).unwrap().to_csv_string());
    assert_eq!(adbid(&["simulate", "--config", s(&cfg), "--policy", s(&wrong_m)]).code, 2);
}

#[test]
fn seed_repetition_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m4.json", POPULATION);
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = adbid(&["simulate", "--config", s(&cfg), "--seed", seed, "--format", "csv", "--out", s(&path)]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        fs::read(path).unwrap()
    };
    let a = run("a.csv", "99");
    assert_eq!(a, run("b.csv", "99"));
    assert_ne!(a, run("c.csv", "100"));
}

#[test]
fn event_log_is_written() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "p.json", PURCHASE);
    let log = dir.path().join("events.tsv");
    let out = adbid(&["simulate", "--config", s(&cfg), "--paths", "50", "--event-log", s(&log)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let text = fs::read_to_string(log).unwrap();
    assert_eq!(text.lines().next(), Some("path\ttime\tkind\tindividual\twon\tpayment"));
    assert!(text.lines().count() > 50);
}

#[test]
fn json_reports_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m4.json", POPULATION);
    let out = adbid(&["solve", "--config", s(&cfg), "--format", "json"]);
    let report: SolveReport = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", out.stdout);

    let out = adbid(&["simulate", "--config", s(&cfg), "--format", "json", "--paths", "500"]);
    let sim: SimReport = serde_json::from_str(&out.stdout).unwrap();
    let again: SimReport = serde_json::from_str(&serde_json::to_string(&sim).unwrap()).unwrap();
    assert_eq!(sim, again);

    let out = adbid(&["sweep", "--config", s(&cfg), "--format", "json"]);
    let sw: SweepReport = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(serde_json::to_string_pretty(&sw).unwrap() + "\n", out.stdout);
}

#[test]
fn meanfield_gap_shrinks() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m4.json", POPULATION);
    let out = adbid(&["meanfield", "--config", s(&cfg), "--format", "csv"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let rows: Vec<Vec<f64>> =
        out.stdout.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0][3] > rows[1][3] && rows[1][3] > rows[2][3]);
    assert!(rows.iter().all(|r| r[5] <= 1e-5));
}
