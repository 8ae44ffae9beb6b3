use std::fs;
use std::path::Path;
use std::process::Command;

use msstefan::config::{default_file, ConfigFile};
use msstefan_core::engine::{Scenario, SimulationConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msstefan"))
}

const TINY: &str = r#"
scenario = "reduced"
t_end = 3600.0
[geometry]
m_macro = 12
cell_resolution = 16
[solver]
rtol = 1e-4
atol = 1e-7
[output]
snapshot_times = [0.0, 1800.0, 3600.0]
"#;

fn run_tiny(dir: &Path, extra: &[&str]) -> std::process::Output {
    let cfg = dir.join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.join("out");
    bin().arg("run").arg(&cfg).arg("--out").arg(&out).args(extra).output().unwrap()
}

#[test]
fn run_writes_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_tiny(tmp.path(), &["--serial"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    for f in ["snapshots.csv", "micro.csv", "probes.csv", "melt_times.csv", "summary.json", "config.toml", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let mut rd = csv::Reader::from_path(out.join("snapshots.csv")).unwrap();
    let head = rd.headers().unwrap().clone();
    assert_eq!(head.iter().collect::<Vec<_>>(), ["t", "node", "x", "H1", "T1", "s", "melted"]);
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3 * 13);
    // the rim is held at T_a
    let last = &rows[rows.len() - 1];
    let t1: f64 = last[4].parse().unwrap();
    assert!((t1 - 283.15).abs() < 1e-9);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"], "reduced");
    assert!(summary["energy"]["relative_residual"].as_f64().unwrap() < 0.05);
}

#[test]
fn echo_reruns_to_identical_results() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_tiny(tmp.path(), &["--serial"]).status.success());
    let echo = tmp.path().join("out/config.toml");
    let again = tmp.path().join("again");
    let o = bin().arg("run").arg(&echo).arg("--out").arg(&again).arg("--serial").output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["snapshots.csv", "probes.csv", "melt_times.csv", "summary.json"] {
        assert_eq!(fs::read(tmp.path().join("out").join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn threads_match_serial() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_tiny(a.path(), &["--serial"]).status.success());
    assert!(run_tiny(b.path(), &["-j", "3"]).status.success());
    for f in ["snapshots.csv", "micro.csv", "probes.csv"] {
        assert_eq!(fs::read(a.path().join("out").join(f)).unwrap(), fs::read(b.path().join("out").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_config_reports_key_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "scenario = \"sap\"\n[solver]\nrtoll = 1e-3\n").unwrap();
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rtoll") && err.contains("line 3"), "{err}");

    fs::write(&cfg, "scenario = \"reduced\"\n[geometry]\ns0_fraction = 0.6\n").unwrap();
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("s0_fraction"), "{err}");
}

#[test]
fn shipped_configs_match_defaults() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let r = ConfigFile::load(&dir.join("reduced.toml")).unwrap().resolve().unwrap();
    assert_eq!(r.sim, SimulationConfig::reduced());
    let s = ConfigFile::load(&dir.join("sap.toml")).unwrap().resolve().unwrap();
    assert_eq!(s.sim, SimulationConfig::sap());
}

#[test]
fn defaults_command_prints_loadable_toml() {
    let o = bin().args(["defaults", "sap"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let f = ConfigFile::parse(&text, Path::new("stdout")).unwrap();
    assert_eq!(f, default_file(Scenario::Sap));
}

#[test]
fn cell_table_prints_identity_for_empty_cell() {
    let o = bin().args(["cell-table", "--gamma-hat", "0", "--resolution", "8"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("1.0000000000"), "{text}");
}
