//! Result files. Every float is written as `{:.16e}` so reruns can be
//! compared byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use msstefan_core::engine::{interface_delay, CellView, Scenario, SimulationResult};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ConfigFile, RunConfig};

pub const SNAPSHOTS: &str = "snapshots.csv";
pub const MICRO: &str = "micro.csv";
pub const PROBES: &str = "probes.csv";
pub const MELT_TIMES: &str = "melt_times.csv";
pub const SUMMARY: &str = "summary.json";
pub const CONFIG_ECHO: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";

/// Onset threshold for the interface delay, as a fraction of the initial
/// ice thickness.
pub const DELAY_ONSET: f64 = 1e-3;

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell_header(s: Scenario) -> &'static [&'static str] {
    match s {
        Scenario::Reduced => &["s", "melted"],
        Scenario::Sap => &["s_iw", "s_gi", "r", "U", "p_wf", "p_wv", "melted"],
    }
}

fn cell_fields(s: Scenario, c: &CellView) -> Vec<String> {
    let melted = if c.melted { "1" } else { "0" }.to_string();
    match s {
        Scenario::Reduced => vec![f(c.s), melted],
        Scenario::Sap => vec![f(c.s), f(c.s_gi), f(c.r), f(c.u), f(c.p_wf), f(c.p_wv), melted],
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Serialize)]
pub struct Stats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub overshoot_retries: usize,
    pub melt_events: usize,
    pub min_temperature: f64,
    pub max_temperature: f64,
    pub min_enthalpy: f64,
}

#[derive(Debug, Serialize)]
pub struct Energy {
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub influx: f64,
    pub latent: f64,
    pub deposited: f64,
    pub relative_residual: f64,
    pub worst_relative_residual: f64,
}

#[derive(Debug, Serialize)]
pub struct ProbeSummary {
    pub radius: f64,
    pub node: usize,
    pub x: f64,
    pub melt_time: Option<f64>,
    pub final_temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_p_wv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_p_wv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_p_wf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface_delay: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub scenario: &'static str,
    pub t_end: f64,
    pub pi: f64,
    pub fluid_fraction: f64,
    pub nodes: usize,
    pub nodes_melted: usize,
    pub melt_complete_time: Option<f64>,
    pub melt_complete_hours: Option<f64>,
    pub stats: Stats,
    pub energy: Energy,
    pub probes: Vec<ProbeSummary>,
}

impl Summary {
    pub fn new(cfg: &RunConfig, r: &SimulationResult) -> Self {
        let sap = r.scenario == Scenario::Sap;
        let probes = r
            .probes
            .iter()
            .map(|p| {
                let first = p.samples.first();
                let last = p.samples.last();
                let pick = |s: Option<&msstefan_core::engine::ProbeSample>, g: fn(&CellView) -> f64| {
                    if sap {
                        s.and_then(|s| finite(g(&s.cell)))
                    } else {
                        None
                    }
                };
                ProbeSummary {
                    radius: p.radius,
                    node: p.node,
                    x: p.x,
                    melt_time: r.melt_times[p.node],
                    final_temperature: last.map_or(f64::NAN, |s| s.t1),
                    initial_p_wv: pick(first, |c| c.p_wv),
                    final_p_wv: pick(last, |c| c.p_wv),
                    final_p_wf: pick(last, |c| c.p_wf),
                    interface_delay: if sap { interface_delay(p, DELAY_ONSET) } else { None },
                }
            })
            .collect();
        let a = &r.audit;
        Summary {
            scenario: r.scenario.name(),
            t_end: cfg.sim.t_end,
            pi: r.pi,
            fluid_fraction: r.fluid_fraction,
            nodes: r.x.len(),
            nodes_melted: r.melt_times.iter().filter(|m| m.is_some()).count(),
            melt_complete_time: r.melt_complete_time,
            melt_complete_hours: r.melt_complete_time.map(|t| t / 3600.0),
            stats: Stats {
                accepted_steps: r.stats.accepted,
                rejected_steps: r.stats.rejected,
                overshoot_retries: r.stats.overshoots,
                melt_events: r.stats.melt_events,
                min_temperature: r.stats.min_temperature,
                max_temperature: r.stats.max_temperature,
                min_enthalpy: r.stats.min_enthalpy,
            },
            energy: Energy {
                initial: a.initial,
                last: a.current,
                influx: a.influx,
                latent: a.latent,
                deposited: a.deposited,
                relative_residual: a.relative_residual(),
                worst_relative_residual: a.worst_residual(),
            },
            probes,
        }
    }
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn write_snapshots(path: &Path, r: &SimulationResult) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    let mut head = vec!["t", "node", "x", "H1", "T1"];
    head.extend_from_slice(cell_header(r.scenario));
    w.write_record(&head)?;
    for s in &r.snapshots {
        for i in 0..s.h1.len() {
            let mut row = vec![f(s.t), i.to_string(), f(r.x[i]), f(s.h1[i]), f(s.t1[i])];
            row.extend(cell_fields(r.scenario, &s.cells[i]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_micro(path: &Path, r: &SimulationResult) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "node", "j", "y", "theta"])?;
    for s in &r.snapshots {
        for (i, (y, th)) in s.micro.iter().enumerate() {
            if s.cells[i].melted {
                continue;
            }
            for (j, (y, t)) in y.iter().zip(th).enumerate() {
                w.write_record([f(s.t), i.to_string(), j.to_string(), f(*y), f(*t)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_probes(path: &Path, r: &SimulationResult) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    let mut head = vec!["radius", "node", "x", "t", "H1", "T1"];
    head.extend_from_slice(cell_header(r.scenario));
    w.write_record(&head)?;
    for p in &r.probes {
        for s in &p.samples {
            let mut row = vec![f(p.radius), p.node.to_string(), f(p.x), f(s.t), f(s.h1), f(s.t1)];
            row.extend(cell_fields(r.scenario, &s.cell));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_melt_times(path: &Path, r: &SimulationResult) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["node", "x", "melt_time"])?;
    for (i, m) in r.melt_times.iter().enumerate() {
        w.write_record([i.to_string(), f(r.x[i]), m.map(f).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    program: &'static str,
    version: &'static str,
    scenario: &'static str,
    files: Vec<ManifestEntry>,
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Writes every result file into `dir` and returns their paths.
pub fn write_all(dir: &Path, cfg: &RunConfig, r: &SimulationResult) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_snapshots(&dir.join(SNAPSHOTS), r)?;
    write_micro(&dir.join(MICRO), r)?;
    write_probes(&dir.join(PROBES), r)?;
    write_melt_times(&dir.join(MELT_TIMES), r)?;
    fs::write(dir.join(SUMMARY), to_json(&Summary::new(cfg, r))?)?;
    fs::write(dir.join(CONFIG_ECHO), ConfigFile::from_resolved(cfg).to_toml())?;
    let names = [SNAPSHOTS, MICRO, PROBES, MELT_TIMES, SUMMARY, CONFIG_ECHO];
    let mut files = Vec::new();
    for name in names {
        let bytes = fs::read(dir.join(name))?;
        files.push(ManifestEntry {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario: r.scenario.name(),
        files,
    };
    fs::write(dir.join(MANIFEST), to_json(&manifest)?)?;
    Ok(names.iter().chain([&MANIFEST]).map(|n| dir.join(n)).collect())
}
