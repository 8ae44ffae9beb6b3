//! The ten acceptance checks. Shared runs are done once and reused.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use msstefan_core::cell::{compute_effective_tensor, fluid_fraction, UnitCellGeometry};
use msstefan_core::engine::{interface_delay, probe_series, run, Serial, SimulationConfig, SimulationResult};
use msstefan_core::verify::{planar_front_check, single_phase_conservation};

use crate::config::RunConfig;
use crate::output::{self, DELAY_ONSET};
use crate::parallel::Rayon;

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Failure that is understood and recorded in the README.
    pub fn known_deviation(&self) -> Option<&'static str> {
        KNOWN_DEVIATIONS.iter().find(|(id, _)| *id == self.id).map(|(_, why)| *why)
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("criterion {:>2} [{tag}] {}: {}", self.id, self.name, self.detail);
        if !self.passed {
            if let Some(why) = self.known_deviation() {
                s.push_str(&format!(" (known deviation: {why})"));
            }
        }
        s
    }
}

/// Criteria the model is known not to meet, with the reason.
pub const KNOWN_DEVIATIONS: &[(u8, &str)] = &[(
    1,
    "the model melts the centre at 27.77 h with M_macro = 200 and about 27.65 h in the mesh limit; the reference figure of 23 h is not reproducible \
     with the stated parameters",
)];

const HOUR: f64 = 3600.0;

struct Bounds {
    worst_low: f64,
    worst_high: f64,
    min_h: f64,
    runs: usize,
}

impl Bounds {
    fn new() -> Self {
        Bounds { worst_low: f64::INFINITY, worst_high: f64::NEG_INFINITY, min_h: f64::INFINITY, runs: 0 }
    }

    /// Tracks how far each run got below `T_c` and above `T_a`.
    fn add(&mut self, c: &SimulationConfig, r: &SimulationResult) {
        self.worst_low = self.worst_low.min(r.stats.min_temperature - c.material.t_c);
        self.worst_high = self.worst_high.max(r.stats.max_temperature - c.ambient_temperature);
        self.min_h = self.min_h.min(r.stats.min_enthalpy);
        self.runs += 1;
    }
}

fn timed(c: &SimulationConfig) -> anyhow::Result<(SimulationResult, Duration)> {
    let start = Instant::now();
    let r = run(c, &Serial)?;
    Ok((r, start.elapsed()))
}

fn hours(t: Option<f64>) -> String {
    t.map_or("never".to_string(), |t| format!("{:.3} h", t / HOUR))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| if x == y { m } else { m.max((x - y).abs()) })
}

/// Largest difference over every recorded field of two runs.
fn result_gap(a: &SimulationResult, b: &SimulationResult) -> f64 {
    let mut gap = 0.0f64;
    if a.snapshots.len() != b.snapshots.len() || a.probes.len() != b.probes.len() {
        return f64::INFINITY;
    }
    let cell = |c: &msstefan_core::engine::CellView| [c.s, c.s_gi, c.r, c.u, c.p_wf, c.p_wv, c.melted as u8 as f64];
    for (s, t) in a.snapshots.iter().chain([&a.final_state]).zip(b.snapshots.iter().chain([&b.final_state])) {
        gap = gap.max((s.t - t.t).abs()).max(sup_diff(&s.h1, &t.h1)).max(sup_diff(&s.t1, &t.t1));
        for (x, y) in s.cells.iter().zip(&t.cells) {
            gap = gap.max(sup_diff(&cell(x), &cell(y)));
        }
        for ((ry, ty), (sy, uy)) in s.micro.iter().zip(&t.micro) {
            gap = gap.max(sup_diff(ry, sy)).max(sup_diff(ty, uy));
        }
    }
    for (p, q) in a.probes.iter().zip(&b.probes) {
        if p.samples.len() != q.samples.len() {
            return f64::INFINITY;
        }
        for (x, y) in p.samples.iter().zip(&q.samples) {
            gap = gap.max(sup_diff(&[x.t, x.h1, x.t1], &[y.t, y.h1, y.t1])).max(sup_diff(&cell(&x.cell), &cell(&y.cell)));
        }
    }
    for (x, y) in a.melt_times.iter().zip(&b.melt_times) {
        match (x, y) {
            (Some(x), Some(y)) => gap = gap.max((x - y).abs()),
            (None, None) => {}
            _ => return f64::INFINITY,
        }
    }
    gap
}

fn same_files(a: &Path, b: &Path) -> anyhow::Result<Option<String>> {
    for name in [
        output::SNAPSHOTS,
        output::MICRO,
        output::PROBES,
        output::MELT_TIMES,
        output::SUMMARY,
        output::CONFIG_ECHO,
        output::MANIFEST,
    ] {
        if fs::read(a.join(name))? != fs::read(b.join(name))? {
            return Ok(Some(name.to_string()));
        }
    }
    Ok(None)
}

fn small(mut c: SimulationConfig, t_end: f64) -> SimulationConfig {
    c.geometry.m_macro = 40;
    c.geometry.cell_resolution = 32;
    c.t_end = t_end;
    c.output.snapshot_times.retain(|&t| t <= t_end);
    c
}

/// Runs every criterion, calling `report` as each one finishes. `work`
/// is scratch space for the determinism files.
pub fn run_all(work: &Path, mut report: impl FnMut(&Check)) -> anyhow::Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut push = |c: Check, out: &mut Vec<Check>| {
        report(&c);
        out.push(c);
    };
    let mut bounds = Bounds::new();

    // 1: reduced model
    let reduced_cfg = SimulationConfig::reduced();
    let (reduced, reduced_time) = timed(&reduced_cfg)?;
    bounds.add(&reduced_cfg, &reduced);
    let t_red = reduced.melt_complete_time;
    let ok1 = t_red.is_some_and(|t| (0.8 * 23.0 * HOUR..=1.2 * 23.0 * HOUR).contains(&t)) && reduced_time.as_secs_f64() <= 300.0;
    push(
        Check {
            id: 1,
            name: "reduced-model melt time",
            passed: ok1,
            detail: format!(
                "last node melts at {} (accept [18.4, 27.6] h), run took {:.1} s (limit 300 s)",
                hours(t_red),
                reduced_time.as_secs_f64()
            ),
        },
        &mut out,
    );

    // 2: sap model
    let sap_cfg = SimulationConfig::sap();
    let (sap, _) = timed(&sap_cfg)?;
    bounds.add(&sap_cfg, &sap);
    let t_sap = sap.melt_complete_time;
    push(
        Check {
            id: 2,
            name: "sap-model melt time",
            passed: t_sap.is_some_and(|t| (1.4 * HOUR..=2.4 * HOUR).contains(&t)),
            detail: format!("fiber ice gone everywhere at {} (accept [1.4, 2.4] h)", hours(t_sap)),
        },
        &mut out,
    );

    // 3: vessel pressure at interior probes
    let mut ok3 = true;
    let mut parts = Vec::new();
    for p in sap.probes.iter().filter(|p| p.radius < sap_cfg.geometry.r_tree) {
        let (first, last) = (p.samples.first().unwrap(), p.samples.last().unwrap());
        let (p0, p1) = (first.cell.p_wv, last.cell.p_wv);
        let good = (210e3..=300e3).contains(&p1) && p1 - p0 >= 90e3;
        ok3 &= good;
        parts.push(format!("x={} m: {:.1} -> {:.1} kPa", p.radius, p0 / 1e3, p1 / 1e3));
    }
    ok3 &= !parts.is_empty();
    push(
        Check {
            id: 3,
            name: "sap pressure rise",
            passed: ok3,
            detail: format!("{} (accept final in [210, 300] kPa, rise >= 90 kPa)", parts.join(", ")),
        },
        &mut out,
    );

    // 4: interface delay at 0.15 m
    let delay = probe_series(&sap, 0.15).and_then(|p| interface_delay(p, DELAY_ONSET));
    push(
        Check {
            id: 4,
            name: "interface delay",
            passed: delay.is_some_and(|d| (0.0..=50.0).contains(&d)),
            detail: format!(
                "s_gi moves {} before s_iw at x=0.15 m (accept 25 +/- 25 s)",
                delay.map_or("never".into(), |d| format!("{d:.2} s"))
            ),
        },
        &mut out,
    );

    // 5: ratio
    let ratio = match (t_red, t_sap) {
        (Some(a), Some(b)) => a / b,
        _ => f64::NAN,
    };
    push(
        Check {
            id: 5,
            name: "cross-model ratio",
            passed: ratio >= 8.0,
            detail: format!("reduced/sap melt time = {ratio:.2} (need >= 8)"),
        },
        &mut out,
    );

    // 6: planar front against the similarity solution
    let front = planar_front_check(64, 100.0, 1.0e4, 2000)?;
    push(
        Check {
            id: 6,
            name: "Neumann oracle",
            passed: front.max_relative_error <= 0.02,
            detail: format!("max front error {:.3e} after the transient (limit 2e-2)", front.max_relative_error),
        },
        &mut out,
    );

    // 7: effective tensor
    let id = compute_effective_tensor(&UnitCellGeometry::new(0.0, 16)?)?;
    let id_err = (id.pi[0][0] - 1.0).abs().max((id.pi[1][1] - 1.0).abs()).max(id.pi[0][1].abs()).max(id.pi[1][0].abs());
    let mut p11 = Vec::new();
    for n in [32, 64, 128] {
        p11.push(compute_effective_tensor(&UnitCellGeometry::new(0.45, n)?)?);
    }
    let fine = &p11[2];
    let ev = fine.eigenvalues();
    let order = ((p11[0].pi[0][0] - p11[1].pi[0][0]) / (p11[1].pi[0][0] - p11[2].pi[0][0])).log2();
    let phi = fluid_fraction(0.45)?;
    let ok7 = id_err <= 1e-12
        && fine.pi[0][1] == fine.pi[1][0]
        && ev[0] > 0.0
        && fine.pi[0][0] <= phi
        && order >= 1.5;
    push(
        Check {
            id: 7,
            name: "effective tensor",
            passed: ok7,
            detail: format!(
                "|Pi(0) - I| = {id_err:.1e}, Pi_11(0.45) = {:.6} <= |Y1| = {phi:.6}, eigenvalues {:.4}/{:.4}, \
                 self-convergence order {order:.2} (need >= 1.5)",
                fine.pi[0][0], ev[0], ev[1]
            ),
        },
        &mut out,
    );

    // 9 (run before 8 so its runs join the bound check)
    let single = single_phase_conservation(200, 200, 60.0)?;
    let mut ladder = Vec::new();
    for (m, mm) in [(50, 2), (100, 4), (200, 8)] {
        let mut c = SimulationConfig::reduced();
        c.geometry.m_macro = m;
        c.geometry.m_micro = mm;
        let r = run(&c, &Serial)?;
        bounds.add(&c, &r);
        ladder.push(r.audit.worst_residual());
    }
    let full = reduced.audit.worst_residual();
    let decreasing = ladder.windows(2).all(|w| w[1] < w[0]);
    let check9 = Check {
        id: 9,
        name: "energy audit",
        passed: single <= 1e-8 && full <= 0.01 && decreasing,
        detail: format!(
            "melted run {single:.1e} (limit 1e-8); multiscale run {:.3}% of absorbed heat (limit 1%); \
             refinement (50,2)/(100,4)/(200,8): {}",
            100.0 * full,
            ladder.iter().map(|r| format!("{:.3}%", 100.0 * r)).collect::<Vec<_>>().join(" > ")
        ),
    };

    // 10: determinism
    let mut det_ok = true;
    let mut det = Vec::new();
    let pool = Rayon::new(4)?;
    for c in [small(SimulationConfig::reduced(), 6.0 * HOUR), small(SimulationConfig::sap(), 1.0 * HOUR)] {
        let a = run(&c, &Serial)?;
        let b = run(&c, &Serial)?;
        let p = run(&c, &pool)?;
        bounds.add(&c, &a);
        bounds.add(&c, &p);
        let rc = RunConfig { sim: c.clone(), directory: None };
        let name = c.scenario.name();
        let (da, db) = (work.join(format!("{name}-a")), work.join(format!("{name}-b")));
        output::write_all(&da, &rc, &a)?;
        output::write_all(&db, &rc, &b)?;
        let differs = same_files(&da, &db)?;
        let gap = result_gap(&a, &p);
        det_ok &= differs.is_none() && gap <= 1e-10;
        det.push(format!(
            "{name}: serial reruns {}, parallel gap {gap:.1e}",
            differs.map_or("byte-identical".to_string(), |f| format!("differ in {f}"))
        ));
    }

    // 8: bounds over every run above
    let ok8 = bounds.worst_low >= -1e-6 && bounds.worst_high <= 1e-6 && bounds.min_h >= 0.0;
    push(
        Check {
            id: 8,
            name: "maximum principle and positivity",
            passed: ok8,
            detail: format!(
                "{} runs: min T - T_c = {:.2e}, max T - T_a = {:.2e}, min H = {:.6e} (limits -1e-6, 1e-6, 0)",
                bounds.runs, bounds.worst_low, bounds.worst_high, bounds.min_h
            ),
        },
        &mut out,
    );
    push(check9, &mut out);
    push(
        Check {
            id: 10,
            name: "determinism",
            passed: det_ok,
            detail: format!("{} (limit 1e-10)", det.join("; ")),
        },
        &mut out,
    );
    Ok(out)
}
