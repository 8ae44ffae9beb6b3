//! Split-step driver: cell responses, implicit macro step with the cells
//! condensed in, cell completion, events, adaptivity and bookkeeping.

use alloc::vec;
use alloc::vec::Vec;

use crate::annulus::AnnulusResponse;
use crate::cell::{compute_effective_tensor, fluid_fraction, UnitCellGeometry};
use crate::error::{invalid, Error, Result};
use crate::macro_solver::{macro_step, LinearSink, MacroState, NodeCoefficients, RadialGrid};
use crate::micro_reduced::{ReducedCellState, ReducedParams, StepOutcome};
use crate::micro_sap::{SapCellParams, SapCellState, SapParams};
use crate::thermo::{EnthalpyTemperatureMap, PhaseMaterial};
use crate::verify::EnergyLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Reduced,
    Sap,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Reduced => "reduced",
            Scenario::Sap => "sap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub r_tree: f64,
    /// Reference cell edge, m.
    pub delta: f64,
    /// `γ/δ` for the reduced model; the sap model uses `R_f/δ`.
    pub gamma_hat: f64,
    /// Initial ice-bar radius as a fraction of `δ` (reduced model).
    pub s0_fraction: f64,
    pub m_macro: usize,
    pub m_micro: usize,
    /// Elements per edge of the unit-cell mesh.
    pub cell_resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    /// Multiplier on `D` in the macro equation.
    pub macro_diffusivity_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { rtol: 1e-6, atol: 1e-9, dt_init: 0.1, dt_max: 60.0, dt_min: 1e-9, macro_diffusivity_factor: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    /// Snapshot times, s.
    pub snapshot_times: Vec<f64>,
    /// Probe radii, m.
    pub probe_radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub t_end: f64,
    pub initial_temperature: f64,
    pub ambient_temperature: f64,
    pub geometry: GeometryConfig,
    pub material: PhaseMaterial,
    pub sap: SapParams,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

const HOUR: f64 = 3600.0;

impl SimulationConfig {
    pub fn reduced() -> Self {
        let material = PhaseMaterial::default();
        SimulationConfig {
            scenario: Scenario::Reduced,
            t_end: 30.0 * HOUR,
            initial_temperature: material.t_c,
            ambient_temperature: material.t_c + 10.0,
            geometry: GeometryConfig {
                r_tree: 0.25,
                delta: 1.0e-3,
                gamma_hat: 0.45,
                s0_fraction: 0.1,
                m_macro: 200,
                m_micro: 4,
                cell_resolution: 64,
            },
            material,
            sap: SapParams::default(),
            solver: SolverConfig::default(),
            output: OutputConfig {
                snapshot_times: [0.0, 2.0, 5.0, 10.0, 15.0, 20.0, 23.0].iter().map(|h| h * HOUR).collect(),
                probe_radii: vec![0.0, 0.15, 0.25],
            },
        }
    }

    pub fn sap() -> Self {
        let mut c = Self::reduced();
        let sap = SapParams::default();
        c.scenario = Scenario::Sap;
        c.t_end = 3.0 * HOUR;
        c.geometry.delta = 3.6e-5;
        c.geometry.gamma_hat = sap.r_f / c.geometry.delta;
        c.sap = sap;
        c.solver.macro_diffusivity_factor = 10.0;
        c.output.snapshot_times = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0].iter().map(|h| h * HOUR).collect();
        c
    }

    pub fn for_scenario(s: Scenario) -> Self {
        match s {
            Scenario::Reduced => Self::reduced(),
            Scenario::Sap => Self::sap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        let g = &self.geometry;
        if !(g.r_tree > 0.0) {
            return Err(invalid("geometry.r_tree", "must be positive"));
        }
        if !(g.delta > 0.0) {
            return Err(invalid("geometry.delta", "must be positive"));
        }
        if !(g.gamma_hat >= 0.0 && g.gamma_hat < 0.5) {
            return Err(invalid("geometry.gamma_hat", "exclusion radius must lie in [0, 0.5); the circle would leave the cell"));
        }
        if self.scenario == Scenario::Reduced && !(g.s0_fraction > 0.0 && g.s0_fraction < g.gamma_hat) {
            return Err(invalid("geometry.s0_fraction", "initial ice radius must lie in (0, gamma_hat)"));
        }
        if g.m_macro < 2 || g.m_micro < 1 {
            return Err(invalid("geometry.m_macro", "need m_macro >= 2 and m_micro >= 1"));
        }
        let s = &self.solver;
        for (name, v) in [
            ("solver.rtol", s.rtol),
            ("solver.atol", s.atol),
            ("solver.dt_init", s.dt_init),
            ("solver.dt_max", s.dt_max),
            ("solver.dt_min", s.dt_min),
            ("solver.macro_diffusivity_factor", s.macro_diffusivity_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if s.dt_min > s.dt_init || s.dt_init > s.dt_max {
            return Err(invalid("solver.dt_init", "need dt_min <= dt_init <= dt_max"));
        }
        if !(self.t_end > 0.0) {
            return Err(invalid("t_end", "must be positive"));
        }
        if self.ambient_temperature < self.material.t_c || self.initial_temperature < self.material.t_c {
            return Err(invalid("ambient_temperature", "thaw scenarios need temperatures at or above T_c"));
        }
        for &r in &self.output.probe_radii {
            if !(0.0..=g.r_tree).contains(&r) {
                return Err(invalid("output.probe_radii", "probe radius outside [0, r_tree]"));
            }
        }
        if self.output.snapshot_times.iter().any(|&t| !(t >= 0.0)) {
            return Err(invalid("output.snapshot_times", "snapshot times must be nonnegative"));
        }
        if self.scenario == Scenario::Sap {
            self.sap.validate()?;
            if self.sap.r_f >= 0.5 * g.delta {
                return Err(invalid("sap.r_f", "fiber must fit inside the reference cell"));
            }
        }
        Ok(())
    }

    /// `γ/δ` actually used for the cell problem.
    pub fn effective_gamma_hat(&self) -> f64 {
        match self.scenario {
            Scenario::Reduced => self.geometry.gamma_hat,
            Scenario::Sap => self.sap.r_f / self.geometry.delta,
        }
    }
}

/// Runs per-cell work, either in order or on a pool. Implementations must
/// hand item `i` to `f(i, ..)` and return results in index order.
pub trait Executor: Sync {
    fn map<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync + Send;
}

/// In-order execution on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync + Send,
    {
        items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CellModel {
    Reduced(ReducedParams),
    Sap(SapCellParams),
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Reduced(ReducedCellState),
    Sap(SapCellState),
}

/// Observable state of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellView {
    /// Ice radius (reduced) or ice/water radius (sap).
    pub s: f64,
    pub s_gi: f64,
    pub r: f64,
    pub u: f64,
    pub p_wf: f64,
    pub p_wv: f64,
    pub melted: bool,
}

impl Cell {
    fn respond(&self, model: &CellModel, dt: f64) -> Result<AnnulusResponse> {
        match (self, model) {
            (Cell::Reduced(c), CellModel::Reduced(p)) => c.respond(p, dt),
            (Cell::Sap(c), CellModel::Sap(p)) => c.respond(p, dt),
            _ => unreachable!("cell and model kinds always match"),
        }
    }

    fn advance(&mut self, model: &CellModel, resp: &AnnulusResponse, t1: f64, dt: f64) -> Result<StepOutcome> {
        match (self, model) {
            (Cell::Reduced(c), CellModel::Reduced(p)) => Ok(c.advance(p, resp, t1, dt)),
            (Cell::Sap(c), CellModel::Sap(p)) => c.advance(p, resp, t1, dt),
            _ => unreachable!("cell and model kinds always match"),
        }
    }

    fn finish(&mut self, model: &CellModel, resp: &AnnulusResponse, t1: f64, dt: f64) -> Result<()> {
        match (self, model) {
            (Cell::Reduced(c), CellModel::Reduced(p)) => {
                c.finish(p, resp, t1, dt);
                Ok(())
            }
            (Cell::Sap(c), CellModel::Sap(p)) => c.finish(p, resp, t1, dt),
            _ => unreachable!("cell and model kinds always match"),
        }
    }

    fn melted(&self) -> bool {
        match self {
            Cell::Reduced(c) => c.melted,
            Cell::Sap(c) => c.melted,
        }
    }

    fn melt_ready(&self, model: &CellModel) -> bool {
        match (self, model) {
            (Cell::Reduced(c), CellModel::Reduced(p)) => c.melt_ready(p),
            (Cell::Sap(c), CellModel::Sap(p)) => c.melt_ready(p),
            _ => unreachable!("cell and model kinds always match"),
        }
    }

    fn melt(&mut self, model: &CellModel, t1: f64) {
        match (self, model) {
            (Cell::Reduced(c), CellModel::Reduced(p)) => {
                c.detect_melt(p);
                c.theta.theta.iter_mut().for_each(|t| *t = t1);
            }
            (Cell::Sap(c), CellModel::Sap(p)) => c.sap_melt_transition(p, t1),
            _ => unreachable!("cell and model kinds always match"),
        }
    }

    fn energy(&self, model: &CellModel) -> f64 {
        match (self, model) {
            (Cell::Reduced(c), CellModel::Reduced(p)) => c.energy(p),
            (Cell::Sap(c), CellModel::Sap(p)) => c.energy(p),
            _ => unreachable!("cell and model kinds always match"),
        }
    }

    /// Components entering the local error estimate, each of order one.
    fn error_components(&self, model: &CellModel, out: &mut Vec<f64>) {
        match (self, model) {
            (Cell::Reduced(c), CellModel::Reduced(p)) => {
                let a = c.s / p.s0;
                out.push(a * a);
            }
            (Cell::Sap(c), CellModel::Sap(p)) => {
                let a0 = p.sap.a_max() - p.sap.s_gi0 * p.sap.s_gi0;
                out.push(c.ice / a0);
                out.push(c.a_iw / p.sap.a_max());
                out.push(c.u / p.sap.v_f);
            }
            _ => unreachable!("cell and model kinds always match"),
        }
    }

    fn view(&self, model: &CellModel, t1: f64) -> CellView {
        match (self, model) {
            (Cell::Reduced(c), CellModel::Reduced(_)) => CellView { s: c.s, melted: c.melted, ..Default::default() },
            (Cell::Sap(c), CellModel::Sap(p)) => {
                let cl = c.closure(p, t1).ok();
                CellView {
                    s: c.s_iw(),
                    s_gi: c.s_gi(),
                    r: c.r(&p.sap),
                    u: c.u,
                    p_wf: cl.map_or(f64::NAN, |c| c.p_wf),
                    p_wv: cl.map_or(f64::NAN, |c| c.p_wv),
                    melted: c.melted,
                }
            }
            _ => unreachable!("cell and model kinds always match"),
        }
    }

    fn theta(&self) -> (&[f64], Vec<f64>) {
        match self {
            Cell::Reduced(c) => (&c.theta.theta, c.theta.nodes()),
            Cell::Sap(c) => (&c.theta.theta, c.theta.nodes()),
        }
    }
}

/// Full state at one snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub h1: Vec<f64>,
    pub t1: Vec<f64>,
    pub cells: Vec<CellView>,
    /// Micro node radii and temperatures per macro node.
    pub micro: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub t: f64,
    pub h1: f64,
    pub t1: f64,
    pub cell: CellView,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub radius: f64,
    pub node: usize,
    pub x: f64,
    pub samples: Vec<ProbeSample>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    pub overshoots: usize,
    pub melt_events: usize,
    pub min_temperature: f64,
    pub max_temperature: f64,
    pub min_enthalpy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub scenario: Scenario,
    pub x: Vec<f64>,
    pub pi: f64,
    pub fluid_fraction: f64,
    pub snapshots: Vec<Snapshot>,
    pub final_state: Snapshot,
    pub melt_times: Vec<Option<f64>>,
    /// Time at which the last node melted.
    pub melt_complete_time: Option<f64>,
    pub probes: Vec<ProbeSeries>,
    pub audit: EnergyLedger,
    pub stats: RunStats,
}

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub safety: f64,
    pub growth_cap: f64,
    pub shrink_floor: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Controller {
    pub fn new(dt_min: f64, dt_max: f64) -> Self {
        Controller { safety: 0.9, growth_cap: 2.0, shrink_floor: 0.2, dt_min, dt_max }
    }
}

/// PI controller on a first-order local error estimate. `estimate` and
/// `previous` are normalized so that 1 is the tolerance.
pub fn adapt_dt(estimate: f64, previous: f64, dt: f64, c: &Controller) -> Result<f64> {
    if !(estimate >= 0.0) {
        return Err(Error::Domain { what: "error estimate", value: estimate });
    }
    let factor = if estimate == 0.0 {
        c.growth_cap
    } else {
        let prev = previous.max(1e-4);
        c.safety * libm::pow(estimate, -0.35) * libm::pow(prev, 0.2)
    };
    let mut factor = factor.clamp(c.shrink_floor, c.growth_cap);
    if estimate > 1.0 {
        factor = factor.min(c.safety);
    }
    let next = (dt * factor).min(c.dt_max);
    if next < c.dt_min {
        return Err(Error::StepUnderflow { t: f64::NAN, dt: next });
    }
    Ok(next)
}

/// Samples recorded for the node nearest `radius`.
pub fn probe_series(result: &SimulationResult, radius: f64) -> Option<&ProbeSeries> {
    result
        .probes
        .iter()
        .min_by(|a, b| (a.radius - radius).abs().partial_cmp(&(b.radius - radius).abs()).unwrap())
}

/// Time by which `s_gi` starts rising before `s_iw` starts falling at one
/// probe. Onsets are the first samples that move by more than `fraction`
/// of the initial ice thickness.
pub fn interface_delay(series: &ProbeSeries, fraction: f64) -> Option<f64> {
    let first = series.samples.first()?;
    let thickness = first.cell.s - first.cell.s_gi;
    let tol = fraction * thickness;
    let gi = series.samples.iter().find(|s| s.cell.s_gi - first.cell.s_gi > tol)?.t;
    let iw = series.samples.iter().find(|s| first.cell.s - s.cell.s > tol)?.t;
    Some(iw - gi)
}

struct Engine<'a, E: Executor> {
    cfg: &'a SimulationConfig,
    exec: &'a E,
    map: EnthalpyTemperatureMap,
    grid: RadialGrid,
    model: CellModel,
    cells: Vec<Cell>,
    state: MacroState,
    coeffs: NodeCoefficients,
    melt_times: Vec<Option<f64>>,
    h_boundary: f64,
    h_c: f64,
    inv_cell_area: f64,
    phi0: f64,
    pi0: f64,
    stats: RunStats,
}

impl<'a, E: Executor> Engine<'a, E> {
    fn new(cfg: &'a SimulationConfig, exec: &'a E) -> Result<Self> {
        cfg.validate()?;
        let map = EnthalpyTemperatureMap::new(cfg.material)?;
        let g = &cfg.geometry;
        let grid = RadialGrid::new(g.r_tree, g.m_macro)?;
        let gamma_hat = cfg.effective_gamma_hat();
        let tensor = compute_effective_tensor(&UnitCellGeometry::new(gamma_hat, g.cell_resolution)?)?;
        let phi0 = fluid_fraction(gamma_hat)?;
        let pi0 = tensor.scalar();
        let n = grid.len();
        let state = MacroState::initial(&map, n, cfg.initial_temperature, cfg.ambient_temperature)?;
        let model = match cfg.scenario {
            Scenario::Reduced => CellModel::Reduced(ReducedParams::new(
                g.gamma_hat * g.delta,
                g.s0_fraction * g.delta,
                g.m_micro,
                cfg.material,
            )?),
            Scenario::Sap => CellModel::Sap(SapCellParams {
                sap: cfg.sap.clone(),
                material: cfg.material,
                m_micro: g.m_micro,
            }),
        };
        let cells = state
            .t
            .iter()
            .map(|&t1| match &model {
                CellModel::Reduced(p) => Cell::Reduced(ReducedCellState::new(p, t1)),
                CellModel::Sap(p) => Cell::Sap(SapCellState::new(p, t1)),
            })
            .collect();
        let coeffs = NodeCoefficients {
            phi: vec![phi0; n],
            pi: vec![pi0; n],
            diffusivity_factor: cfg.solver.macro_diffusivity_factor,
        };
        let h_boundary = map.omega_inv(cfg.ambient_temperature)?;
        let h_c = map.omega_inv(cfg.material.t_c)?;
        let t_lo = state.t.iter().cloned().fold(f64::INFINITY, f64::min);
        let t_hi = state.t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let h_lo = state.h.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Engine {
            cfg,
            exec,
            map,
            grid,
            model,
            cells,
            state,
            coeffs,
            melt_times: vec![None; n],
            h_boundary,
            h_c,
            inv_cell_area: 1.0 / (g.delta * g.delta),
            phi0,
            pi0,
            stats: RunStats { min_temperature: t_lo, max_temperature: t_hi, min_enthalpy: h_lo, ..Default::default() },
        })
    }

    fn cell_energy_density(&self, i: usize) -> f64 {
        if self.cells[i].melted() {
            0.0
        } else {
            (1.0 - self.coeffs.phi[i]) * self.h_c + self.cells[i].energy(&self.model) * self.inv_cell_area
        }
    }

    fn total_energy(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.grid.mass[i] * (self.coeffs.phi[i] * self.state.h[i] + self.cell_energy_density(i)))
            .sum()
    }

    fn error_vector(&self, cells: &[Cell], t: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(t);
        for c in cells {
            c.error_components(&self.model, out);
        }
    }

    fn snapshot(&self, t: f64) -> Snapshot {
        let cells = self.cells.iter().zip(&self.state.t).map(|(c, &t1)| c.view(&self.model, t1)).collect();
        let micro = self
            .cells
            .iter()
            .map(|c| {
                let (th, r) = c.theta();
                (r, th.to_vec())
            })
            .collect();
        Snapshot { t, h1: self.state.h.clone(), t1: self.state.t.clone(), cells, micro }
    }

    fn track_bounds(&mut self) {
        for &t in &self.state.t {
            self.stats.min_temperature = self.stats.min_temperature.min(t);
            self.stats.max_temperature = self.stats.max_temperature.max(t);
        }
        for &h in &self.state.h {
            self.stats.min_enthalpy = self.stats.min_enthalpy.min(h);
        }
        for c in &self.cells {
            if c.melted() {
                continue;
            }
            for &t in c.theta().0 {
                self.stats.min_temperature = self.stats.min_temperature.min(t);
                self.stats.max_temperature = self.stats.max_temperature.max(t);
            }
        }
    }

    fn run(mut self) -> Result<SimulationResult> {
        let cfg = self.cfg;
        let n = self.grid.len();
        let m = n - 1;
        let ctrl = Controller::new(cfg.solver.dt_min, cfg.solver.dt_max);
        let mut ledger = EnergyLedger::new(self.total_energy());
        let mut snap_times: Vec<f64> = cfg.output.snapshot_times.iter().cloned().filter(|&t| t <= cfg.t_end).collect();
        snap_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        snap_times.dedup();
        let mut next_snap = 0;
        let mut snapshots = Vec::new();
        let mut probes: Vec<ProbeSeries> = cfg
            .output
            .probe_radii
            .iter()
            .map(|&r| {
                let node = self.grid.nearest(r);
                ProbeSeries { radius: r, node, x: self.grid.x[node], samples: Vec::new() }
            })
            .collect();
        let record_probes = |eng: &Self, probes: &mut Vec<ProbeSeries>, t: f64| {
            for p in probes.iter_mut() {
                let i = p.node;
                p.samples.push(ProbeSample {
                    t,
                    h1: eng.state.h[i],
                    t1: eng.state.t[i],
                    cell: eng.cells[i].view(&eng.model, eng.state.t[i]),
                });
            }
        };
        record_probes(&self, &mut probes, 0.0);
        while next_snap < snap_times.len() && snap_times[next_snap] <= 0.0 {
            snapshots.push(self.snapshot(0.0));
            next_snap += 1;
        }
        ledger.record(0.0, ledger.initial);

        let mut t = 0.0;
        let mut dt = cfg.solver.dt_init;
        let mut y_now = Vec::new();
        self.error_vector(&self.cells, &self.state.t, &mut y_now);
        let mut y_prev: Option<(Vec<f64>, f64)> = None;
        let mut err_prev = 1.0;
        let mut completing = false;
        // cells that have overshot once and are about to melt
        let mut pending = vec![false; n];
        let per_cell = match self.model {
            CellModel::Reduced(_) => 1,
            CellModel::Sap(_) => 3,
        };
        let mut y_new = Vec::new();
        let rtol = cfg.solver.rtol;
        let atol = cfg.solver.atol;
        let n_t = n;

        while t < cfg.t_end * (1.0 - 1e-14) {
            let mut target = cfg.t_end;
            if next_snap < snap_times.len() {
                target = target.min(snap_times[next_snap]);
            }
            let mut step = dt.min(target - t);
            let landing = step >= target - t;
            if !landing && target - t - step < 0.1 * step {
                // avoid a sliver step right before a landing point
                step = 0.5 * (target - t);
            }
            let model = &self.model;
            let responses: Vec<Result<AnnulusResponse>> =
                self.exec.map(&mut self.cells, |_, c| c.respond(model, step));
            let mut resp = Vec::with_capacity(n);
            let mut failed = false;
            for r in responses {
                match r {
                    Ok(r) => resp.push(r),
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            let sinks: Vec<LinearSink> = if failed {
                Vec::new()
            } else {
                resp.iter()
                    .map(|r| LinearSink {
                        reference: r.reference,
                        value: r.outer.0 * self.inv_cell_area,
                        slope: r.outer.1 * self.inv_cell_area,
                    })
                    .collect()
            };
            let macro_result = if failed {
                Err(Error::Singular { what: "cell response" })
            } else {
                macro_step(&self.grid, &self.map, &self.state, &self.coeffs, &sinks, self.h_boundary, step)
            };
            let mstep = match macro_result {
                Ok(s) => s,
                Err(_) => {
                    self.stats.rejected += 1;
                    dt = step * 0.25;
                    if dt < cfg.solver.dt_min {
                        return Err(Error::StepUnderflow { t, dt });
                    }
                    continue;
                }
            };
            let mut trial = self.cells.clone();
            let t_new = &mstep.state.t;
            let outcomes: Vec<Result<StepOutcome>> = self.exec.map(&mut trial, |i, c| {
                match c.advance(model, &resp[i], t_new[i], step) {
                    // second attempt at the same event: let the ice run out inside the step
                    Ok(StepOutcome::Overshoot(_)) if completing => {
                        c.finish(model, &resp[i], t_new[i], step).map(|_| StepOutcome::Advanced)
                    }
                    other => other,
                }
            });
            let mut shrink: Option<f64> = None;
            let mut hard_fail = false;
            for (i, o) in outcomes.iter().enumerate() {
                match o {
                    Ok(StepOutcome::Advanced) => {}
                    Ok(StepOutcome::Overshoot(f)) => {
                        pending[i] = true;
                        shrink = Some(shrink.map_or(*f, |s: f64| s.min(*f)));
                    }
                    Err(_) => hard_fail = true,
                }
            }
            if hard_fail {
                self.stats.rejected += 1;
                dt = step * 0.25;
                if dt < cfg.solver.dt_min {
                    return Err(Error::StepUnderflow { t, dt });
                }
                continue;
            }
            if let Some(f) = shrink {
                // aim a little past the point where the ice runs out so the
                // retry usually finishes the ice inside the step
                self.stats.overshoots += 1;
                completing = true;
                dt = step * (1.05 * f).min(1.0);
                if dt < cfg.solver.dt_min {
                    return Err(Error::StepUnderflow { t, dt });
                }
                continue;
            }
            // local error estimate against linear extrapolation
            self.error_vector(&trial, t_new, &mut y_new);
            let mut estimate = None;
            if let Some((ref yp, dt_prev)) = y_prev {
                let ratio = step / dt_prev;
                let scale = step / (step + dt_prev);
                let mut worst = 0.0f64;
                for k in 0..y_new.len() {
                    // cells at their melt event have no smooth history to compare with
                    if k >= n_t && {
                        let c = (k - n_t) / per_cell;
                        pending[c] || trial[c].melt_ready(&self.model)
                    } {
                        continue;
                    }
                    let pred = y_now[k] + ratio * (y_now[k] - yp[k]);
                    let w = if k < n_t { atol + rtol * y_new[k].abs() } else { atol + rtol };
                    let v = scale * (y_new[k] - pred).abs() / w;
                    worst = worst.max(v);
                }
                estimate = Some(worst);
            }
            if let Some(e) = estimate {
                if e > 1.0 {
                    self.stats.rejected += 1;
                    dt = adapt_dt(e, err_prev, step, &ctrl).map_err(|_| Error::StepUnderflow { t, dt: step })?;
                    continue;
                }
            }

            // accept
            completing = false;
            for (i, r) in resp.iter().enumerate() {
                if !self.cells[i].melted() {
                    ledger.latent += step * r.inner_flux(t_new[i]).max(0.0) * self.grid.mass[i] * self.inv_cell_area;
                }
            }
            self.cells = trial;
            self.state = mstep.state;
            ledger.influx += mstep.influx;
            t = if landing { target } else { t + step };
            self.stats.accepted += 1;

            let mut event = false;
            for i in 0..n {
                if self.cells[i].melt_ready(&self.model) {
                    let cell_part = self.cell_energy_density(i);
                    let merged = self.coeffs.phi[i] * self.state.h[i] + cell_part;
                    ledger.deposited += self.grid.mass[i] * cell_part;
                    self.coeffs.phi[i] = 1.0;
                    self.coeffs.pi[i] = 1.0;
                    if i == m {
                        // the rim stays at T_a; the boundary supplies the difference
                        ledger.influx += self.grid.mass[i] * (self.h_boundary - merged);
                    } else {
                        self.state.h[i] = merged;
                        self.state.t[i] = self.map.temperature(merged);
                    }
                    let t1 = self.state.t[i];
                    self.cells[i].melt(&self.model, t1);
                    self.melt_times[i] = Some(t);
                    pending[i] = false;
                    self.stats.melt_events += 1;
                    event = true;
                }
            }
            self.track_bounds();
            record_probes(&self, &mut probes, t);
            ledger.record(t, self.total_energy());

            if landing && next_snap < snap_times.len() && (t - snap_times[next_snap]).abs() <= 1e-9 * t.max(1.0) {
                snapshots.push(self.snapshot(t));
                next_snap += 1;
            }

            let e = estimate.unwrap_or(0.0);
            let grown = if estimate.is_some() {
                adapt_dt(e, err_prev, step, &ctrl)?
            } else {
                (step * 1.5).min(ctrl.dt_max)
            };
            err_prev = e.max(1e-4);
            if event {
                y_prev = None;
                self.error_vector(&self.cells, &self.state.t, &mut y_now);
                dt = step.max(dt);
            } else {
                y_prev = Some((core::mem::take(&mut y_now), step));
                y_now = core::mem::take(&mut y_new);
                dt = if landing { grown.max(dt) } else { grown };
            }
        }

        let melt_complete_time = if self.melt_times.iter().all(|m| m.is_some()) {
            self.melt_times.iter().map(|m| m.unwrap()).fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.max(b))))
        } else {
            None
        };
        let final_state = self.snapshot(t);
        Ok(SimulationResult {
            scenario: cfg.scenario,
            x: self.grid.x.clone(),
            pi: self.pi0,
            fluid_fraction: self.phi0,
            snapshots,
            final_state,
            melt_times: self.melt_times,
            melt_complete_time,
            probes,
            audit: ledger,
            stats: self.stats,
        })
    }
}

/// Runs a full simulation.
pub fn run<E: Executor>(config: &SimulationConfig, exec: &E) -> Result<SimulationResult> {
    Engine::new(config, exec)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_limits() {
        let c = Controller::new(1e-6, 60.0);
        assert_eq!(adapt_dt(0.0, 1.0, 10.0, &c).unwrap(), 20.0);
        assert_eq!(adapt_dt(0.0, 1.0, 50.0, &c).unwrap(), 60.0);
        assert!((adapt_dt(1.0, 1.0, 10.0, &c).unwrap() - 9.0).abs() < 1e-12);
        assert!(adapt_dt(4.0, 1.0, 10.0, &c).unwrap() < 10.0);
        assert!(adapt_dt(1e6, 1.0, 1e-6, &c).is_err());
        assert!(adapt_dt(-1.0, 1.0, 1.0, &c).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::reduced().validate().is_ok());
        assert!(SimulationConfig::sap().validate().is_ok());
        let mut c = SimulationConfig::reduced();
        c.geometry.gamma_hat = 0.6;
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::reduced();
        c.output.probe_radii.push(0.3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn no_forcing_no_melting() {
        let mut c = SimulationConfig::reduced();
        c.geometry.m_macro = 10;
        c.geometry.cell_resolution = 16;
        c.ambient_temperature = c.material.t_c;
        c.t_end = 3600.0;
        let r = run(&c, &Serial).unwrap();
        assert!(r.melt_times.iter().all(|m| m.is_none()));
        assert!(r.melt_complete_time.is_none());
        let s0 = &r.snapshots[0];
        for (a, b) in s0.h1.iter().zip(&r.final_state.h1) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(r.audit.influx.abs() < 1e-6);
    }
}
