//! Independent oracles: the planar similarity solution of the one-phase
//! Stefan problem and the global energy ledger.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::annulus::{Annulus, Geometry};
use crate::error::{invalid, Error, Result};
use crate::macro_solver::{macro_step, stored_enthalpy, LinearSink, MacroState, NodeCoefficients, RadialGrid};
use crate::micro_reduced::{ReducedCellState, ReducedParams, StepOutcome};
use crate::thermo::{EnthalpyTemperatureMap, PhaseMaterial};

fn neumann_residual(lambda: f64, st: f64) -> f64 {
    lambda * libm::exp(lambda * lambda) * libm::erf(lambda) - st / libm::sqrt(PI)
}

/// Root of `λ e^{λ²} erf(λ) = St/√π` by Newton safeguarded with a bracket.
pub fn neumann_front(st: f64) -> Result<f64> {
    if !(st > 0.0 && st.is_finite()) {
        return Err(invalid("stefan_number", "must be positive"));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while neumann_residual(hi, st) < 0.0 {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::NoConvergence { what: "Neumann bracket", iterations: 6 });
        }
    }
    let mut x = libm::sqrt(st / 2.0).min(0.5 * hi);
    for it in 0..100 {
        let f = neumann_residual(x, st);
        if f.abs() <= 1e-15 * (st / libm::sqrt(PI)) {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let e = libm::exp(x * x);
        let df = e * libm::erf(x) * (1.0 + 2.0 * x * x) + x * 2.0 / libm::sqrt(PI);
        let mut next = x - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
        if it == 99 {
            break;
        }
    }
    Err(Error::NoConvergence { what: "Neumann root", iterations: 100 })
}

/// Plain bisection on the same equation, kept as a cross-check.
pub fn neumann_front_bisection(st: f64) -> Result<f64> {
    if !(st > 0.0) {
        return Err(invalid("stefan_number", "must be positive"));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while neumann_residual(hi, st) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if neumann_residual(mid, st) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Planar similarity solution with the heated wall at `x = wall` and the
/// front moving away from it.
#[derive(Debug, Clone, Copy)]
pub struct NeumannSolution {
    pub lambda: f64,
    pub alpha: f64,
    pub t_wall: f64,
    pub t_melt: f64,
}

impl NeumannSolution {
    pub fn new(material: &PhaseMaterial, t_wall: f64) -> Result<Self> {
        let st = material.c_w * (t_wall - material.t_c) / material.latent_heat();
        Ok(NeumannSolution {
            lambda: neumann_front(st)?,
            alpha: material.water_diffusivity() / material.c_w,
            t_wall,
            t_melt: material.t_c,
        })
    }

    /// Depth of the melted layer.
    pub fn depth(&self, t: f64) -> f64 {
        2.0 * self.lambda * libm::sqrt(self.alpha * t)
    }

    /// Temperature at distance `d` from the wall.
    pub fn temperature(&self, d: f64, t: f64) -> f64 {
        let z = d / (2.0 * libm::sqrt(self.alpha * t));
        self.t_wall - (self.t_wall - self.t_melt) * libm::erf(z) / libm::erf(self.lambda)
    }
}

/// Outcome of the planar front comparison.
#[derive(Debug, Clone)]
pub struct FrontComparison {
    /// `(t, simulated depth, analytic depth)`.
    pub samples: Vec<(f64, f64, f64)>,
    pub max_relative_error: f64,
}

/// Runs the reduced micro solver in planar mode from the similarity
/// profile at `t0` to `t_end` and compares front depths.
pub fn planar_front_check(m_micro: usize, t0: f64, t_end: f64, steps: usize) -> Result<FrontComparison> {
    let material = PhaseMaterial::default();
    let t_wall = material.t_c + 10.0;
    let exact = NeumannSolution::new(&material, t_wall)?;
    // deep slab: the wall sits at `wall`, the ice occupies [0, s]
    let wall = 4.0 * exact.depth(t_end);
    let s_start = wall - exact.depth(t0);
    let mut p = ReducedParams::new(wall, s_start, m_micro, material)?;
    p.geometry = Geometry::Planar;
    p.s_min = 0.0;
    let mut cell = ReducedCellState::new(&p, t_wall);
    cell.theta = Annulus::new(s_start, wall, m_micro, material.t_c);
    for (j, r) in cell.theta.nodes().into_iter().enumerate() {
        cell.theta.theta[j] = exact.temperature(wall - r, t0);
    }
    cell.theta.theta[0] = material.t_c;
    // geometric steps resolve the early √t behaviour
    let ratio = libm::pow(t_end / t0, 1.0 / steps as f64);
    let mut t = t0;
    let mut samples = Vec::new();
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let dt = t * (ratio - 1.0);
        if let StepOutcome::Overshoot(_) = cell.micro_step(&p, t_wall, dt)? {
            return Err(Error::Domain { what: "planar front left the slab", value: t });
        }
        t += dt;
        let sim = wall - cell.s;
        let ana = exact.depth(t);
        if t >= 10.0 * t0 {
            worst = worst.max(((sim - ana) / ana).abs());
        }
        samples.push((t, sim, ana));
    }
    Ok(FrontComparison { samples, max_relative_error: worst })
}

/// Fully melted medium heated through the rim: returns the worst relative
/// mismatch between stored enthalpy gained and heat supplied.
pub fn single_phase_conservation(m: usize, steps: usize, dt: f64) -> Result<f64> {
    let material = PhaseMaterial::default();
    let t_a = material.t_c + 10.0;
    let map = EnthalpyTemperatureMap::new(material)?;
    let grid = RadialGrid::new(0.25, m)?;
    let n = grid.len();
    let coeffs = NodeCoefficients { phi: vec![1.0; n], pi: vec![1.0; n], diffusivity_factor: 1.0 };
    let sinks = vec![LinearSink::default(); n];
    let mut state = MacroState::initial(&map, n, material.t_c + 1.0, t_a)?;
    let h_b = map.omega_inv(t_a)?;
    let e0 = stored_enthalpy(&grid, &state, &coeffs.phi);
    let mut influx = 0.0;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let step = macro_step(&grid, &map, &state, &coeffs, &sinks, h_b, dt)?;
        influx += step.influx;
        state = step.state;
        let gained = stored_enthalpy(&grid, &state, &coeffs.phi) - e0;
        worst = worst.max(((gained - influx) / influx).abs());
    }
    Ok(worst)
}

/// Running energy balance of a multiscale run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    /// Total energy at the start, J/kg·m² per unit height.
    pub initial: f64,
    /// Total energy now.
    pub current: f64,
    /// Heat supplied through the rim so far.
    pub influx: f64,
    /// Heat taken up as latent heat by the cells so far.
    pub latent: f64,
    /// Energy moved from cells into macro nodes at melt events.
    pub deposited: f64,
    /// `(t, relative residual)` at each audit point.
    pub history: Vec<(f64, f64)>,
}

impl EnergyLedger {
    pub fn new(initial: f64) -> Self {
        EnergyLedger { initial, current: initial, ..Default::default() }
    }

    pub fn absolute_residual(&self) -> f64 {
        self.current - self.initial - self.influx
    }

    /// Residual relative to the heat absorbed so far; zero for a run that
    /// absorbed nothing and drifted nowhere.
    pub fn relative_residual(&self) -> f64 {
        let r = self.absolute_residual();
        if self.influx.abs() > 0.0 {
            (r / self.influx).abs()
        } else if r == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn record(&mut self, t: f64, current: f64) {
        self.current = current;
        let r = self.relative_residual();
        self.history.push((t, r));
    }

    pub fn worst_residual(&self) -> f64 {
        self.history.iter().fold(0.0, |a, &(_, r)| a.max(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_stefan_asymptotics() {
        let l = neumann_front(1e-4).unwrap();
        let approx = libm::sqrt(1e-4 / 2.0);
        assert!((l - approx).abs() / approx < 1e-3);
    }

    #[test]
    fn two_root_finders_agree() {
        let st = 4180.0 * 10.0 / 3.33e5;
        let a = neumann_front(st).unwrap();
        let b = neumann_front_bisection(st).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert!(neumann_residual(a, st).abs() <= 1e-12);
    }

    #[test]
    fn rejects_nonpositive_stefan() {
        assert!(neumann_front(0.0).is_err());
        assert!(neumann_front(-1.0).is_err());
    }

    #[test]
    fn similarity_profile_endpoints() {
        let s = NeumannSolution::new(&PhaseMaterial::default(), 283.15).unwrap();
        assert!((s.temperature(0.0, 100.0) - 283.15).abs() < 1e-12);
        assert!((s.temperature(s.depth(100.0), 100.0) - 273.15).abs() < 1e-9);
    }

    #[test]
    fn planar_front_tracks_similarity_solution() {
        let cmp = planar_front_check(64, 100.0, 1.0e4, 2000).unwrap();
        assert!(cmp.max_relative_error < 0.02, "{}", cmp.max_relative_error);
    }

    #[test]
    fn melted_medium_conserves_energy() {
        let r = single_phase_conservation(40, 50, 60.0).unwrap();
        assert!(r < 1e-8, "{r}");
    }

    #[test]
    fn ledger_static() {
        let mut l = EnergyLedger::new(5.0);
        l.record(1.0, 5.0);
        assert_eq!(l.relative_residual(), 0.0);
        assert_eq!(l.influx, 0.0);
        assert_eq!(l.latent, 0.0);
    }
}
