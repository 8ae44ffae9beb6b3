//! Radially symmetric enthalpy equation on the tree cross-section:
//!
//! `φ ∂_t H₁ − ∇·(Π D(H₁) ∇T₁) = −q`,  `T₁ = ω(H₁)`,
//!
//! with P1 elements in `r`, a lumped time term, symmetry at `r = 0` and
//! Dirichlet `T₁ = T_a` at `r = R_tree`. `q` is the heat drawn per unit
//! area by the reference cells.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::linalg::Tridiagonal;
use crate::thermo::EnthalpyTemperatureMap;

/// Nodes `x_i = i R / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub x: Vec<f64>,
    /// `2π ∫ N_i r dr`.
    pub mass: Vec<f64>,
}

impl RadialGrid {
    pub fn new(r_tree: f64, m: usize) -> Result<Self> {
        if !(r_tree > 0.0) {
            return Err(invalid("r_tree", "domain radius must be positive"));
        }
        if m < 2 {
            return Err(invalid("m_macro", "need at least two macro elements"));
        }
        let x: Vec<f64> = (0..=m).map(|i| if i == m { r_tree } else { i as f64 * r_tree / m as f64 }).collect();
        let mut mass = vec![0.0; m + 1];
        for e in 0..m {
            let (a, b) = (x[e], x[e + 1]);
            let h = b - a;
            mass[e] += 2.0 * PI * h * (2.0 * a + b) / 6.0;
            mass[e + 1] += 2.0 * PI * h * (a + 2.0 * b) / 6.0;
        }
        Ok(RadialGrid { x, mass })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn elements(&self) -> usize {
        self.x.len() - 1
    }

    /// Index of the node nearest to `r`.
    pub fn nearest(&self, r: f64) -> usize {
        let m = self.elements() as f64;
        let r_tree = self.x[self.elements()];
        libm::round((r / r_tree * m).clamp(0.0, m)) as usize
    }
}

/// Nodal enthalpy and temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub h: Vec<f64>,
    pub t: Vec<f64>,
}

impl MacroState {
    /// `T ≡ t_init` in the interior and `T = t_boundary` at the rim.
    pub fn initial(map: &EnthalpyTemperatureMap, n: usize, t_init: f64, t_boundary: f64) -> Result<Self> {
        let h_in = map.omega_inv(t_init)?;
        let h_bc = map.omega_inv(t_boundary)?;
        let mut h = vec![h_in; n];
        h[n - 1] = h_bc;
        let t = h.iter().map(|&v| map.temperature(v)).collect();
        Ok(MacroState { h, t })
    }

    pub fn sync(&mut self, map: &EnthalpyTemperatureMap) {
        for (t, &h) in self.t.iter_mut().zip(&self.h) {
            *t = map.temperature(h);
        }
    }
}

/// Per-node coefficients: time-term weight `φ` and conductivity scale `Π`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCoefficients {
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    /// Extra multiplier on `D` (1 for the reduced model).
    pub diffusivity_factor: f64,
}

/// Heat drawn per unit area at a node, `value + slope·(T − reference)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinearSink {
    pub reference: f64,
    pub value: f64,
    pub slope: f64,
}

impl LinearSink {
    pub fn eval(&self, t: f64) -> f64 {
        self.value + self.slope * (t - self.reference)
    }
}

/// Result of one implicit macro step.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroStep {
    pub state: MacroState,
    /// Heat entering through the rim over the step, J/kg·m².
    pub influx: f64,
    pub newton_iterations: usize,
}

fn element_conductances(grid: &RadialGrid, map: &EnthalpyTemperatureMap, h: &[f64], coeffs: &NodeCoefficients) -> Vec<f64> {
    (0..grid.elements())
        .map(|e| {
            let (a, b) = (grid.x[e], grid.x[e + 1]);
            let d = map.diffusivity_at(0.5 * (h[e] + h[e + 1]));
            let pi = 0.5 * (coeffs.pi[e] + coeffs.pi[e + 1]);
            2.0 * PI * coeffs.diffusivity_factor * pi * d * 0.5 * (a + b) / (b - a)
        })
        .collect()
}

/// Time derivative of `H₁` from the semi-discrete equations; the rim node
/// reports zero because it is held by the boundary condition.
pub fn assemble_macro_rhs(
    grid: &RadialGrid,
    map: &EnthalpyTemperatureMap,
    state: &MacroState,
    coeffs: &NodeCoefficients,
    sinks: &[LinearSink],
) -> Vec<f64> {
    let n = grid.len();
    let k = element_conductances(grid, map, &state.h, coeffs);
    let mut out = vec![0.0; n];
    for (e, ke) in k.iter().enumerate() {
        let flow = ke * (state.t[e + 1] - state.t[e]);
        out[e] += flow;
        out[e + 1] -= flow;
    }
    for i in 0..n {
        out[i] = (out[i] - grid.mass[i] * sinks[i].eval(state.t[i])) / (grid.mass[i] * coeffs.phi[i]);
    }
    out[n - 1] = 0.0;
    out
}

/// Imposes `H₁ = ω⁻¹(T_a)` at the rim.
pub fn apply_boundary_conditions(map: &EnthalpyTemperatureMap, state: &mut MacroState, t_a: f64) -> Result<()> {
    let n = state.h.len();
    state.h[n - 1] = map.omega_inv(t_a)?;
    state.t[n - 1] = map.temperature(state.h[n - 1]);
    Ok(())
}

/// One implicit Euler step, Newton on `H` with conductivities frozen at the
/// old state and the cell sinks taken implicitly through their linear form.
pub fn macro_step(
    grid: &RadialGrid,
    map: &EnthalpyTemperatureMap,
    old: &MacroState,
    coeffs: &NodeCoefficients,
    sinks: &[LinearSink],
    h_boundary: f64,
    dt: f64,
) -> Result<MacroStep> {
    let n = grid.len();
    let m = n - 1;
    let k = element_conductances(grid, map, &old.h, coeffs);
    let mut h = old.h.clone();
    h[m] = h_boundary;
    let mut jac = Tridiagonal::zeros(m);
    let mut res = vec![0.0; m];
    let mut scratch = Vec::new();
    let mut t = vec![0.0; n];
    let mut iterations = 0;
    let scale = old.h.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    loop {
        for i in 0..n {
            t[i] = map.temperature(h[i]);
        }
        for i in 0..m {
            let cap = grid.mass[i] * coeffs.phi[i] / dt;
            let mut r = cap * (h[i] - old.h[i]) + grid.mass[i] * sinks[i].eval(t[i]);
            let mut kd = grid.mass[i] * sinks[i].slope;
            if i > 0 {
                r += k[i - 1] * (t[i] - t[i - 1]);
                kd += k[i - 1];
                jac.lower[i] = -k[i - 1] * map.slope(h[i - 1]);
            }
            r += k[i] * (t[i] - t[i + 1]);
            kd += k[i];
            if i + 1 < m {
                jac.upper[i] = -k[i] * map.slope(h[i + 1]);
            }
            jac.diag[i] = cap + kd * map.slope(h[i]);
            res[i] = -r;
        }
        jac.solve_in_place(&mut res, &mut scratch)?;
        iterations += 1;
        let mut biggest = 0.0f64;
        for i in 0..m {
            let mut next = h[i] + res[i];
            if next < 0.0 {
                next = 0.5 * h[i];
            }
            biggest = biggest.max((next - h[i]).abs());
            h[i] = next;
        }
        if !biggest.is_finite() {
            return Err(Error::NoConvergence { what: "macro Newton", iterations });
        }
        if biggest <= 1e-13 * scale {
            break;
        }
        if iterations >= 40 {
            return Err(Error::NoConvergence { what: "macro Newton", iterations });
        }
    }
    for i in 0..n {
        t[i] = map.temperature(h[i]);
    }
    // reaction at the rim = heat supplied through the boundary
    let rate = grid.mass[m] * coeffs.phi[m] * (h[m] - old.h[m]) / dt
        + k[m - 1] * (t[m] - t[m - 1])
        + grid.mass[m] * sinks[m].eval(t[m]);
    Ok(MacroStep { state: MacroState { h, t }, influx: dt * rate, newton_iterations: iterations })
}

/// `Σ m_i φ_i H_i`.
pub fn stored_enthalpy(grid: &RadialGrid, state: &MacroState, phi: &[f64]) -> f64 {
    grid.mass.iter().zip(phi).zip(&state.h).map(|((m, p), h)| m * p * h).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::PhaseMaterial;

    fn setup(m: usize) -> (RadialGrid, EnthalpyTemperatureMap) {
        (RadialGrid::new(0.25, m).unwrap(), EnthalpyTemperatureMap::new(PhaseMaterial::default()).unwrap())
    }

    fn water(n: usize) -> NodeCoefficients {
        NodeCoefficients { phi: vec![1.0; n], pi: vec![1.0; n], diffusivity_factor: 1.0 }
    }

    #[test]
    fn grid_mass_is_disk_area() {
        let (g, _) = setup(37);
        let total: f64 = g.mass.iter().sum();
        assert!((total - PI * 0.0625).abs() < 1e-14);
        assert_eq!(g.nearest(0.15), 22);
        assert_eq!(g.x[37], 0.25);
    }

    #[test]
    fn equilibrium_has_zero_rate() {
        let (g, map) = setup(20);
        let s = MacroState::initial(&map, 21, 283.15, 283.15).unwrap();
        let rhs = assemble_macro_rhs(&g, &map, &s, &water(21), &vec![LinearSink::default(); 21]);
        assert!(rhs.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rim_condition() {
        let (_, map) = setup(10);
        let mut s = MacroState::initial(&map, 11, 273.15, 273.15).unwrap();
        apply_boundary_conditions(&map, &mut s, 283.15).unwrap();
        assert!((s.t[10] - 283.15).abs() < 1e-9);
        assert!((s.t[0] - 273.15).abs() < 1e-9);
    }

    #[test]
    fn static_when_boundary_is_at_melting() {
        let (g, map) = setup(10);
        let s = MacroState::initial(&map, 11, 273.15, 273.15).unwrap();
        let step = macro_step(&g, &map, &s, &water(11), &vec![LinearSink::default(); 11], s.h[10], 100.0).unwrap();
        for i in 0..11 {
            assert!((step.state.h[i] - s.h[i]).abs() < 1e-9);
        }
        assert!(step.influx.abs() < 1e-6);
    }

    #[test]
    fn radial_poisson_steady_state() {
        let m = 400;
        let (g, map) = setup(m);
        let q0 = 2.0e-3;
        let kappa = map.material().water_diffusivity();
        let sinks = vec![LinearSink { reference: 0.0, value: q0, slope: 0.0 }; m + 1];
        let mut s = MacroState::initial(&map, m + 1, 283.15, 283.15).unwrap();
        for _ in 0..20 {
            s = macro_step(&g, &map, &s, &water(m + 1), &sinks, s.h[m], 1e12).unwrap().state;
        }
        let drop = q0 * 0.0625 / (4.0 * kappa);
        for (i, &x) in g.x.iter().enumerate() {
            let exact = 283.15 - q0 * (0.0625 - x * x) / (4.0 * kappa);
            assert!((s.t[i] - exact).abs() <= 1e-4 * drop, "node {i}: {} vs {exact}", s.t[i]);
        }
    }

    #[test]
    fn melted_configuration_conserves_enthalpy() {
        let (g, map) = setup(50);
        let coeffs = water(51);
        let sinks = vec![LinearSink::default(); 51];
        let mut s = MacroState::initial(&map, 51, 273.15, 283.15).unwrap();
        s.h.iter_mut().for_each(|h| *h += 1.0e4);
        s.sync(&map);
        apply_boundary_conditions(&map, &mut s, 283.15).unwrap();
        for _ in 0..30 {
            let before = stored_enthalpy(&g, &s, &coeffs.phi);
            let step = macro_step(&g, &map, &s, &coeffs, &sinks, s.h[50], 60.0).unwrap();
            let after = stored_enthalpy(&g, &step.state, &coeffs.phi);
            assert!((after - before - step.influx).abs() <= 1e-8 * step.influx.abs());
            for &t in &step.state.t {
                assert!((273.15 - 1e-6..=283.15 + 1e-6).contains(&t));
            }
            s = step.state;
        }
        assert!(s.t.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}
