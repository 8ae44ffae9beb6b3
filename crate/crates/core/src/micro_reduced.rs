//! Reference cell of the reduced model: a shrinking ice bar of radius `s`
//! surrounded by a water annulus out to the artificial boundary `γ`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::annulus::{Annulus, AnnulusResponse, Geometry};
use crate::error::{invalid, Result};
use crate::thermo::PhaseMaterial;

/// Fixed data shared by every reduced cell of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedParams {
    /// Physical radius of Γ, m.
    pub gamma: f64,
    /// Initial ice-bar radius, m.
    pub s0: f64,
    /// Melt threshold on the radius, m.
    pub s_min: f64,
    pub m_micro: usize,
    pub geometry: Geometry,
    pub material: PhaseMaterial,
}

impl ReducedParams {
    pub fn new(gamma: f64, s0: f64, m_micro: usize, material: PhaseMaterial) -> Result<Self> {
        if !(s0 > 0.0 && s0 < gamma) {
            return Err(invalid("s0", "initial ice radius must lie in (0, gamma)"));
        }
        if m_micro < 1 {
            return Err(invalid("m_micro", "need at least one micro element"));
        }
        Ok(ReducedParams { gamma, s0, s_min: 1e-3 * s0, m_micro, geometry: Geometry::Cylindrical, material })
    }

    fn latent(&self) -> f64 {
        self.material.latent_heat()
    }

    fn water_diffusivity(&self) -> f64 {
        self.material.water_diffusivity()
    }

    /// Ice measure: disk area (cylindrical) or slab thickness (planar).
    fn ice_measure(&self, s: f64) -> f64 {
        match self.geometry {
            Geometry::Cylindrical => PI * s * s,
            Geometry::Planar => s,
        }
    }
}

/// State of one reduced cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCellState {
    pub s: f64,
    /// Water temperatures on `[s, γ]`; empty after the melt event.
    pub theta: Annulus,
    pub melted: bool,
    /// Heat delivered to the front beyond what the remaining ice needed.
    pub surplus: f64,
}

/// What happened to a cell over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Advanced,
    /// The ice would have vanished part way through the step; the value is
    /// the fraction of the step after which it runs out.
    Overshoot(f64),
}

impl ReducedCellState {
    pub fn new(p: &ReducedParams, t1: f64) -> Self {
        let mut theta = Annulus::new(p.s0, p.gamma, p.m_micro, p.material.t_c);
        let m = theta.intervals();
        theta.theta[m] = t1;
        ReducedCellState { s: p.s0, theta, melted: false, surplus: 0.0 }
    }

    /// Implicit response of the water annulus to the outer temperature.
    pub fn respond(&self, p: &ReducedParams, dt: f64) -> Result<AnnulusResponse> {
        if self.melted {
            return Ok(AnnulusResponse::inert());
        }
        self.theta.respond(p.geometry, p.water_diffusivity(), p.material.c_w, dt)
    }

    /// Completes a step once the outer temperature is known: commits the
    /// temperatures, moves the front with the heat actually delivered to it
    /// and restretches the grid.
    pub fn advance(&mut self, p: &ReducedParams, resp: &AnnulusResponse, t1: f64, dt: f64) -> StepOutcome {
        if self.melted {
            return StepOutcome::Advanced;
        }
        let q_front = resp.inner_flux(t1).max(0.0);
        let have = p.ice_measure(self.s);
        let lose = dt * q_front / p.latent();
        if lose > have {
            return StepOutcome::Overshoot(have / lose);
        }
        self.theta.theta = resp.theta(t1);
        let left = have - lose;
        self.s = match p.geometry {
            Geometry::Cylindrical => libm::sqrt(left / PI),
            Geometry::Planar => left,
        };
        self.theta.regrid(self.s, p.material.t_c);
        StepOutcome::Advanced
    }

    /// Completes a step during which the bar vanishes. The grid is left in
    /// place and the excess heat is kept so the melt event can hand it on.
    pub fn finish(&mut self, p: &ReducedParams, resp: &AnnulusResponse, t1: f64, dt: f64) {
        if self.melted {
            return;
        }
        let q_front = resp.inner_flux(t1).max(0.0);
        self.surplus += dt * q_front - p.latent() * p.ice_measure(self.s);
        self.theta.theta = resp.theta(t1);
        self.s = 0.0;
    }

    /// Convenience step with a prescribed outer temperature.
    pub fn micro_step(&mut self, p: &ReducedParams, t1: f64, dt: f64) -> Result<StepOutcome> {
        let resp = self.respond(p, dt)?;
        Ok(self.advance(p, &resp, t1, dt))
    }

    /// Front speed from the finite-difference interface gradient.
    pub fn stefan_rate(&self, p: &ReducedParams) -> f64 {
        if self.melted {
            return 0.0;
        }
        stefan_rate_from_gradient(self.theta.inner_gradient(), p.water_diffusivity(), p.latent())
    }

    /// `2π γ D ∂_r T` at the cell boundary; the same number in unit-cell
    /// coordinates because the normalization cancels.
    pub fn boundary_flux(&self, p: &ReducedParams) -> f64 {
        if self.melted {
            return 0.0;
        }
        p.geometry.weight(p.gamma) * p.water_diffusivity() * self.theta.outer_gradient()
    }

    pub fn melt_ready(&self, p: &ReducedParams) -> bool {
        !self.melted && self.s <= p.s_min
    }

    /// Applies the melt event when the threshold is crossed.
    pub fn detect_melt(&mut self, p: &ReducedParams) -> bool {
        if self.melt_ready(p) {
            self.s = 0.0;
            self.melted = true;
            true
        } else {
            false
        }
    }

    /// Energy stored in Y² relative to water at `T_c`, per unit length.
    pub fn energy(&self, p: &ReducedParams) -> f64 {
        if self.melted {
            return 0.0;
        }
        -p.latent() * p.ice_measure(self.s)
            + self.theta.sensible_heat(p.geometry, p.material.c_w, p.material.t_c)
            + self.surplus
    }

    pub fn nodal_temperatures(&self) -> &[f64] {
        &self.theta.theta
    }

    pub fn node_radii(&self) -> Vec<f64> {
        self.theta.nodes()
    }
}

/// `ds/dt = −D/(H_w − H_i) · ∂_r T`.
pub fn stefan_rate_from_gradient(gradient: f64, diffusivity: f64, latent: f64) -> f64 {
    -diffusivity / latent * gradient
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annulus::steady_profile;

    fn params() -> ReducedParams {
        ReducedParams::new(4.5e-4, 1e-4, 4, PhaseMaterial::default()).unwrap()
    }

    #[test]
    fn quiescent_cell_stays_put() {
        let p = params();
        let mut c = ReducedCellState::new(&p, 273.15);
        for _ in 0..10 {
            c.micro_step(&p, 273.15, 60.0).unwrap();
        }
        assert!((c.s - 1e-4).abs() < 1e-18);
        assert!(c.theta.theta.iter().all(|&t| (t - 273.15).abs() < 1e-10));
        assert!(c.stefan_rate(&p).abs() < 1e-12);
        assert!(c.boundary_flux(&p).abs() < 1e-12);
    }

    #[test]
    fn finish_keeps_the_heat() {
        let p = params();
        let mut c = ReducedCellState::new(&p, 283.15);
        let e0 = c.energy(&p);
        let r = c.respond(&p, 1e5).unwrap();
        let q = r.outer_flux(283.15);
        assert!(matches!(c.advance(&p, &r, 283.15, 1e5), StepOutcome::Overshoot(_)));
        c.finish(&p, &r, 283.15, 1e5);
        assert_eq!(c.s, 0.0);
        assert!(c.melt_ready(&p));
        assert!(c.surplus > 0.0);
        let e1 = c.energy(&p);
        assert!(((e1 - e0) - 1e5 * q).abs() <= 1e-9 * (1e5 * q).abs());
    }

    #[test]
    fn stefan_rate_hand_value() {
        let r = stefan_rate_from_gradient(1000.0, 5.56e-4, 3.33e5);
        assert!((r + 1.67e-6).abs() < 1e-8);
    }

    #[test]
    fn relaxes_to_log_profile() {
        let mut p = params();
        p.m_micro = 16;
        let mut c = ReducedCellState::new(&p, 283.15);
        let resp_dt = 5.0;
        // hold the front still: integrate the field only
        for _ in 0..400 {
            let r = c.respond(&p, resp_dt).unwrap();
            c.theta.theta = r.theta(283.15);
        }
        for (y, t) in c.node_radii().iter().zip(&c.theta.theta) {
            let exact = steady_profile(Geometry::Cylindrical, 1e-4, 4.5e-4, 273.15, 283.15, *y);
            assert!((t - exact).abs() <= 1e-3 * 10.0, "{t} vs {exact}");
        }
        let grad = c.theta.inner_gradient();
        assert!(c.stefan_rate(&p) < 0.0 && grad > 0.0);
        let q = c.boundary_flux(&p);
        let exact = 2.0 * PI * p.material.water_diffusivity() * 10.0 / libm::log(4.5);
        assert!((q - exact).abs() < 0.05 * exact);
    }

    #[test]
    fn melt_threshold() {
        let p = params();
        let mut c = ReducedCellState::new(&p, 273.15);
        c.s = 2.0 * p.s_min;
        assert!(!c.detect_melt(&p));
        c.s = 0.5 * p.s_min;
        assert!(c.detect_melt(&p));
        assert!(c.melted && c.s == 0.0);
        c.micro_step(&p, 283.15, 10.0).unwrap();
        assert!(c.melted);
    }

    #[test]
    fn bounded_between_boundary_values() {
        let p = params();
        let mut c = ReducedCellState::new(&p, 273.15);
        let mut t1: f64 = 273.15;
        for k in 0..200 {
            t1 = (t1 + 0.05).min(283.15);
            if let StepOutcome::Overshoot(_) = c.micro_step(&p, t1, 30.0 + k as f64).unwrap() {
                break;
            }
            for &t in &c.theta.theta {
                assert!(t >= 273.15 - 1e-12 && t <= t1 + 1e-12);
            }
        }
    }
}
