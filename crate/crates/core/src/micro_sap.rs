//! Reference cell of the sap exudation model.
//!
//! A fiber of radius `R_f` holds a gas core (radius `s_gi`) inside an ice
//! layer (out to `s_iw`) and a thin water layer against the wall. Melt
//! water is driven through the fiber wall into the neighbouring vessel,
//! where it compresses the vessel gas bubble of radius `r`.
//!
//! We integrate in area variables: `a_iw = s_iw²`, the ice area
//! `ice = s_iw² − s_gi²`, and the transferred volume `U`. The vessel bubble
//! and the gas core then follow from linear invariants, so water mass and
//! vessel volume balance hold to rounding at every accepted step.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::annulus::{Annulus, AnnulusResponse, Geometry};
use crate::error::{invalid, Error, Result};
use crate::micro_reduced::StepOutcome;
use crate::thermo::PhaseMaterial;

/// Constants and initial data of the sap model.
#[derive(Debug, Clone, PartialEq)]
pub struct SapParams {
    pub r_f: f64,
    pub l_v: f64,
    pub l_f: f64,
    pub v_f: f64,
    pub v_v: f64,
    pub fiber_area: f64,
    pub wall_thickness: f64,
    pub fibers_per_vessel: f64,
    pub g: f64,
    pub henry: f64,
    pub molar_mass_gas: f64,
    pub r_gas: f64,
    pub sigma_w: f64,
    pub sugar_concentration: f64,
    pub wall_conductivity: f64,
    pub s_gi0: f64,
    pub r0: f64,
    pub u0: f64,
    pub p_gf0: f64,
    pub p_gv0: f64,
    /// Thermal diffusivity used for the gas core after melt.
    pub gas_diffusivity: f64,
}

impl Default for SapParams {
    fn default() -> Self {
        SapParams {
            r_f: 3.5e-6,
            l_v: 5.0e-4,
            l_f: 1.0e-3,
            v_f: 3.85e-14,
            v_v: 6.10e-13,
            fiber_area: 2.20e-8,
            wall_thickness: 3.64e-6,
            fibers_per_vessel: 16.0,
            g: 9.81,
            henry: 0.0274,
            molar_mass_gas: 0.029,
            r_gas: 8.314,
            sigma_w: 0.076,
            sugar_concentration: 58.4,
            wall_conductivity: 1.98e-14,
            s_gi0: 2.5e-6,
            r0: 6.0e-6,
            u0: 0.0,
            p_gf0: 2.0e5,
            p_gv0: 1.0e5,
            gas_diffusivity: 2.0e-5,
        }
    }
}

impl SapParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_f", self.r_f),
            ("l_v", self.l_v),
            ("l_f", self.l_f),
            ("v_f", self.v_f),
            ("v_v", self.v_v),
            ("fiber_area", self.fiber_area),
            ("wall_thickness", self.wall_thickness),
            ("g", self.g),
            ("henry", self.henry),
            ("molar_mass_gas", self.molar_mass_gas),
            ("r_gas", self.r_gas),
            ("sigma_w", self.sigma_w),
            ("sugar_concentration", self.sugar_concentration),
            ("wall_conductivity", self.wall_conductivity),
            ("s_gi0", self.s_gi0),
            ("r0", self.r0),
            ("p_gf0", self.p_gf0),
            ("p_gv0", self.p_gv0),
            ("gas_diffusivity", self.gas_diffusivity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive and finite"));
            }
        }
        if self.fibers_per_vessel < 1.0 {
            return Err(invalid("fibers_per_vessel", "need at least one fiber per vessel"));
        }
        if self.s_gi0 >= self.s_iw0() {
            return Err(invalid("s_gi0", "gas core must sit inside the ice layer"));
        }
        if libm::fabs(self.u0) > 0.5 * self.v_f {
            return Err(invalid("u0", "initial transfer volume exceeds the fiber"));
        }
        Ok(())
    }

    /// Smallest water-layer thickness kept against the fiber wall.
    pub fn wall_gap(&self) -> f64 {
        1e-3 * self.r_f
    }

    /// Initial ice/water radius. The nominal value is the wall itself; we
    /// keep a film of width `wall_gap` so the water annulus is never empty.
    pub fn s_iw0(&self) -> f64 {
        self.r_f - self.wall_gap()
    }

    pub fn a_max(&self) -> f64 {
        let s = self.s_iw0();
        s * s
    }

    /// Ice layer thickness below which the layer counts as melted. Kept
    /// tiny: the leftover latent heat is taken from the macro node at the
    /// event and must not pull it visibly below `T_c`.
    pub fn thickness_min(&self) -> f64 {
        1e-6 * (self.s_iw0() - self.s_gi0)
    }

    /// Vessel gas density at `t = 0` from the ideal gas law at `T_c`.
    pub fn rho_gv0(&self, t_c: f64) -> f64 {
        self.p_gv0 * self.molar_mass_gas / (self.r_gas * t_c)
    }

    /// `K A / (N ρ_w g W)`.
    pub fn darcy_prefactor(&self, rho_w: f64) -> f64 {
        self.wall_conductivity * self.fiber_area / (self.fibers_per_vessel * rho_w * self.g * self.wall_thickness)
    }

    pub fn osmotic_pressure(&self, t1: f64) -> f64 {
        self.r_gas * self.sugar_concentration * t1
    }

    /// Fraction of the unit cell taken by the fiber.
    pub fn fiber_fraction(&self, delta: f64) -> f64 {
        PI * self.r_f * self.r_f / (delta * delta)
    }
}

const RADIUS_FLOOR: f64 = 1e-9;

/// Pressures and vessel gas state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureClosure {
    pub p_wf: f64,
    pub p_wv: f64,
    pub p_gv: f64,
    pub rho_gv: f64,
    pub v_gv: f64,
}

/// Everything the sap cell needs besides its state.
#[derive(Debug, Clone, PartialEq)]
pub struct SapCellParams {
    pub sap: SapParams,
    pub material: PhaseMaterial,
    pub m_micro: usize,
}

impl SapCellParams {
    fn latent(&self) -> f64 {
        self.material.latent_heat()
    }
}

/// State of one fiber/vessel cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SapCellState {
    /// `s_iw²`; after the melt event this is `s_gw²`.
    pub a_iw: f64,
    /// `s_iw² − s_gi²`; zero after the melt event.
    pub ice: f64,
    pub u: f64,
    /// Water temperatures on `[s_iw, R_f]`.
    pub theta: Annulus,
    pub melted: bool,
    /// Heat delivered to the front beyond what the remaining ice needed.
    pub surplus: f64,
}

/// `V_g^v`, `ρ_g^v`, `p_g^v`, `p_w^v`, `p_w^f` in that order.
///
/// The density closure is normalized so that `ρ_g^v` equals its initial
/// value at the initial bubble volume.
pub fn algebraic_closure(s_gi: f64, r: f64, params: &SapParams, t_c: f64, t1: f64) -> Result<PressureClosure> {
    if !(s_gi >= RADIUS_FLOOR) {
        return Err(Error::Domain { what: "gas core radius", value: s_gi });
    }
    if !(r >= RADIUS_FLOOR) {
        return Err(Error::Domain { what: "vessel bubble radius", value: r });
    }
    let p = params;
    let v_gv = PI * r * r * p.l_v;
    let v0 = PI * p.r0 * p.r0 * p.l_v;
    let rho_gv = p.rho_gv0(t_c) * (v0 + p.henry * (p.v_v - v0)) / (v_gv + p.henry * (p.v_v - v_gv));
    let p_gv = rho_gv * p.r_gas * t1 / p.molar_mass_gas;
    let p_wv = p_gv - p.sigma_w / r;
    let p_wf = p.p_gf0 * p.s_gi0 * p.s_gi0 / (s_gi * s_gi) - p.sigma_w / s_gi;
    Ok(PressureClosure { p_wf, p_wv, p_gv, rho_gv, v_gv })
}

/// Darcy flux through the fiber wall, positive from fiber to vessel.
pub fn darcy_rate(closure: &PressureClosure, params: &SapParams, rho_w: f64, t1: f64) -> f64 {
    -params.darcy_prefactor(rho_w) * (closure.p_wv - closure.p_wf - params.osmotic_pressure(t1))
}

/// Interface velocities `(ṡ_iw, ṡ_gi, ṙ)` before the melt event.
///
/// `gradient` is `∂_r T` on the water side of the ice/water interface.
pub fn interface_rates(
    s_iw: f64,
    s_gi: f64,
    r: f64,
    gradient: f64,
    du_dt: f64,
    cell: &SapCellParams,
) -> (f64, f64, f64) {
    let m = &cell.material;
    let p = &cell.sap;
    let ds_iw = -m.water_diffusivity() / cell.latent() * gradient + du_dt / (2.0 * PI * s_iw * p.l_f);
    let ds_gi =
        ((m.rho_i - m.rho_w) * s_iw * ds_iw + m.rho_w * du_dt / (2.0 * PI * p.l_f)) / (m.rho_i * s_gi);
    let dr = -p.fibers_per_vessel * du_dt / (2.0 * PI * r * p.l_v);
    (ds_iw, ds_gi, dr)
}

impl SapCellState {
    pub fn new(cell: &SapCellParams, t1: f64) -> Self {
        let p = &cell.sap;
        let a_iw = p.a_max();
        let mut theta = Annulus::new(p.s_iw0(), p.r_f, cell.m_micro, cell.material.t_c);
        let m = theta.intervals();
        theta.theta[m] = t1;
        SapCellState { a_iw, ice: a_iw - p.s_gi0 * p.s_gi0, u: p.u0, theta, melted: false, surplus: 0.0 }
    }

    pub fn s_iw(&self) -> f64 {
        libm::sqrt(self.a_iw)
    }

    pub fn s_gi(&self) -> f64 {
        libm::sqrt((self.a_iw - self.ice).max(0.0))
    }

    pub fn r_squared(&self, p: &SapParams) -> f64 {
        p.r0 * p.r0 - p.fibers_per_vessel * (self.u - p.u0) / (PI * p.l_v)
    }

    pub fn r(&self, p: &SapParams) -> f64 {
        libm::sqrt(self.r_squared(p).max(0.0))
    }

    pub fn closure(&self, cell: &SapCellParams, t1: f64) -> Result<PressureClosure> {
        algebraic_closure(self.s_gi(), self.r(&cell.sap), &cell.sap, cell.material.t_c, t1)
    }

    /// Water mass per `π L_f`: ice, fiber water and transferred water.
    pub fn water_inventory(&self, cell: &SapCellParams) -> f64 {
        let m = &cell.material;
        let p = &cell.sap;
        m.rho_i * self.ice + m.rho_w * (p.r_f * p.r_f - self.a_iw) + m.rho_w * self.u / (PI * p.l_f)
    }

    pub fn respond(&self, cell: &SapCellParams, dt: f64) -> Result<AnnulusResponse> {
        if self.melted {
            return Ok(AnnulusResponse::inert());
        }
        self.theta.respond(Geometry::Cylindrical, cell.material.water_diffusivity(), cell.material.c_w, dt)
    }

    /// Implicit Euler on `U` with the interface areas tied to it linearly.
    /// `a_base` is `a_iw` at the end of the step if no water moved.
    fn solve_transfer(&self, cell: &SapCellParams, a_base: f64, ice: f64, t1: f64, dt: f64) -> Result<f64> {
        let p = &cell.sap;
        let m = &cell.material;
        let lf = PI * p.l_f;
        let u_old = self.u;
        let a_of = |u: f64| a_base + (u - u_old) / lf;
        let r_floor2 = RADIUS_FLOOR * RADIUS_FLOOR;
        let u_hi = (u_old + lf * (p.a_max() - a_base))
            .min(p.u0 + (p.r0 * p.r0 - 4.0 * r_floor2) * PI * p.l_v / p.fibers_per_vessel);
        let u_lo = u_old + lf * (4.0 * r_floor2 + ice - a_base);
        if u_lo > u_hi {
            return Err(Error::Singular { what: "fiber water transfer (no admissible volume)" });
        }
        let rate = |u: f64| -> Result<f64> {
            let a = a_of(u);
            let s_gi = libm::sqrt(a - ice);
            let rr = libm::sqrt(p.r0 * p.r0 - p.fibers_per_vessel * (u - p.u0) / (PI * p.l_v));
            let c = algebraic_closure(s_gi, rr, p, m.t_c, t1)?;
            Ok(darcy_rate(&c, p, m.rho_w, t1))
        };
        let g = |u: f64| -> Result<f64> { Ok(u - u_old - dt * rate(u)?) };
        // March out from the current volume so the root found is the one
        // the trajectory continues to. Far from it the bubble can collapse
        // under surface tension and the residual changes sign again.
        let u_start = u_old.clamp(u_lo, u_hi);
        let g0 = g(u_start)?;
        if g0 == 0.0 {
            return Ok(u_start);
        }
        let (lim, dir) = if g0 < 0.0 { (u_hi, 1.0) } else { (u_lo, -1.0) };
        let mut step = (2.0 * dt * rate(u_start)?.abs()).max(1e-12 * p.v_f);
        let (mut near, mut g_near) = (u_start, g0);
        let (mut a, mut b, mut ga, mut gb);
        loop {
            let far = if dir * (lim - (near + dir * step)) <= 0.0 { lim } else { near + dir * step };
            let g_far = g(far)?;
            if g_far.signum() != g0.signum() || g_far == 0.0 {
                if dir > 0.0 {
                    (a, b, ga, gb) = (near, far, g_near, g_far);
                } else {
                    (a, b, ga, gb) = (far, near, g_far, g_near);
                }
                break;
            }
            if far == lim {
                return Ok(lim);
            }
            near = far;
            g_near = g_far;
            step *= 2.0;
        }
        if gb == 0.0 {
            return Ok(b);
        }
        if ga == 0.0 {
            return Ok(a);
        }
        // Illinois regula falsi; the bracket always holds a sign change
        let tol = 1e-15 * p.v_f;
        let mut side = 0i8;
        for _ in 0..200 {
            let c = (a * gb - b * ga) / (gb - ga);
            let c = if c > a && c < b { c } else { 0.5 * (a + b) };
            let gc = g(c)?;
            if gc == 0.0 || (b - a) < tol {
                return Ok(c);
            }
            if gc < 0.0 {
                a = c;
                ga = gc;
                if side == -1 {
                    gb *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                gb = gc;
                if side == 1 {
                    ga *= 0.5;
                }
                side = 1;
            }
            if (b - a) < tol {
                return Ok(0.5 * (a + b));
            }
        }
        Err(Error::NoConvergence { what: "fiber water transfer", iterations: 200 })
    }

    /// Completes a step with the new outer temperature `t1`.
    pub fn advance(&mut self, cell: &SapCellParams, resp: &AnnulusResponse, t1: f64, dt: f64) -> Result<StepOutcome> {
        let p = &cell.sap;
        let m = &cell.material;
        let lf = PI * p.l_f;
        if self.melted {
            let u = self.solve_transfer(cell, self.a_iw, 0.0, t1, dt)?;
            self.a_iw = (self.a_iw + (u - self.u) / lf).min(p.a_max());
            self.u = u;
            self.theta.theta.iter_mut().for_each(|t| *t = t1);
            return Ok(StepOutcome::Advanced);
        }
        let q_front = resp.inner_flux(t1).max(0.0);
        let melt_area = dt * q_front / (PI * cell.latent());
        let lose = m.rho_w / m.rho_i * melt_area;
        if lose > self.ice {
            return Ok(StepOutcome::Overshoot(self.ice / lose));
        }
        let ice = self.ice - lose;
        let a_base = self.a_iw - melt_area;
        let u = self.solve_transfer(cell, a_base, ice, t1, dt)?;
        self.a_iw = (a_base + (u - self.u) / lf).min(p.a_max());
        self.ice = ice;
        self.u = u;
        self.theta.theta = resp.theta(t1);
        self.theta.regrid(self.s_iw(), m.t_c);
        Ok(StepOutcome::Advanced)
    }

    /// Completes a step during which the ice layer vanishes; the excess
    /// heat is kept for the melt event.
    pub fn finish(&mut self, cell: &SapCellParams, resp: &AnnulusResponse, t1: f64, dt: f64) -> Result<()> {
        if self.melted {
            return Ok(());
        }
        let m = &cell.material;
        let lf = PI * cell.sap.l_f;
        let q_front = resp.inner_flux(t1).max(0.0);
        let used = m.rho_i / m.rho_w * self.ice;
        self.surplus += dt * q_front - PI * cell.latent() * used;
        let a_base = self.a_iw - used;
        let u = self.solve_transfer(cell, a_base, 0.0, t1, dt)?;
        self.a_iw = (a_base + (u - self.u) / lf).min(cell.sap.a_max());
        self.ice = 0.0;
        self.u = u;
        self.theta.theta = resp.theta(t1);
        Ok(())
    }

    pub fn sap_micro_step(&mut self, cell: &SapCellParams, t1: f64, dt: f64) -> Result<StepOutcome> {
        let resp = self.respond(cell, dt)?;
        self.advance(cell, &resp, t1, dt)
    }

    pub fn ice_thickness(&self) -> f64 {
        self.s_iw() - self.s_gi()
    }

    pub fn melt_ready(&self, cell: &SapCellParams) -> bool {
        !self.melted && self.ice_thickness() <= cell.sap.thickness_min()
    }

    /// Merges the interfaces once the ice layer is gone. The leftover ice
    /// becomes water, so the water inventory is unchanged.
    pub fn sap_melt_transition(&mut self, cell: &SapCellParams, t1: f64) {
        let m = &cell.material;
        self.a_iw -= m.rho_i / m.rho_w * self.ice;
        self.ice = 0.0;
        self.melted = true;
        self.theta.theta.iter_mut().for_each(|t| *t = t1);
    }

    /// `2π R_f D ∂_r T` at the fiber wall.
    pub fn sap_boundary_flux(&self, cell: &SapCellParams) -> f64 {
        if self.melted {
            return 0.0;
        }
        2.0 * PI * cell.sap.r_f * cell.material.water_diffusivity() * self.theta.outer_gradient()
    }

    /// Heat content relative to water at `T_c`, per unit length.
    pub fn energy(&self, cell: &SapCellParams) -> f64 {
        if self.melted {
            return 0.0;
        }
        let m = &cell.material;
        -cell.latent() * PI * m.rho_i / m.rho_w * self.ice
            + self.theta.sensible_heat(Geometry::Cylindrical, m.c_w, m.t_c)
            + self.surplus
    }

    /// Diffusivity at radius `y` inside the fiber after the melt event.
    pub fn post_melt_diffusivity(&self, cell: &SapCellParams, y: f64) -> f64 {
        if y < self.s_iw() {
            cell.sap.gas_diffusivity
        } else {
            cell.material.water_diffusivity()
        }
    }

    pub fn node_radii(&self) -> Vec<f64> {
        self.theta.nodes()
    }
}
