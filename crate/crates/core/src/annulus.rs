//! Implicit P1 heat conduction on a one-dimensional annulus `[inner, outer]`.
//!
//! The inner node carries a fixed (Dirichlet) value, the outer node is tied
//! to the macroscale temperature. One implicit Euler step is affine in that
//! outer temperature, so we return the response as `base + slope·T₁` and let
//! the macro solver fold it into its own Newton system.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::Result;
use crate::linalg::Tridiagonal;

/// Radial weight of the micro problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Circular cross-section, weight `2πr`.
    Cylindrical,
    /// Slab with unit weight; used by the similarity oracle.
    Planar,
}

impl Geometry {
    pub fn weight(self, r: f64) -> f64 {
        match self {
            Geometry::Cylindrical => 2.0 * PI * r,
            Geometry::Planar => 1.0,
        }
    }

    /// `∫ N_a w dr` and `∫ N_b w dr` over `[a, b]`.
    fn lumped(self, a: f64, b: f64) -> (f64, f64) {
        let h = b - a;
        match self {
            Geometry::Cylindrical => (2.0 * PI * h * (2.0 * a + b) / 6.0, 2.0 * PI * h * (a + 2.0 * b) / 6.0),
            Geometry::Planar => (0.5 * h, 0.5 * h),
        }
    }

    /// Measure of `[a, b]` (area of the ring, or length).
    pub fn measure(self, a: f64, b: f64) -> f64 {
        match self {
            Geometry::Cylindrical => PI * (b * b - a * a),
            Geometry::Planar => b - a,
        }
    }
}

/// Uniform grid on `[inner, outer]` with nodal temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
    pub theta: Vec<f64>,
}

/// Affine response of one implicit step to the outer temperature, stored
/// as offsets from `reference` so a quiescent cell stays exactly quiescent.
#[derive(Debug, Clone, Default)]
pub struct AnnulusResponse {
    pub reference: f64,
    pub base: Vec<f64>,
    pub slope: Vec<f64>,
    /// Heat entering at the outer boundary: `outer.0 + outer.1·(T₁ − reference)`.
    pub outer: (f64, f64),
    /// Heat leaving through the inner boundary into the ice, same form.
    pub inner: (f64, f64),
}

impl AnnulusResponse {
    pub fn theta(&self, t_outer: f64) -> Vec<f64> {
        let d = t_outer - self.reference;
        self.base.iter().zip(&self.slope).map(|(a, b)| self.reference + a + b * d).collect()
    }

    pub fn outer_flux(&self, t_outer: f64) -> f64 {
        self.outer.0 + self.outer.1 * (t_outer - self.reference)
    }

    pub fn inner_flux(&self, t_outer: f64) -> f64 {
        self.inner.0 + self.inner.1 * (t_outer - self.reference)
    }

    /// A response that carries no heat, used by cells without a micro field.
    pub fn inert() -> Self {
        AnnulusResponse::default()
    }
}

impl Annulus {
    pub fn new(inner: f64, outer: f64, intervals: usize, value: f64) -> Self {
        Annulus { inner, outer, theta: vec![value; intervals + 1] }
    }

    pub fn intervals(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        (self.outer - self.inner) / self.intervals() as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.intervals() {
            self.outer
        } else {
            self.inner + j as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.theta.len()).map(|j| self.node(j)).collect()
    }

    fn lumped_masses(&self, geom: Geometry) -> Vec<f64> {
        let m = self.intervals();
        let mut out = vec![0.0; m + 1];
        for e in 0..m {
            let (ma, mb) = geom.lumped(self.node(e), self.node(e + 1));
            out[e] += ma;
            out[e + 1] += mb;
        }
        out
    }

    /// Element conductances. The cylindrical ones integrate the logarithmic
    /// steady profile exactly, so steady nodal values carry no grid error.
    fn conductances(&self, geom: Geometry, diffusivity: f64) -> Vec<f64> {
        (0..self.intervals())
            .map(|e| {
                let (a, b) = (self.node(e), self.node(e + 1));
                match geom {
                    Geometry::Cylindrical => 2.0 * PI * diffusivity / libm::log(b / a),
                    Geometry::Planar => diffusivity / (b - a),
                }
            })
            .collect()
    }

    /// `Σ c·m_j·(θ_j − t_ref)` with lumped quadrature.
    pub fn sensible_heat(&self, geom: Geometry, heat_capacity: f64, t_ref: f64) -> f64 {
        self.lumped_masses(geom).iter().zip(&self.theta).map(|(m, t)| heat_capacity * m * (t - t_ref)).sum()
    }

    /// One implicit Euler step with `theta[0]` held fixed and the outer
    /// node bound to an as yet unknown temperature.
    pub fn respond(&self, geom: Geometry, diffusivity: f64, heat_capacity: f64, dt: f64) -> Result<AnnulusResponse> {
        let m = self.intervals();
        let mass = self.lumped_masses(geom);
        let k = self.conductances(geom, diffusivity);
        let reference = self.theta[0];
        let old: Vec<f64> = self.theta.iter().map(|t| t - reference).collect();
        let mut base = vec![0.0; m + 1];
        let mut slope = vec![0.0; m + 1];
        slope[m] = 1.0;
        if m >= 2 {
            let n = m - 1;
            let mut a = Tridiagonal::zeros(n);
            let mut ra = vec![0.0; n];
            let mut rb = vec![0.0; n];
            for idx in 0..n {
                let j = idx + 1;
                let cap = heat_capacity * mass[j] / dt;
                a.diag[idx] = cap + k[j - 1] + k[j];
                if idx > 0 {
                    a.lower[idx] = -k[j - 1];
                }
                if idx + 1 < n {
                    a.upper[idx] = -k[j];
                }
                ra[idx] = cap * old[j];
            }
            rb[n - 1] += k[m - 1];
            let mut scratch = Vec::new();
            a.solve_in_place(&mut ra, &mut scratch)?;
            a.solve_in_place(&mut rb, &mut scratch)?;
            base[1..m].copy_from_slice(&ra);
            slope[1..m].copy_from_slice(&rb);
        }
        // reactions at the two Dirichlet nodes
        let cap_out = heat_capacity * mass[m] / dt;
        let outer = (-cap_out * old[m] - k[m - 1] * base[m - 1], cap_out + k[m - 1] - k[m - 1] * slope[m - 1]);
        let inner = if m >= 2 { (k[0] * base[1], k[0] * slope[1]) } else { (0.0, k[0]) };
        Ok(AnnulusResponse { reference, base, slope, outer, inner })
    }

    /// Moves the grid to `[new_inner, outer]`, interpolating linearly and
    /// filling the uncovered region with `fill`.
    pub fn regrid(&mut self, new_inner: f64, fill: f64) {
        let old_nodes = self.nodes();
        let old = self.theta.clone();
        let m = self.intervals();
        self.inner = new_inner;
        let h = (self.outer - new_inner) / m as f64;
        for j in 0..=m {
            let y = if j == m { self.outer } else { new_inner + j as f64 * h };
            self.theta[j] = if j == m {
                old[m]
            } else if y <= old_nodes[0] {
                fill
            } else {
                let mut e = 0;
                while e + 1 < m && old_nodes[e + 1] < y {
                    e += 1;
                }
                let (a, b) = (old_nodes[e], old_nodes[e + 1]);
                let w = ((y - a) / (b - a)).clamp(0.0, 1.0);
                old[e] + w * (old[e + 1] - old[e])
            };
        }
        self.theta[0] = fill;
    }

    /// One-sided three-point derivative at the inner node.
    pub fn inner_gradient(&self) -> f64 {
        let h = self.spacing();
        let t = &self.theta;
        if t.len() < 3 {
            return (t[1] - t[0]) / h;
        }
        (-3.0 * t[0] + 4.0 * t[1] - t[2]) / (2.0 * h)
    }

    /// One-sided three-point derivative at the outer node.
    pub fn outer_gradient(&self) -> f64 {
        let h = self.spacing();
        let t = &self.theta;
        let m = t.len() - 1;
        if m < 2 {
            return (t[1] - t[0]) / h;
        }
        (3.0 * t[m] - 4.0 * t[m - 1] + t[m - 2]) / (2.0 * h)
    }
}

/// Steady conduction profile between `t_in` at `a` and `t_out` at `b`.
pub fn steady_profile(geom: Geometry, a: f64, b: f64, t_in: f64, t_out: f64, r: f64) -> f64 {
    match geom {
        Geometry::Cylindrical => t_in + (t_out - t_in) * libm::log(r / a) / libm::log(b / a),
        Geometry::Planar => t_in + (t_out - t_in) * (r - a) / (b - a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_is_steady() {
        let a = Annulus::new(1e-4, 4.5e-4, 4, 273.15);
        let r = a.respond(Geometry::Cylindrical, 5.56e-4, 4180.0, 10.0).unwrap();
        let th = r.theta(273.15);
        assert!(th.iter().all(|t| (t - 273.15).abs() < 1e-12));
        assert!(r.outer_flux(273.15).abs() < 1e-12);
        assert!(r.inner_flux(273.15).abs() < 1e-12);
    }

    #[test]
    fn response_conserves_heat() {
        let mut a = Annulus::new(1e-4, 4.5e-4, 6, 273.15);
        a.theta[3] = 275.0;
        a.theta[6] = 280.0;
        let geom = Geometry::Cylindrical;
        let dt = 3.0;
        let before = a.sensible_heat(geom, 4180.0, 273.15);
        let r = a.respond(geom, 5.56e-4, 4180.0, dt).unwrap();
        let t1 = 281.0;
        a.theta = r.theta(t1);
        let after = a.sensible_heat(geom, 4180.0, 273.15);
        let budget = dt * (r.outer_flux(t1) - r.inner_flux(t1));
        assert!((after - before - budget).abs() <= 1e-12 * before.abs().max(1.0));
    }

    #[test]
    fn regrid_keeps_endpoints() {
        let mut a = Annulus::new(1e-4, 4.5e-4, 4, 273.15);
        a.theta = vec![273.15, 274.0, 275.0, 276.0, 277.0];
        a.regrid(0.8e-4, 273.15);
        assert_eq!(a.theta[0], 273.15);
        assert_eq!(a.theta[4], 277.0);
        assert!(a.theta.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn gradients_exact_for_quadratics() {
        let mut a = Annulus::new(1.0, 2.0, 4, 0.0);
        for j in 0..=4 {
            let r = a.node(j);
            a.theta[j] = r * r;
        }
        assert!((a.inner_gradient() - 2.0).abs() < 1e-12);
        assert!((a.outer_gradient() - 4.0).abs() < 1e-12);
    }
}
