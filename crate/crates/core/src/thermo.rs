//! Temperature-enthalpy closure and phase-dependent diffusivity.
//!
//! The regularized map `T = ω(H)` is built from three straight lines,
//!
//! * ice:     `T = H / c_i`
//! * plateau: `T = T_c + (H - H_w²) / c_inf`
//! * water:   `T = T_c + (H - H_w²) / c_w`
//!
//! with `H_w² = H_w + w`. Each of the two corners where neighbouring lines
//! intersect is replaced by a cubic Hermite segment of half-width `w`
//! centred on the intersection. Because both lines meet at the centre of
//! the rounding interval, the Hermite segment is monotone and `ω` is C¹.
//! Liquid water at the melting point, `ω⁻¹(T_c)`, lies on the water side
//! of the upper corner.

use crate::error::{invalid, Error, Result};

/// Constant material data for the ice/water system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMaterial {
    /// Specific heat of ice, J/(kg·K).
    pub c_i: f64,
    /// Specific heat of water, J/(kg·K).
    pub c_w: f64,
    /// Thermal conductivity of ice, W/(m·K).
    pub k_i: f64,
    /// Thermal conductivity of water, W/(m·K).
    pub k_w: f64,
    /// Density of ice, kg/m³.
    pub rho_i: f64,
    /// Density of water, kg/m³.
    pub rho_w: f64,
    /// Enthalpy of ice at the melting point, J/kg.
    pub h_i: f64,
    /// Enthalpy of water at the melting point, J/kg.
    pub h_w: f64,
    /// Melting temperature, K.
    pub t_c: f64,
    /// Inverse slope of the melting plateau, J/(kg·K).
    pub c_inf: f64,
    /// Half-width of each corner-rounding interval, J/kg.
    pub smoothing_width: f64,
}

impl Default for PhaseMaterial {
    fn default() -> Self {
        let (h_i, h_w, c_w) = (5.74e5, 9.07e5, 4180.0);
        PhaseMaterial {
            c_i: 2100.0,
            c_w,
            k_i: 2.22,
            k_w: 0.556,
            rho_i: 917.0,
            rho_w: 1000.0,
            h_i,
            h_w,
            t_c: 273.15,
            c_inf: 1.0e3 * c_w,
            smoothing_width: 0.02 * (h_w - h_i),
        }
    }
}

impl PhaseMaterial {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_i", self.c_i),
            ("c_w", self.c_w),
            ("k_i", self.k_i),
            ("k_w", self.k_w),
            ("rho_i", self.rho_i),
            ("rho_w", self.rho_w),
            ("h_i", self.h_i),
            ("h_w", self.h_w),
            ("t_c", self.t_c),
            ("c_inf", self.c_inf),
            ("smoothing_width", self.smoothing_width),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be finite and strictly positive"));
            }
        }
        if self.h_i >= self.h_w {
            return Err(invalid("h_i", "ice enthalpy must be below water enthalpy"));
        }
        if self.h_i + self.smoothing_width >= self.h_w - self.smoothing_width {
            return Err(invalid("smoothing_width", "smoothing intervals overlap"));
        }
        if self.c_inf <= self.c_w || self.c_inf <= self.c_i {
            return Err(invalid("c_inf", "plateau must be flatter than both phase branches"));
        }
        Ok(())
    }

    /// Latent heat `H_w - H_i`, J/kg.
    pub fn latent_heat(&self) -> f64 {
        self.h_w - self.h_i
    }

    /// `k_w / ρ_w`.
    pub fn water_diffusivity(&self) -> f64 {
        self.k_w / self.rho_w
    }

    /// `k_i / ρ_i`.
    pub fn ice_diffusivity(&self) -> f64 {
        self.k_i / self.rho_i
    }
}

/// One smoothing segment: cubic Hermite on `[a, b]`.
#[derive(Debug, Clone, Copy)]
struct Corner {
    a: f64,
    b: f64,
    ta: f64,
    tb: f64,
    ma: f64,
    mb: f64,
}

impl Corner {
    fn new(a: f64, b: f64, ta: f64, tb: f64, ma: f64, mb: f64) -> Self {
        Corner { a, b, ta, tb, ma, mb }
    }

    fn value(&self, h: f64) -> f64 {
        let w = self.b - self.a;
        let s = (h - self.a) / w;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.ta
            + (s3 - 2.0 * s2 + s) * w * self.ma
            + (-2.0 * s3 + 3.0 * s2) * self.tb
            + (s3 - s2) * w * self.mb
    }

    fn slope(&self, h: f64) -> f64 {
        let w = self.b - self.a;
        let s = (h - self.a) / w;
        let s2 = s * s;
        (6.0 * s2 - 6.0 * s) * self.ta / w
            + (3.0 * s2 - 4.0 * s + 1.0) * self.ma
            + (-6.0 * s2 + 6.0 * s) * self.tb / w
            + (3.0 * s2 - 2.0 * s) * self.mb
    }

    /// Safeguarded Newton on the monotone cubic.
    fn invert(&self, t: f64) -> f64 {
        let (mut lo, mut hi) = (self.a, self.b);
        let mut h = self.a + (t - self.ta) / (self.tb - self.ta) * (self.b - self.a);
        for _ in 0..100 {
            let f = self.value(h) - t;
            if f == 0.0 {
                return h;
            }
            if f > 0.0 {
                hi = h;
            } else {
                lo = h;
            }
            let d = self.slope(h);
            let mut next = h - f / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - h).abs() <= 1e-13 * h.abs().max(1.0) {
                return next;
            }
            h = next;
        }
        h
    }
}

/// Regularized `ω`, its inverse and derivative, plus `D(H)`.
///
/// Immutable after construction and `Sync`; share it freely between workers.
#[derive(Debug, Clone)]
pub struct EnthalpyTemperatureMap {
    material: PhaseMaterial,
    h_w2: f64,
    lower: Corner,
    upper: Corner,
    h_liquid_c: f64,
}

impl EnthalpyTemperatureMap {
    pub fn new(material: PhaseMaterial) -> Result<Self> {
        material.validate()?;
        let m = &material;
        let w = m.smoothing_width;
        let h_w2 = m.h_w + w;
        let (mi, mp, mw) = (1.0 / m.c_i, 1.0 / m.c_inf, 1.0 / m.c_w);
        // ice line meets plateau line
        let h_lo = (m.t_c - h_w2 * mp) / (mi - mp);
        if h_lo - w <= 0.0 || h_lo + w >= h_w2 - w {
            return Err(invalid("smoothing_width", "corner intervals overlap or leave H >= 0"));
        }
        let plateau = |h: f64| m.t_c + (h - h_w2) * mp;
        let water = |h: f64| m.t_c + (h - h_w2) * mw;
        let lower = Corner::new(h_lo - w, h_lo + w, (h_lo - w) * mi, plateau(h_lo + w), mi, mp);
        let upper = Corner::new(h_w2 - w, h_w2 + w, plateau(h_w2 - w), water(h_w2 + w), mp, mw);
        let mut map = EnthalpyTemperatureMap { material, h_w2, lower, upper, h_liquid_c: 0.0 };
        map.h_liquid_c = map.enthalpy(m.t_c);
        Ok(map)
    }

    pub fn material(&self) -> &PhaseMaterial {
        &self.material
    }

    /// Enthalpy of liquid water at the melting point, `ω⁻¹(T_c)`.
    pub fn liquid_enthalpy_at_melting(&self) -> f64 {
        self.h_liquid_c
    }

    /// The two corner-rounding intervals `[(lo_a, lo_b), (up_a, up_b)]`.
    pub fn smoothing_intervals(&self) -> [(f64, f64); 2] {
        [(self.lower.a, self.lower.b), (self.upper.a, self.upper.b)]
    }

    /// Junctions of the five pieces, in increasing enthalpy.
    pub fn junctions(&self) -> [f64; 4] {
        [self.lower.a, self.lower.b, self.upper.a, self.upper.b]
    }

    pub fn omega(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::Domain { what: "omega", value: h });
        }
        Ok(self.temperature(h))
    }

    pub fn omega_inv(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain { what: "omega_inv", value: t });
        }
        Ok(self.enthalpy(t))
    }

    pub fn omega_prime(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::Domain { what: "omega_prime", value: h });
        }
        Ok(self.slope(h))
    }

    pub fn diffusivity(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::Domain { what: "diffusivity", value: h });
        }
        Ok(self.diffusivity_at(h))
    }

    /// Unchecked `ω`; the ice branch is extended linearly below zero.
    #[inline]
    pub fn temperature(&self, h: f64) -> f64 {
        let m = &self.material;
        if h < self.lower.a {
            h / m.c_i
        } else if h < self.lower.b {
            self.lower.value(h)
        } else if h < self.upper.a {
            m.t_c + (h - self.h_w2) / m.c_inf
        } else if h < self.upper.b {
            self.upper.value(h)
        } else {
            m.t_c + (h - self.h_w2) / m.c_w
        }
    }

    /// Unchecked `ω'`.
    #[inline]
    pub fn slope(&self, h: f64) -> f64 {
        let m = &self.material;
        if h < self.lower.a {
            1.0 / m.c_i
        } else if h < self.lower.b {
            self.lower.slope(h)
        } else if h < self.upper.a {
            1.0 / m.c_inf
        } else if h < self.upper.b {
            self.upper.slope(h)
        } else {
            1.0 / m.c_w
        }
    }

    /// Unchecked `ω⁻¹`.
    pub fn enthalpy(&self, t: f64) -> f64 {
        let m = &self.material;
        if t < self.lower.ta {
            t * m.c_i
        } else if t < self.lower.tb {
            self.lower.invert(t)
        } else if t < self.upper.ta {
            self.h_w2 + (t - m.t_c) * m.c_inf
        } else if t < self.upper.tb {
            self.upper.invert(t)
        } else {
            self.h_w2 + (t - m.t_c) * m.c_w
        }
    }

    /// Piecewise affine `D(H)` in `k/ρ` units.
    #[inline]
    pub fn diffusivity_at(&self, h: f64) -> f64 {
        let m = &self.material;
        let (di, dw) = (m.ice_diffusivity(), m.water_diffusivity());
        if h < m.h_i {
            di
        } else if h < m.h_w {
            di + (h - m.h_i) / (m.h_w - m.h_i) * (dw - di)
        } else {
            dw
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> EnthalpyTemperatureMap {
        EnthalpyTemperatureMap::new(PhaseMaterial::default()).unwrap()
    }

    #[test]
    fn ice_branch() {
        let m = map();
        assert!((m.omega(4.20e5).unwrap() - 200.0).abs() < 1e-12);
        assert!((m.omega_inv(200.0).unwrap() - 4.20e5).abs() < 1e-9);
        assert!((m.omega_prime(4.20e5).unwrap() - 1.0 / 2100.0).abs() < 1e-18);
    }

    #[test]
    fn water_branch() {
        let m = map();
        let hw2 = 9.07e5 + 0.02 * 3.33e5;
        assert!((m.omega(hw2 + 41800.0).unwrap() - 283.15).abs() < 1e-10);
        assert!((m.omega_inv(283.15).unwrap() - (hw2 + 41800.0)).abs() < 1e-6);
    }

    #[test]
    fn plateau_midpoint() {
        let m = map();
        let mat = m.material();
        let mid = 0.5 * (mat.h_i + mat.h_w);
        let t = m.omega(mid).unwrap();
        // the plateau lies just below T_c and spans (H_w² - H_i¹)/c_inf
        let band = (mat.h_w - mat.h_i + 2.0 * mat.smoothing_width) / mat.c_inf;
        assert!(t < mat.t_c && t > mat.t_c - band, "T(mid) = {t}");
        assert!((m.omega_prime(mid).unwrap() - 1.0 / mat.c_inf).abs() < 1e-20);
    }

    #[test]
    fn melting_point_is_liquid() {
        let m = map();
        let hc = m.liquid_enthalpy_at_melting();
        assert!(hc > m.material().h_w);
        assert!((m.temperature(hc) - 273.15).abs() < 1e-9);
        assert_eq!(m.diffusivity_at(hc), 0.556 / 1000.0);
    }

    #[test]
    fn diffusivity_values() {
        let m = map();
        assert!((m.diffusivity(0.0).unwrap() - 2.22 / 917.0).abs() < 1e-15);
        assert!((m.diffusivity(2.42e-3).unwrap() - 2.22 / 917.0).abs() < 1e-15);
        assert!((m.diffusivity(1.0e6).unwrap() - 5.56e-4).abs() < 1e-15);
        let mid = m.diffusivity(7.405e5).unwrap();
        assert!((mid - 0.5 * (2.22 / 917.0 + 5.56e-4)).abs() < 1e-15);
        assert!((mid - 1.489e-3).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        let m = map();
        assert!(matches!(m.omega(-1.0), Err(Error::Domain { .. })));
        assert!(matches!(m.omega_prime(-1e-9), Err(Error::Domain { .. })));
        assert!(matches!(m.omega_inv(-5.0), Err(Error::Domain { .. })));
        assert!(m.omega(f64::NAN).is_err());
    }

    #[test]
    fn c1_at_junctions() {
        let m = map();
        for j in m.junctions() {
            let eps = 1e-3;
            let left = m.slope(j - eps);
            let right = m.slope(j + eps);
            let scale = left.abs().max(right.abs());
            // the corner curvature is at most 1/(c_i w), so a jump-free slope moves by less
            let curvature = 1.0 / (m.material().c_i * m.material().smoothing_width);
            assert!((left - right).abs() <= 1e-9 * scale + 2.0 * eps * curvature, "slope jump at {j}");
            assert!((m.temperature(j - 1e-7) - m.temperature(j + 1e-7)).abs() < 1e-9);
        }
    }

    #[test]
    fn central_difference_slope() {
        let m = map();
        let mut h = 10.0;
        while h < 2.0e6 {
            let fd = (m.temperature(h + 1.0) - m.temperature(h - 1.0)) / 2.0;
            let d = m.slope(h);
            // near a junction the stencil straddles the slope change of a C¹ map
            let near_junction = m.junctions().iter().any(|&j| (h - j).abs() < 1.0);
            if !near_junction {
                assert!((d - fd).abs() <= 1e-6 * d, "H = {h}: {d} vs {fd}");
            }
            h += 997.3;
        }
    }

    #[test]
    fn invalid_material() {
        let mat = PhaseMaterial { h_i: 9.5e5, ..Default::default() };
        assert!(EnthalpyTemperatureMap::new(mat).is_err());
        let mat = PhaseMaterial { smoothing_width: 2.0e5, ..Default::default() };
        assert!(EnthalpyTemperatureMap::new(mat).is_err());
        let mat = PhaseMaterial { k_w: 0.0, ..Default::default() };
        assert!(EnthalpyTemperatureMap::new(mat).is_err());
    }
}
