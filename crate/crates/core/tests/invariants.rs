#![allow(clippy::needless_range_loop)]

use msstefan_core::annulus::{Annulus, Geometry};
use msstefan_core::linalg::Tridiagonal;
use msstefan_core::micro_reduced::{ReducedCellState, ReducedParams, StepOutcome};
use msstefan_core::thermo::{EnthalpyTemperatureMap, PhaseMaterial};
use proptest::prelude::*;

fn map() -> EnthalpyTemperatureMap {
    EnthalpyTemperatureMap::new(PhaseMaterial::default()).unwrap()
}

proptest! {
    #[test]
    fn omega_is_monotone(a in 0.0f64..2.0e6, b in 0.0f64..2.0e6) {
        let m = map();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(m.omega(lo).unwrap() <= m.omega(hi).unwrap());
        prop_assert!(m.omega_prime(lo).unwrap() > 0.0);
    }

    #[test]
    fn omega_round_trip(t in 150.0f64..400.0) {
        let m = map();
        let h = m.omega_inv(t).unwrap();
        prop_assert!((m.omega(h).unwrap() - t).abs() <= 1e-9 * t);
    }

    #[test]
    fn diffusivity_between_phases(h in 0.0f64..2.0e6) {
        let m = map();
        let mat = m.material();
        let d = m.diffusivity(h).unwrap();
        let (lo, hi) = (mat.water_diffusivity(), mat.ice_diffusivity());
        prop_assert!(d >= lo.min(hi) * (1.0 - 1e-12) && d <= lo.max(hi) * (1.0 + 1e-12));
    }

    #[test]
    fn tridiagonal_solve_recovers(n in 1usize..40, seed in 0u64..1000) {
        let mut a = Tridiagonal::zeros(n);
        let mut x = vec![0.0; n];
        let mut s = seed as f64 + 1.0;
        let mut next = || { s = (s * 16807.0) % 2147483647.0; s / 2147483647.0 };
        for i in 0..n {
            a.lower[i] = -next();
            a.upper[i] = -next();
            a.diag[i] = 2.5 + next();
            x[i] = next() - 0.5;
        }
        let mut b = vec![0.0; n];
        a.mul(&x, &mut b);
        let mut scratch = Vec::new();
        a.solve_in_place(&mut b, &mut scratch).unwrap();
        for (u, v) in b.iter().zip(&x) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn annulus_step_obeys_maximum_principle(
        t1 in 273.15f64..290.0,
        dt in 1e-6f64..10.0,
        m in 1usize..12,
        inner in 1e-5f64..4e-4,
    ) {
        let mat = PhaseMaterial::default();
        let mut a = Annulus::new(inner, 4.5e-4, m, mat.t_c);
        for (j, t) in a.theta.iter_mut().enumerate() {
            *t = mat.t_c + 3.0 * j as f64 / m as f64;
        }
        let hi = a.theta.iter().cloned().fold(t1, f64::max);
        for g in [Geometry::Cylindrical, Geometry::Planar] {
            let r = a.respond(g, mat.water_diffusivity(), mat.c_w, dt).unwrap();
            for th in r.theta(t1) {
                prop_assert!(th >= mat.t_c - 1e-9 && th <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn reduced_front_never_advances_into_water(t1 in 273.15f64..290.0, dt in 1e-3f64..50.0) {
        let p = ReducedParams::new(4.5e-4, 1e-4, 4, PhaseMaterial::default()).unwrap();
        let mut c = ReducedCellState::new(&p, t1);
        let s0 = c.s;
        if let StepOutcome::Advanced = c.micro_step(&p, t1, dt).unwrap() {
            prop_assert!(c.s <= s0);
            prop_assert!(c.s >= 0.0);
        }
    }
}
