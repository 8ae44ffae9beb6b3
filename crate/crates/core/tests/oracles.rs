use msstefan_core::annulus::{steady_profile, Annulus, Geometry};
use msstefan_core::cell::{compute_effective_tensor, fluid_fraction, UnitCellGeometry};
use msstefan_core::engine::{run, Serial, SimulationConfig};
use msstefan_core::thermo::PhaseMaterial;
use msstefan_core::verify::{neumann_front, planar_front_check};

#[test]
fn neumann_root_for_default_material() {
    let m = PhaseMaterial::default();
    let st = m.c_w * 10.0 / m.latent_heat();
    assert!((st - 0.1255).abs() < 1e-3);
    let l = neumann_front(st).unwrap();
    // λ² ≈ St/2 for small St, slightly less
    assert!(l > 0.2 && l < (st / 2.0).sqrt());
}

#[test]
fn planar_front_within_two_percent() {
    let c = planar_front_check(64, 100.0, 1.0e4, 2000).unwrap();
    assert!(c.max_relative_error < 0.02, "{}", c.max_relative_error);
}

#[test]
fn annulus_relaxes_to_log_profile() {
    let m = PhaseMaterial::default();
    let (a, b) = (1e-4, 4.5e-4);
    let mut ann = Annulus::new(a, b, 8, m.t_c);
    let t1 = m.t_c + 10.0;
    for _ in 0..400 {
        let r = ann.respond(Geometry::Cylindrical, m.water_diffusivity(), m.c_w, 0.05).unwrap();
        ann.theta = r.theta(t1);
    }
    for (j, r) in ann.nodes().into_iter().enumerate() {
        let exact = steady_profile(Geometry::Cylindrical, a, b, m.t_c, t1, r);
        assert!((ann.theta[j] - exact).abs() <= 1e-3 * 10.0, "{j}");
    }
}

#[test]
fn tensor_without_inclusion_is_identity() {
    let t = compute_effective_tensor(&UnitCellGeometry::new(0.0, 8).unwrap()).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((t.pi[i][j] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn tensor_bounded_by_fluid_fraction() {
    for g in [0.1, 0.25, 0.45] {
        let t = compute_effective_tensor(&UnitCellGeometry::new(g, 24).unwrap()).unwrap();
        let ev = t.eigenvalues();
        assert!(ev[0] > 0.0);
        assert!(t.pi[0][0] <= fluid_fraction(g).unwrap());
        assert_eq!(t.pi[0][1], t.pi[1][0]);
    }
}

#[test]
fn small_sap_run_melts_everything() {
    let mut c = SimulationConfig::sap();
    c.geometry.m_macro = 20;
    c.geometry.cell_resolution = 16;
    c.solver.rtol = 1e-4;
    c.solver.atol = 1e-7;
    let r = run(&c, &Serial).unwrap();
    let done = r.melt_complete_time.expect("all fibers melt");
    assert!(done < c.t_end);
    // outermost first
    let times: Vec<f64> = r.melt_times.iter().map(|t| t.unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] >= w[1]));
    assert!(r.stats.min_temperature >= c.material.t_c - 1e-6);
    assert!(r.audit.relative_residual() < 1e-6);
}
