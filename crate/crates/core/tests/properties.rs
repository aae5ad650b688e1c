use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use choquard::config::ExperimentConfig;
use choquard::coulomb::{hartree_energy, CoulombKernel};
use choquard::field::{Grid3, ScalarField};
use choquard::groundstate::fmt12;
use choquard::magnetic::{
    diamagnetic_check, energy, nehari_project, nehari_residual, ElectricPreset, MagneticPreset, Potentials,
};
use choquard::symmetry::{act, equivariance_defect, orbit_points, symmetrize, SymmetrySector};
use choquard::verify::random_smooth_field;

fn grid() -> Grid3 {
    Grid3::new(16, 3.0).unwrap()
}

/// Envelope narrow enough that the field vanishes on the box faces, where the
/// periodic wrap breaks the symmetry of A.
fn field(seed: u64) -> ScalarField {
    random_smooth_field(grid(), &mut ChaCha8Rng::seed_from_u64(seed), [0.1, -0.2, 0.0], 0.55)
}

fn potentials(eps: f64) -> Potentials {
    Potentials::from_presets(grid(), &MagneticPreset::Standard, &ElectricPreset::ring_well_default(), eps).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Sectors whose rotations map the grid to itself.
fn sector() -> impl Strategy<Value = SymmetrySector> {
    prop_oneof![Just(2u32), Just(4u32)]
        .prop_flat_map(|m| (Just(m), 0..m))
        .prop_map(|(m, j)| SymmetrySector::new(m, j).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hartree_is_quartic_and_phase_blind(seed in any::<u64>(), c in 0.1f64..3.0, theta in 0.0f64..6.3) {
        let u = field(seed);
        let k = CoulombKernel::new(grid());
        let d = hartree_energy(&u, &k).unwrap();
        let scaled = hartree_energy(&u.scale(Complex64::from_polar(c, theta)), &k).unwrap();
        prop_assert!(rel(scaled, c.powi(4) * d) < 1e-12);
    }

    #[test]
    fn nehari_projection_ignores_positive_scaling(seed in any::<u64>(), t in 0.2f64..5.0, eps in 0.4f64..1.0) {
        let p = potentials(eps);
        let k = CoulombKernel::new(grid());
        let u = field(seed);
        let a = nehari_project(&u, &p, &k).unwrap();
        let b = nehari_project(&u.scale_real(t), &p, &k).unwrap();
        prop_assert!(a.sub(&b).unwrap().norm_l2() <= 1e-10 * a.norm_l2());
        prop_assert!(nehari_residual(&energy(&a, &p, &k).unwrap(), eps) < 1e-10);
    }

    #[test]
    fn symmetrize_is_an_equivariant_projector(seed in any::<u64>(), s in sector()) {
        let u = field(seed);
        let w = symmetrize(&u, &s);
        prop_assert!(equivariance_defect(&w, &s) < 1e-10);
        prop_assert!(symmetrize(&w, &s).sub(&w).unwrap().norm_l2() <= 1e-10 * w.norm_l2().max(1e-300));
    }

    #[test]
    fn action_is_a_group_action(seed in any::<u64>(), s in sector(), a in 0i64..8, b in 0i64..8) {
        let u = field(seed);
        let lhs = act(a, &act(b, &u, &s), &s);
        let rhs = act(a + b, &u, &s);
        prop_assert!(lhs.sub(&rhs).unwrap().norm_l2() <= 1e-10 * u.norm_l2());
    }

    #[test]
    fn energy_is_invariant_under_the_action(seed in any::<u64>(), s in sector(), k in 1i64..4) {
        let p = potentials(0.7);
        let kern = CoulombKernel::new(grid());
        let u = field(seed);
        let e0 = energy(&u, &p, &kern).unwrap().total;
        let e1 = energy(&act(k, &u, &s), &p, &kern).unwrap().total;
        prop_assert!(rel(e1, e0) < 1e-9, "{e0} {e1}");
    }

    #[test]
    fn diamagnetic_inequality_holds(seed in any::<u64>(), eps in 0.3f64..1.0) {
        let r = diamagnetic_check(&field(seed), &potentials(eps)).unwrap();
        prop_assert_eq!(r.violations, 0);
    }

    #[test]
    fn off_axis_orbits_have_m_points(m in 1u32..7, x in 0.1f64..2.0, y in -2.0f64..2.0, z in -1.0f64..1.0) {
        let s = SymmetrySector::new(m, 0).unwrap();
        let pts = orbit_points([x, y, z], &s, 1e-9);
        prop_assert_eq!(pts.len(), m as usize);
        for q in &pts {
            prop_assert!((q[0].hypot(q[1]) - x.hypot(y)).abs() < 1e-12);
            prop_assert_eq!(q[2], z);
        }
    }

    #[test]
    fn fmt12_round_trips_to_twelve_digits(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt12(x).parse().unwrap();
        prop_assert!(rel(back, x) < 1e-11);
    }

    #[test]
    fn config_text_round_trips(m in 2u32..6, jr in 0u32..6, eps in 0.05f64..1.0, tol in 1e-9f64..1e-3, seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::default();
        cfg.m = m;
        cfg.j = jr % m;
        cfg.sweep = vec![eps];
        cfg.grid_n = vec![32];
        cfg.grid_l = vec![3.0];
        cfg.solver.tol_grad = tol;
        cfg.seed = seed;
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
