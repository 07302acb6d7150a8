//! Randomized invariants across the public API.

use proptest::prelude::*;

use qfj_core::fick_jacobs::{
    classical_density, density_correction, free_energy_barrier, harmonic_profile, quantum_free_energy_correction,
};
use qfj_core::grid::{assemble_hamiltonian, build_grid, BoundaryX};
use qfj_core::quadrature::{integrate, simpson};
use qfj_core::redfield::{
    default_gamma, default_threshold, transport_setup, LeadSpec, Side, SteadyMethod, SteadyOptions,
};
use qfj_core::smoluchowski::{bernoulli, equilibrium_1d_closed_form, mass_drift_2d};
use qfj_core::spectrum::diagonalize;
use qfj_core::sweep::{locate_extremum, ExtremumKind};
use qfj_core::thermal::mismatch_score;
use qfj_core::ChannelParams;

fn channel(ratio: f64, k1: f64, lambda: f64) -> ChannelParams {
    let k0 = ChannelParams::k0_for_ratio(ratio, 1.0, 1.0, 1.0);
    ChannelParams::from_lambda(k0, k1, 1.0, lambda, 1.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn barrier_grows_with_lambda_and_corrugation(k1 in 0.0f64..0.9, l in 0.0f64..1.0, dl in 1e-3f64..0.5) {
        let a = free_energy_barrier(k1, l).unwrap();
        prop_assert!(free_energy_barrier(k1, l + dl).unwrap() >= a);
        prop_assert!(free_energy_barrier(k1 + 0.05, l).unwrap() > a);
    }

    #[test]
    fn barrier_rejects_out_of_range(k1 in 1.0f64..10.0) {
        prop_assert!(free_energy_barrier(k1, 0.1).is_err());
        prop_assert!(free_energy_barrier(-k1, 0.1).is_err());
    }

    #[test]
    fn closed_forms_are_periodic(k1 in 0.0f64..0.9, x in -2.0f64..2.0) {
        let p = channel(16.0, k1, 0.05);
        for f in [classical_density, density_correction, quantum_free_energy_correction] {
            prop_assert!((f(&p, x) - f(&p, x + 1.0)).abs() <= 1e-12 * f(&p, x).abs().max(1.0));
        }
    }

    #[test]
    fn profile_barrier_matches_closed_form(k1 in 0.05f64..0.8, l in 0.0f64..0.3) {
        let p = channel(16.0, k1, 0.05);
        let prof = harmonic_profile(&p, l, 257).unwrap();
        prop_assert!((prof.barrier() - free_energy_barrier(k1, l).unwrap()).abs() < 1e-9);
        prop_assert!(prof.periodicity_defect() < 1e-12);
    }

    #[test]
    fn bernoulli_reflection(z in -40.0f64..40.0) {
        let lhs = bernoulli(-z);
        let rhs = z.exp() * bernoulli(z);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        prop_assert!(bernoulli(z) > 0.0);
    }

    #[test]
    fn closed_1d_density_reduces_to_boltzmann(u in -3.0f64..3.0, du in -5.0f64..5.0, d2u in -5.0f64..5.0) {
        let p = equilibrium_1d_closed_form(u, du, d2u, 0.0, 1.0, 0.3);
        prop_assert!((p - (-u).exp()).abs() <= 1e-12 * p);
    }

    #[test]
    fn gauss_kronrod_is_exact_on_polynomials(c in prop::collection::vec(-3.0f64..3.0, 6), a in -2.0f64..0.0, w in 0.1f64..3.0) {
        let b = a + w;
        let poly = |x: f64| c.iter().rev().fold(0.0, |acc, ci| acc * x + ci);
        let prim = |x: f64| c.iter().enumerate().map(|(k, ci)| ci * x.powi(k as i32 + 1) / (k + 1) as f64).sum::<f64>();
        let exact = prim(b) - prim(a);
        let r = integrate(poly, a, b, 1e-13, 1e-13).unwrap();
        prop_assert!((r.value - exact).abs() <= 1e-11 * exact.abs().max(1.0));
        let s = simpson(|x| x * x * x, a, b, 4);
        prop_assert!((s.value - (b.powi(4) - a.powi(4)) / 4.0).abs() <= 1e-11 * b.abs().max(a.abs()).powi(4).max(1.0));
    }

    #[test]
    fn parabola_vertex_is_recovered(xm in 0.3f64..1.7, curv in 0.5f64..5.0, offset in -1.0f64..1.0) {
        let xs: Vec<f64> = (0..21).map(|i| 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| offset - curv * (x - xm).powi(2)).collect();
        let e = locate_extremum(&xs, &ys, ExtremumKind::Max).unwrap();
        prop_assert!((e.lambda_m - xm).abs() < 1e-9);
        prop_assert!((e.value - offset).abs() < 1e-9);
        let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
        let m = locate_extremum(&xs, &neg, ExtremumKind::Min).unwrap();
        prop_assert!((m.lambda_m - xm).abs() < 1e-9);
    }

    #[test]
    fn mismatch_is_non_negative_and_zero_on_identity(v in prop::collection::vec(0.1f64..5.0, 2..40), eps in 0.0f64..0.5) {
        prop_assert_eq!(mismatch_score(&v, &v, 0.1).unwrap(), 0.0);
        let w: Vec<f64> = v.iter().map(|x| x * (1.0 + eps)).collect();
        let s = mismatch_score(&w, &v, 1.0).unwrap();
        prop_assert!((s - eps * eps * v.len() as f64).abs() <= 1e-12 * s.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hamiltonian_is_symmetric_with_real_spectrum(k1 in 0.0f64..0.9, mx in 3usize..9, half in 1usize..4) {
        let p = channel(8.0, k1, 0.05);
        let g = build_grid(&p, mx, 2 * half + 1, BoundaryX::Periodic, None).unwrap();
        let h = assemble_hamiltonian(&g, &p);
        let d = h.to_dense();
        prop_assert!((&d - d.transpose()).amax() == 0.0);
        let eig = diagonalize(&h).unwrap();
        prop_assert!(eig.residual(&h) <= 1e-9 * d.amax());
        prop_assert!(eig.orthonormality_defect() <= 1e-10);
        prop_assert!((eig.energies.iter().sum::<f64>() - h.trace()).abs() <= 1e-9 * d.amax() * g.len() as f64);
    }

    #[test]
    fn redfield_state_is_a_density_matrix(
        k1 in 0.0f64..0.6,
        lambda in 0.01f64..0.3,
        zl in 1e-4f64..1e-2,
        zr in 1e-4f64..1e-2,
    ) {
        let p = channel(4.0, k1, lambda);
        let g = build_grid(&p, 5, 3, BoundaryX::Open, None).unwrap();
        let h = assemble_hamiltonian(&g, &p);
        let eig = diagonalize(&h).unwrap();
        let gamma = default_gamma(&p);
        let left = LeadSpec::from_fugacity(Side::Left, zl, gamma, p.beta).unwrap();
        let right = LeadSpec::from_fugacity(Side::Right, zr, gamma, p.beta).unwrap();
        let setup = transport_setup(&g, &h, &eig, 1.0, left, right).unwrap();
        let opts = SteadyOptions { method: SteadyMethod::Direct, threshold: default_threshold(gamma, 1.0), max_iterations: 0 };
        let s = setup.solve(&opts).unwrap();
        let tr = s.pdm.trace();
        prop_assert!(tr > 0.0);
        prop_assert!(s.pdm.hermiticity_defect() <= 1e-12 * tr);
        prop_assert!(s.pdm.min_diagonal() >= -1e-10);
        let j = setup.current(&s).unwrap();
        let out = setup.right_intake(&s);
        prop_assert!((j + out).abs() <= 1e-8 * j.abs().max(out.abs()).max(1e-300));
        // Left bias drives particles to the right, which the left lead sees as a loss.
        if zl > zr * 1.01 {
            prop_assert!(j < 0.0);
        } else if zr > zl * 1.01 {
            prop_assert!(j > 0.0);
        }
    }

    #[test]
    fn pde_update_conserves_mass(k1 in 0.0f64..0.6, lambda in 0.0f64..0.1, dt in 1e-5f64..1.0) {
        let p = channel(16.0, k1, 0.05);
        let drift = mass_drift_2d(&p, lambda, 6, 5, 50, dt).unwrap();
        prop_assert!(drift <= 1e-13);
    }
}
