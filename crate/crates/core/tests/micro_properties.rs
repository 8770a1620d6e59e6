//! Randomised invariants of the cell problems and the effective tensors.

use proptest::prelude::*;

use fehmm_core::effective::EffectiveTensorTable;
use fehmm_core::materials::{Coefficients, Material, Profile};
use fehmm_core::micro::forms::assemble_micro_forms;
use fehmm_core::micro::{solve_cell, CellOptions, PeriodicLagrangeSpace, SobolevStepper};

fn profile(lo: f64, hi: f64) -> impl Strategy<Value = Profile> {
    prop_oneof![
        (lo..hi).prop_map(Profile::constant),
        (0..3usize, lo..hi, lo..hi, 1..4usize).prop_map(|(axis, a, b, q)| Profile::Piecewise {
            axis,
            values: vec![a, b],
            fractions: vec![0.25 * q as f64, 1.0 - 0.25 * q as f64],
        }),
        (0..3usize, lo..hi, 0.0..1.0f64, 0.0..6.3f64).prop_map(move |(axis, mean, s, phase)| Profile::Sinusoid {
            axis,
            mean,
            amplitude: s * (mean - lo).max(0.0) * 0.9,
            phase,
        }),
        (lo..hi, 0.0..1.0f64).prop_map(move |(mean, s)| Profile::Smooth {
            mean,
            amplitude: s * (mean - lo).max(0.0) * 0.9,
        }),
    ]
}

fn material() -> impl Strategy<Value = Material> {
    prop_oneof![
        (profile(1.0, 4.0), profile(0.0, 2.0)).prop_map(|(m, r)| Material::Isotropic { m, r }),
        (profile(1.0, 4.0), profile(1.0, 3.0), profile(0.0, 2.0), profile(0.0, 1.0))
            .prop_map(|(eps, mu, sigma, sigma_m)| Material::Maxwell { eps, mu, sigma, sigma_m }),
        (profile(1.0, 3.0), profile(0.5, 3.0), 0.2..2.0f64, profile(0.0, 1.0)).prop_map(
            |(eps_inf, eps_delta, td, sigma)| Material::Debye {
                eps_inf,
                eps_delta,
                tau_d: Profile::constant(td),
                mu: Profile::constant(1.0),
                sigma,
            }
        ),
    ]
}

/// Symmetric media, the only ones for which kernel decay is claimed.
fn symmetric_material() -> impl Strategy<Value = Material> {
    prop_oneof![
        (profile(1.0, 4.0), profile(0.0, 2.0)).prop_map(|(m, r)| Material::Isotropic { m, r }),
        (profile(1.0, 4.0), profile(1.0, 3.0), profile(0.0, 2.0), profile(0.0, 1.0))
            .prop_map(|(eps, mu, sigma, sigma_m)| Material::Maxwell { eps, mu, sigma, sigma_m }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn cell_solution_invariants(mat in material(), tau in 0.02..0.2f64) {
        let coeffs = Coefficients::new(mat);
        let space = PeriodicLagrangeSpace::new([4; 3], 1, coeffs.n() / 3).unwrap();
        let sol = solve_cell(&space, &coeffs, [0.5; 3], tau, 8, CellOptions::default()).unwrap();

        prop_assert!(sol.galerkin_residual <= 1e-10, "Galerkin residual {}", sol.galerkin_residual);
        prop_assert!(sol.m_h_asymmetry <= 1e-12 * sol.m_h.amax().max(1.0));
        for (wn, wm) in sol.w_n0.iter().zip(&sol.w_m) {
            let scale = wm.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
            let d = wn.iter().zip(wm).fold(0.0f64, |a, (n, m)| a.max((n + m).abs()));
            prop_assert!(d <= 1e-10 * scale.max(1.0));
        }
        for norms in sol.norms_g.iter().chain(&sol.norms_n) {
            for w in norms.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
            }
        }
        let min_eig = sol.m_h.clone().symmetric_eigenvalues().min();
        prop_assert!(min_eig >= sol.bounds.alpha - 1e-9, "{min_eig} < {}", sol.bounds.alpha);
        prop_assert!(sol.m_h.amax() <= sol.bounds.c_m + 1e-9);
    }

    #[test]
    fn effective_tensors_respect_bounds(mat in material(), tau in 0.02..0.2f64) {
        let coeffs = Coefficients::new(mat);
        let space = PeriodicLagrangeSpace::new([4; 3], 1, coeffs.n() / 3).unwrap();
        let table = EffectiveTensorTable::compute(&coeffs, &[[0.5; 3]], &space, tau, 8, CellOptions::default(), [0; 32])
            .unwrap();
        for c in table.checks() {
            prop_assert!(c.violations().is_empty(), "{:?}", c.violations());
            prop_assert!(c.min_eig_sym_r >= -1e-10 * c.alpha.max(1.0));
        }
    }

    #[test]
    fn sobolev_steps_compose(mat in material(), tau in 0.02..0.3f64, m in 1..6usize) {
        let coeffs = Coefficients::new(mat);
        let space = PeriodicLagrangeSpace::new([3; 3], 1, coeffs.n() / 3).unwrap();
        let forms = assemble_micro_forms(&space, &coeffs, [0.5; 3]).unwrap();
        let sol = solve_cell(&space, &coeffs, [0.5; 3], tau, 0, CellOptions::default()).unwrap();
        let stepper = SobolevStepper::new(&space, &forms, tau, CellOptions::default());
        for w0 in &sol.w_g0 {
            let mut at = Vec::new();
            stepper.evolve(w0, 2 * m, |k, w| if k == m || k == 2 * m { at.push(w.to_vec()) }).unwrap();
            let mut again = Vec::new();
            stepper.evolve(&at[0], m, |k, w| if k == m { again.push(w.to_vec()) }).unwrap();
            prop_assert_eq!(&again[0], &at[1]);
        }
    }

    #[test]
    fn kernel_frobenius_norm_decays(mat in symmetric_material(), s in 0.05..1.0f64) {
        let coeffs = Coefficients::new(mat);
        let space = PeriodicLagrangeSpace::new([4; 3], 1, 2).unwrap();
        let sol = solve_cell(&space, &coeffs, [0.5; 3], 1.0, 0, CellOptions::default()).unwrap();
        // keep every Crank-Nicolson amplification factor non-negative
        let b = sol.bounds;
        let tau = s * 2.0 * b.alpha / b.c_r.max(1e-12);
        let sol = solve_cell(&space, &coeffs, [0.5; 3], tau, 12, CellOptions::default()).unwrap();
        for w in sol.g_h.windows(2) {
            prop_assert!(w[1].norm() <= w[0].norm() * (1.0 + 1e-10) + 1e-14);
        }
    }
}
