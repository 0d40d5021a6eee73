mod common;

use churn_core::matrix::Matrix;
use churn_core::model::{generalized_wtm_of, Allocation};
use churn_core::spectral::{grad_log_rho, perron_pair, spectral_radius, LogRhoModel};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Largest eigenvalue modulus from nalgebra's Schur form.
fn schur_radius(mat: &Matrix<f64>) -> f64 {
    let n = mat.rows();
    let dm = DMatrix::from_row_slice(n, n, mat.as_slice());
    dm.complex_eigenvalues().iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn log_rho_is_midpoint_convex(
        d in (1usize..=3).prop_flat_map(common::tunable_dsms),
        dist in common::interval_pmf(),
        a in prop::collection::vec(0.0f64..=1.0, 36),
        b in prop::collection::vec(0.0f64..=1.0, 36),
        theta in prop::sample::select(vec![0.25, 0.5, 0.75]),
    ) {
        let eps = 0.2;
        let coords = d.tunable_coords();
        let nominal: Vec<f64> = coords.iter().map(|&c| d.value(c)).collect();
        let model = LogRhoModel::new(d.clone(), dist, coords);
        let xa = common::box_point(&nominal, eps, &a);
        let xb = common::box_point(&nominal, eps, &b);
        let mix: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| theta * p + (1.0 - theta) * q).collect();
        let log_rho = |x: &[f64]| model.rho(&common::exp_all(x)).max(1e-300).ln();
        let (la, lb, lm) = (log_rho(&xa), log_rho(&xb), log_rho(&mix));
        prop_assume!(la.is_finite() && lb.is_finite() && la > -600.0 && lb > -600.0);
        prop_assert!(lm <= theta * la + (1.0 - theta) * lb + 1e-9, "{lm} vs {la} {lb}");
    }

    #[test]
    fn rho_never_drops_when_a_dependency_grows(
        d in (1usize..=3).prop_flat_map(common::tunable_dsms),
        dist in common::interval_pmf(),
        pick in any::<prop::sample::Index>(),
        factor in 1.0f64..3.0,
    ) {
        let coords = d.tunable_coords();
        let c = coords[pick.index(coords.len())];
        let before = spectral_radius(&generalized_wtm_of(&d, &dist));
        let mut values: Vec<f64> = coords.iter().map(|&k| d.value(k)).collect();
        values[pick.index(coords.len())] *= factor;
        let model = LogRhoModel::new(d.clone(), dist, coords.clone());
        let after = model.rho(&values);
        prop_assert!(after >= before * (1.0 - 1e-10) - 1e-14, "{c}: {before} -> {after}");
    }

    #[test]
    fn perron_pair_satisfies_residuals(
        d in (1usize..=4).prop_flat_map(common::dsms),
        dist in common::interval_pmf(),
    ) {
        let mat = generalized_wtm_of(&d, &dist);
        if let Ok(pair) = perron_pair(&mat) {
            let (ru, rv) = pair.residuals(&mat);
            let bound = 1e-9 * pair.rho.max(1.0);
            prop_assert!(ru <= bound && rv <= bound, "{ru} {rv}");
            let uv: f64 = pair.u.iter().zip(&pair.v).map(|(a, b)| a * b).sum();
            prop_assert!((uv - 1.0).abs() <= 1e-12);
            prop_assert!(pair.u.iter().chain(&pair.v).all(|&x| x >= 0.0));
            prop_assert!((pair.rho - schur_radius(&mat)).abs() <= 1e-8 * pair.rho.max(1.0));
        }
    }

    #[test]
    fn gradient_matches_central_differences(
        d in (1usize..=3).prop_flat_map(common::tunable_dsms),
        dist in common::interval_pmf(),
    ) {
        let psi: Allocation<f64> = d.tunable_coords().into_iter().map(|c| (c, d.value(c))).collect();
        let Ok(grad) = grad_log_rho(&d, &dist, &psi) else {
            return Ok(());
        };
        let h: f64 = 1e-5;
        let coords: Vec<_> = psi.keys().copied().collect();
        let values: Vec<f64> = psi.values().copied().collect();
        let model = LogRhoModel::new(d.clone(), dist, coords.clone());
        let fd: Vec<f64> = (0..values.len())
            .map(|k| {
                let mut v = values.clone();
                v[k] = values[k] * h.exp();
                let up = schur_radius(&model.matrix(&v)).ln();
                v[k] = values[k] * (-h).exp();
                let down = schur_radius(&model.matrix(&v)).ln();
                (up - down) / (2.0 * h)
            })
            .collect();
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assume!(scale > 1e-8);
        let err = coords.iter().zip(&fd).fold(0.0f64, |m, (c, f)| m.max((grad[c] - f).abs()));
        prop_assert!(err <= 1e-5 * scale, "relative error {}", err / scale);
    }
}
