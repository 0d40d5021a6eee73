mod common;

use churn_core::model::{generalized_wtm_of, DsmSet, FeedbackDistribution, ProjectState};
use churn_core::simulate::{expected_epoch_states, run_trajectory};
use churn_core::spectral::spectral_radius;
use proptest::prelude::*;

fn rho(d: &DsmSet<f64>, dist: &FeedbackDistribution<f64>) -> f64 {
    spectral_radius(&generalized_wtm_of(d, dist))
}

/// Scales the dependencies so that the feasibility index equals `target`,
/// or `None` when no scale reaches it.
fn rescale(d: &DsmSet<f64>, dist: &FeedbackDistribution<f64>, target: f64) -> Option<DsmSet<f64>> {
    let at = |s: f64| rho(&d.scale_dependencies(s), dist);
    if at(0.0) >= target {
        return None;
    }
    let mut hi = 1.0;
    while at(hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(d.scale_dependencies(0.5 * (lo + hi)))
}

fn total(z: &[f64]) -> f64 {
    z.iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_replay_and_stay_nonnegative(
        d in (1usize..=3).prop_flat_map(common::dsms),
        dist in common::interval_pmf(),
        seed in any::<u64>(),
    ) {
        let x0 = ProjectState::unit(d.m());
        let a = run_trajectory(&d, &dist, &x0, 60, seed);
        let b = run_trajectory(&d, &dist, &x0, 60, seed);
        prop_assert_eq!(&a, &b);
        for s in &a.states {
            prop_assert!(s.to_vector().iter().all(|&x| x >= 0.0));
        }
    }

    /// Expected epoch states vanish below the boundary and blow up above it.
    /// Targets keep clear of one so that 500 epochs separate the two cases.
    #[test]
    fn epoch_states_follow_the_index(
        d in common::tunable_dsms(3),
        dist in common::interval_pmf(),
        target in prop_oneof![0.2f64..0.95, 1.05f64..1.8],
    ) {
        let Some(scaled) = rescale(&d, &dist, target) else {
            return Ok(());
        };
        let r = rho(&scaled, &dist);
        let z0 = ProjectState::unit(3).to_vector();
        let states = expected_epoch_states(&scaled, &dist, &z0, 500);
        let start = total(&z0);
        let decayed = states.iter().any(|z| total(z) < 1e-6 * start);
        let grew = states.iter().any(|z| total(z) > 1e6 * start);
        prop_assert_eq!(decayed, r < 0.99, "rho {}", r);
        prop_assert_eq!(grew, r > 1.01, "rho {}", r);
    }
}
