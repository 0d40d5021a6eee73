mod common;

use churn_core::model::{DsmSet, FeedbackDistribution};
use churn_core::optimize::{
    baseline_allocation, solve_budget_constrained, solve_performance_constrained, AllocationResult, CostModel,
};
use churn_core::OptimizeError;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (DsmSet<f64>, FeedbackDistribution<f64>, CostModel)> {
    (
        (2usize..=3).prop_flat_map(common::tunable_dsms),
        common::interval_pmf(),
        0.3f64..0.9,
        prop::sample::select(vec![0.5, 1.0, 3.0]),
    )
        .prop_map(|(d, dist, eps, p)| {
            let costs = CostModel::power_law(&d, eps, p).unwrap();
            (d, dist, costs)
        })
}

fn inside_box(d: &DsmSet<f64>, costs: &CostModel, r: &AllocationResult) -> bool {
    r.psi.iter().all(|(&c, &v)| {
        let hi = d.value(c);
        v >= costs.epsilon() * hi * (1.0 - 1e-8) && v <= hi * (1.0 + 1e-8)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budget_solution_is_feasible_and_improves(
        (d, dist, costs) in instance(),
        frac in 0.0f64..1.2,
    ) {
        let budget = frac * costs.total_full_cost();
        let r = solve_budget_constrained(&d, &dist, &costs, budget).unwrap();
        prop_assert!(inside_box(&d, &costs, &r));
        prop_assert!(r.total_cost <= budget + 1e-8 * budget.max(1.0), "{} > {budget}", r.total_cost);
        prop_assert!(r.rho_after <= r.rho_before + 1e-10);
    }

    #[test]
    fn more_budget_never_hurts(
        (d, dist, costs) in instance(),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let full = costs.total_full_cost();
        let (lo, hi) = (a.min(b) * full, a.max(b) * full);
        let r_lo = solve_budget_constrained(&d, &dist, &costs, lo).unwrap();
        let r_hi = solve_budget_constrained(&d, &dist, &costs, hi).unwrap();
        prop_assert!(r_hi.rho_after <= r_lo.rho_after + 1e-6, "{} vs {}", r_hi.rho_after, r_lo.rho_after);
    }

    #[test]
    fn optimized_beats_baseline(
        (d, dist, costs) in instance(),
        frac in 0.0f64..1.0,
        focus in prop::collection::btree_set(0usize..2, 1..=2),
    ) {
        let focus: Vec<usize> = focus.into_iter().collect();
        let budget = frac * costs.total_full_cost();
        let Ok(base) = baseline_allocation(&d, &dist, &costs, budget, &focus) else {
            return Ok(());
        };
        let opt = solve_budget_constrained(&d, &dist, &costs, budget).unwrap();
        prop_assert!(opt.rho_after <= base.rho_after + 1e-6, "{} vs {}", opt.rho_after, base.rho_after);
    }

    #[test]
    fn solver_is_deterministic((d, dist, costs) in instance(), frac in 0.0f64..1.0) {
        let budget = frac * costs.total_full_cost();
        let a = solve_budget_constrained(&d, &dist, &costs, budget).unwrap();
        let b = solve_budget_constrained(&d, &dist, &costs, budget).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn performance_solution_meets_target((d, dist, costs) in instance(), shrink in 0.5f64..1.0) {
        let rho0 = solve_budget_constrained(&d, &dist, &costs, 0.0).unwrap().rho_after;
        let target = shrink * rho0;
        match solve_performance_constrained(&d, &dist, &costs, target) {
            Ok(r) => {
                prop_assert!(inside_box(&d, &costs, &r));
                prop_assert!(r.rho_after <= target * (1.0 + 1e-8), "{} > {target}", r.rho_after);
            }
            Err(OptimizeError::Infeasible { best, .. }) => prop_assert!(best > target),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
