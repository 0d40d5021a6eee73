mod common;

use churn_core::model::generalized_wtm_of;
use churn_core::netgen::{
    aggregate_investment_by_task, calibrate_extended_dsm, centralities, edge_count, generate_graph, scaled_extended,
    GraphModel, ExtendedDsm,
};
use churn_core::optimize::{solve_budget_constrained, CostModel};
use churn_core::spectral::spectral_radius;
use proptest::prelude::*;

fn graph_model() -> impl Strategy<Value = GraphModel> {
    prop_oneof![
        (0.05f64..0.6).prop_map(|p| GraphModel::Er { p }),
        (0.0f64..0.5).prop_map(|beta| GraphModel::Ws { k: 2, beta }),
        Just(GraphModel::Ba { attach: 1 }),
        Just(GraphModel::Ba { attach: 2 }),
    ]
}

fn has_edges(adj: &churn_core::matrix::Matrix<f64>) -> bool {
    edge_count(adj) > 0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graphs_replay_and_stay_simple(model in graph_model(), half in 3usize..=8, seed in any::<u64>()) {
        let n = 2 * half;
        let a = generate_graph(model, n, seed).unwrap();
        let b = generate_graph(model, n, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for i in 0..n {
            prop_assert_eq!(a[(i, i)], 0.0);
            for j in 0..n {
                prop_assert!(a[(i, j)] == 0.0 || a[(i, j)] == 1.0);
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
        match model {
            GraphModel::Ba { attach } => {
                let seed_edges = attach * (attach + 1) / 2;
                prop_assert_eq!(edge_count(&a), seed_edges + attach * (n - attach - 1));
            }
            GraphModel::Ws { k, .. } => prop_assert_eq!(edge_count(&a), n * k / 2),
            GraphModel::Er { .. } => {}
        }
    }

    #[test]
    fn calibration_brackets_the_boundary(
        model in graph_model(),
        half in 2usize..=5,
        seed in any::<u64>(),
        dist in common::interval_pmf(),
        diag in 0.5f64..=1.0,
    ) {
        let adj = generate_graph(model, 2 * half, seed).unwrap();
        prop_assume!(has_edges(&adj));
        let rho = |s: f64| {
            let d = scaled_extended(&adj, s, diag).unwrap().to_dsms().unwrap();
            spectral_radius(&generalized_wtm_of(&d, &dist))
        };
        if let Ok((_, c)) = calibrate_extended_dsm(&adj, &dist, diag) {
            prop_assert!(rho(c * (1.0 - 1e-6)) <= 1.0, "{}", rho(c * (1.0 - 1e-6)));
            prop_assert!(rho(c * (1.0 + 1e-6)) >= 1.0, "{}", rho(c * (1.0 + 1e-6)));
        }
    }

    #[test]
    fn centralities_sum_to_task_count(model in graph_model(), half in 2usize..=8, seed in any::<u64>()) {
        let n = 2 * half;
        let adj = generate_graph(model, n, seed).unwrap();
        let ext = scaled_extended(&adj, 0.1, 1.0).unwrap();
        let report = centralities(&ext);
        for values in [&report.betweenness, &report.pagerank, &report.hub] {
            prop_assert_eq!(values.len(), n);
            prop_assert!(values.iter().all(|&v| v >= 0.0));
            let total: f64 = values.iter().sum();
            // all-zero measures stay zero
            prop_assert!(total == 0.0 || (total - n as f64).abs() <= 1e-9 * n as f64, "{total}");
        }
    }

    #[test]
    fn task_spend_counts_each_coordinate_twice(
        d in (1usize..=3).prop_flat_map(common::tunable_dsms),
        dist in common::interval_pmf(),
        frac in 0.0f64..1.0,
    ) {
        let costs = CostModel::power_law(&d, 0.5, 1.0).unwrap();
        let r = solve_budget_constrained(&d, &dist, &costs, frac * costs.total_full_cost()).unwrap();
        let per_task = aggregate_investment_by_task(&r, d.m());
        let total: f64 = per_task.iter().sum();
        let spend: f64 = r.spend.values().sum();
        prop_assert!((total - 2.0 * spend).abs() <= 1e-9 * spend.max(1.0));
        let round = ExtendedDsm::from_dsms(&d).to_dsms().unwrap();
        prop_assert_eq!(round, d);
    }
}
