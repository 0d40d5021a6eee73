//! Random project generators shared by the property tests.

#![allow(dead_code)]

use churn_core::matrix::Matrix;
use churn_core::model::{DsmSet, FeedbackDistribution};
use proptest::prelude::*;

/// An off-diagonal or IDM entry: absent with probability about one half.
fn dependency() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.02f64..0.45]
}

fn block(m: usize, diagonal: bool) -> impl Strategy<Value = Matrix<f64>> {
    (
        prop::collection::vec(dependency(), m * m),
        prop::collection::vec(0.3f64..=1.0, m),
    )
        .prop_map(move |(off, diag)| {
            Matrix::from_fn(m, m, |i, j| if diagonal && i == j { diag[i] } else { off[i * m + j] })
        })
}

pub fn dsms(m: usize) -> impl Strategy<Value = DsmSet<f64>> {
    (block(m, true), block(m, true), block(m, false), block(m, false))
        .prop_map(|(l, s, ls, sl)| DsmSet::new(l, s, ls, sl).expect("generated blocks are valid"))
}

/// Projects with at least one tunable coordinate.
pub fn tunable_dsms(m: usize) -> impl Strategy<Value = DsmSet<f64>> {
    dsms(m).prop_filter("needs a tunable coordinate", |d| !d.tunable_coords().is_empty())
}

/// Pmf on a random subset of `1..=5`.
pub fn interval_pmf() -> impl Strategy<Value = FeedbackDistribution<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..1.0], 5)
        .prop_filter("needs some mass", |w| w.iter().any(|&x| x > 0.0))
        .prop_map(|w| {
            let total: f64 = w.iter().sum();
            let entries: Vec<(usize, f64)> = w
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > 0.0)
                .map(|(h, &x)| (h + 1, x / total))
                .collect();
            FeedbackDistribution::new(entries).expect("normalised pmf")
        })
}

/// Point of the box `[ln εΩ, ln Ω]` from unit-interval fractions.
pub fn box_point(nominal: &[f64], epsilon: f64, fractions: &[f64]) -> Vec<f64> {
    nominal
        .iter()
        .zip(fractions)
        .map(|(&w, &t)| (epsilon * w).ln() + t * (-epsilon.ln()))
        .collect()
}

pub fn exp_all(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.exp()).collect()
}
