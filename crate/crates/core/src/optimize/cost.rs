//! Posynomial investment costs.
//!
//! The cost of moving a dependency from its nominal value `Ω` to `Ψ` is
//! `f(Ψ) = f⁺(Ψ) − f⁺(Ω)` with `f⁺` a posynomial. The default family is
//! `f⁺(Ψ) = c·Ψ^(−p)`, with `c` fixed by requiring that full improvement to
//! `εΩ` costs exactly `Ω`.

use std::collections::BTreeMap;

use crate::error::ModelError;
use crate::model::{Allocation, Coord, DsmSet};

/// `coef · Ψ^exponent`
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Family {
    /// `c·Ψ^(−p)`; `c` is implied by `Ω` and `ε`.
    Power { p: f64 },
    /// Arbitrary posynomial per coordinate, stored as `(ln coef, exponent)`.
    Posynomial(BTreeMap<Coord, Vec<(f64, f64)>>),
}

/// Costs for every tunable coordinate of one project.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    epsilon: f64,
    family: Family,
    nominal: BTreeMap<Coord, f64>,
}

/// `C = C⁺ − C⁻`
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CostSplit {
    pub total: f64,
    pub c_plus: f64,
    pub c_minus: f64,
}

fn check_epsilon(epsilon: f64) -> Result<(), ModelError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(ModelError::invalid("epsilon", "must lie in (0, 1)"))
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

impl CostModel {
    pub fn power_law(dsms: &DsmSet<f64>, epsilon: f64, p: f64) -> Result<Self, ModelError> {
        check_epsilon(epsilon)?;
        if !(p > 0.0 && p.is_finite()) {
            return Err(ModelError::invalid("cost_exponent_p", "must be positive"));
        }
        Ok(Self {
            epsilon,
            family: Family::Power { p },
            nominal: dsms.tunable_coords().into_iter().map(|c| (c, dsms.value(c))).collect(),
        })
    }

    /// One posynomial `f⁺` per tunable coordinate. Exponents must be
    /// nonpositive with at least one negative, so cost decreases in `Ψ`.
    pub fn from_posynomials(
        dsms: &DsmSet<f64>,
        epsilon: f64,
        terms: &BTreeMap<Coord, Vec<Monomial>>,
    ) -> Result<Self, ModelError> {
        check_epsilon(epsilon)?;
        let mut stored = BTreeMap::new();
        for c in dsms.tunable_coords() {
            let mono = terms
                .get(&c)
                .ok_or_else(|| ModelError::invalid(format!("cost[{c}]"), "missing posynomial"))?;
            let valid = mono.iter().all(|t| t.coef > 0.0 && t.coef.is_finite() && t.exponent <= 0.0)
                && mono.iter().any(|t| t.exponent < 0.0);
            if !valid {
                return Err(ModelError::invalid(
                    format!("cost[{c}]"),
                    "monomials need positive coefficients and nonpositive exponents, one negative",
                ));
            }
            stored.insert(c, mono.iter().map(|t| (t.coef.ln(), t.exponent)).collect());
        }
        if let Some(extra) = terms.keys().find(|c| !dsms.is_tunable(**c)) {
            return Err(ModelError::NotTunable(*extra));
        }
        Ok(Self {
            epsilon,
            family: Family::Posynomial(stored),
            nominal: dsms.tunable_coords().into_iter().map(|c| (c, dsms.value(c))).collect(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The exponent `p` of the default family, if that family is in use.
    pub fn exponent(&self) -> Option<f64> {
        match self.family {
            Family::Power { p } => Some(p),
            Family::Posynomial(_) => None,
        }
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        self.nominal.keys().copied()
    }

    pub fn nominal(&self, c: Coord) -> Option<f64> {
        self.nominal.get(&c).copied()
    }

    /// `c = Ω^(p+1) / (ε^(−p) − 1)` for the default family.
    pub fn coefficient(&self, c: Coord) -> Option<f64> {
        let omega = self.nominal(c)?;
        match self.family {
            Family::Power { p } => Some(omega.powf(p + 1.0) / (-p * self.epsilon.ln()).exp_m1()),
            Family::Posynomial(_) => None,
        }
    }

    fn bounds(&self, c: Coord) -> Result<(f64, f64), ModelError> {
        let omega = self.nominal(c).ok_or(ModelError::NotTunable(c))?;
        Ok((self.epsilon * omega, omega))
    }

    /// `(ln coef, exponent)` pairs of `f⁺` at coordinate `c`.
    pub(crate) fn log_terms(&self, c: Coord) -> Vec<(f64, f64)> {
        let omega = self.nominal[&c];
        match &self.family {
            Family::Power { p } => {
                let ln_c = (p + 1.0) * omega.ln() - (-p * self.epsilon.ln()).exp_m1().ln();
                vec![(ln_c, -p)]
            }
            Family::Posynomial(map) => map[&c].clone(),
        }
    }

    /// `f⁺(Ψ)` evaluated at `ξ = ln Ψ`.
    pub(crate) fn f_plus_log(&self, c: Coord, xi: f64) -> f64 {
        self.log_terms(c).iter().map(|(lc, a)| (lc + a * xi).exp()).sum()
    }

    /// Cost at `ξ = ln Ψ` without box checks, and its derivative in `ξ`.
    pub(crate) fn cost_and_slope_log(&self, c: Coord, xi: f64) -> (f64, f64) {
        let (cost, slope, _) = self.cost_derivatives_log(c, xi);
        (cost, slope)
    }

    /// Cost at `ξ = ln Ψ` with its first and second derivatives in `ξ`.
    pub(crate) fn cost_derivatives_log(&self, c: Coord, xi: f64) -> (f64, f64, f64) {
        let omega = self.nominal[&c];
        match self.family {
            Family::Power { p } => {
                // Ω·((Ω/Ψ)^p − 1)/(ε^(−p) − 1), stable near Ψ = Ω
                let denom = (-p * self.epsilon.ln()).exp_m1();
                let t = p * (omega.ln() - xi);
                let top = omega * t.exp() / denom;
                (omega * t.exp_m1() / denom, -p * top, p * p * top)
            }
            Family::Posynomial(_) => {
                let terms = self.log_terms(c);
                let at = |x: f64| terms.iter().map(|(lc, a)| (lc + a * x).exp()).sum::<f64>();
                let slope = terms.iter().map(|(lc, a)| a * (lc + a * xi).exp()).sum();
                let curv = terms.iter().map(|(lc, a)| a * a * (lc + a * xi).exp()).sum();
                (at(xi) - at(omega.ln()), slope, curv)
            }
        }
    }

    /// Investment needed to move coordinate `c` to `psi`.
    pub fn cost_of(&self, c: Coord, psi: f64) -> Result<f64, ModelError> {
        let (lo, hi) = self.bounds(c)?;
        let slack = 1e-12;
        if !psi.is_finite() || psi < lo * (1.0 - slack) || psi > hi * (1.0 + slack) {
            return Err(ModelError::OutOfBox {
                coord: c,
                value: psi,
                lo,
                hi,
            });
        }
        if psi >= hi {
            return Ok(0.0);
        }
        Ok(self.cost_and_slope_log(c, psi.max(lo).ln()).0.max(0.0))
    }

    /// Cost of full improvement to `εΩ` (equals `Ω` for the default family).
    pub fn full_cost(&self, c: Coord) -> f64 {
        match self.family {
            Family::Power { .. } => self.nominal[&c],
            Family::Posynomial(_) => self.cost_and_slope_log(c, (self.epsilon * self.nominal[&c]).ln()).0,
        }
    }

    pub fn total_full_cost(&self) -> f64 {
        self.coords().map(|c| self.full_cost(c)).sum()
    }

    /// `C⁻ = Σ f⁺(Ω)`
    pub fn c_minus(&self) -> f64 {
        self.nominal.iter().map(|(&c, &om)| self.f_plus_log(c, om.ln())).sum()
    }

    /// `ln C⁺` at log-values `xi` (ordered like `coords`).
    pub fn log_c_plus(&self, coords: &[Coord], xi: &[f64]) -> f64 {
        log_sum_exp(
            coords
                .iter()
                .zip(xi)
                .flat_map(|(&c, &x)| self.log_terms(c).into_iter().map(move |(lc, a)| lc + a * x)),
        )
    }

    /// Total cost over all tunable coordinates; coordinates missing from
    /// `psi` sit at their nominal value and cost nothing.
    pub fn total_cost(&self, psi: &Allocation<f64>) -> Result<CostSplit, ModelError> {
        let mut total = 0.0;
        for (&c, &v) in psi {
            total += self.cost_of(c, v)?;
        }
        let c_minus = self.c_minus();
        Ok(CostSplit {
            total,
            c_plus: total + c_minus,
            c_minus,
        })
    }

    /// The `Ψ ∈ [εΩ, Ω]` bought by spending `spend` on coordinate `c`.
    pub fn invert(&self, c: Coord, spend: f64) -> Result<f64, ModelError> {
        let (lo, hi) = self.bounds(c)?;
        if spend <= 0.0 {
            return Ok(hi);
        }
        if spend >= self.full_cost(c) {
            return Ok(lo);
        }
        match self.family {
            Family::Power { p } => {
                // Ψ = (spend/c + Ω^(−p))^(−1/p), written relative to Ω
                let denom = (-p * self.epsilon.ln()).exp_m1();
                let psi = hi * (1.0 + spend * denom / hi).powf(-1.0 / p);
                Ok(psi.clamp(lo, hi))
            }
            Family::Posynomial(_) => {
                let (mut a, mut b) = (lo.ln(), hi.ln());
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if self.cost_and_slope_log(c, mid).0 > spend {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                Ok((0.5 * (a + b)).exp().clamp(lo, hi))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Block;

    fn one_dep() -> (DsmSet<f64>, Coord) {
        let d = DsmSet::from_rows(&[vec![0.5]], &[vec![0.5]], &[vec![0.0]], &[vec![0.5]]).unwrap();
        (d, Coord::new(Block::SL, 0, 0))
    }

    #[test]
    fn normalisation_points() {
        let (d, c) = one_dep();
        for p in [0.5, 1.0, 10.0, 50.0] {
            let cm = CostModel::power_law(&d, 0.85, p).unwrap();
            assert_eq!(cm.cost_of(c, 0.5).unwrap(), 0.0);
            assert!((cm.cost_of(c, 0.85 * 0.5).unwrap() - 0.5).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn coefficient_for_unit_exponent() {
        let (d, c) = one_dep();
        let cm = CostModel::power_law(&d, 0.85, 1.0).unwrap();
        let coef = cm.coefficient(c).unwrap();
        assert!((coef - 0.25 / (1.0 / 0.85 - 1.0)).abs() < 1e-12);
        assert!((coef - 1.416_666_666_666_667).abs() < 1e-12);
        // direct evaluation of c·(Ψ^-1 − Ω^-1) at Ψ = 0.425
        assert!((coef * (1.0 / 0.425 - 1.0 / 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cost_decreases_in_psi() {
        let (d, c) = one_dep();
        let cm = CostModel::power_law(&d, 0.85, 10.0).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| 0.425 + 0.075 * k as f64 / 20.0).collect();
        for w in grid.windows(2) {
            assert!(cm.cost_of(c, w[0]).unwrap() > cm.cost_of(c, w[1]).unwrap());
        }
    }

    #[test]
    fn out_of_box_rejected() {
        let (d, c) = one_dep();
        let cm = CostModel::power_law(&d, 0.85, 1.0).unwrap();
        assert!(cm.cost_of(c, 0.6).is_err());
        assert!(cm.cost_of(c, 0.4).is_err());
        assert!(cm.cost_of(Coord::new(Block::L, 0, 0), 0.5).is_err());
    }

    #[test]
    fn invert_round_trips() {
        let (d, c) = one_dep();
        for p in [0.5, 1.0, 50.0] {
            let cm = CostModel::power_law(&d, 0.85, p).unwrap();
            for spend in [0.0, 0.01, 0.2, 0.49] {
                let psi = cm.invert(c, spend).unwrap();
                assert!((cm.cost_of(c, psi).unwrap() - spend).abs() < 1e-10, "p {p} spend {spend}");
            }
            assert_eq!(cm.invert(c, 1.0).unwrap(), 0.425);
        }
    }

    #[test]
    fn split_identity() {
        let (d, c) = one_dep();
        let cm = CostModel::power_law(&d, 0.85, 2.0).unwrap();
        let psi = Allocation::from([(c, 0.45)]);
        let s = cm.total_cost(&psi).unwrap();
        assert!((s.c_plus - cm.f_plus_log(c, 0.45f64.ln())).abs() < 1e-12);
        assert!((s.total - (s.c_plus - s.c_minus)).abs() < 1e-12);
    }

    #[test]
    fn log_derivatives_match_differences() {
        let (d, c) = one_dep();
        let posy = BTreeMap::from([(c, vec![Monomial { coef: 0.2, exponent: -3.0 }])]);
        for cm in [
            CostModel::power_law(&d, 0.85, 1.0).unwrap(),
            CostModel::power_law(&d, 0.85, 10.0).unwrap(),
            CostModel::from_posynomials(&d, 0.85, &posy).unwrap(),
        ] {
            let xi = 0.46f64.ln();
            let h = 1e-4;
            let (_, slope, curv) = cm.cost_derivatives_log(c, xi);
            let at = |x: f64| cm.cost_derivatives_log(c, x).0;
            let fd1 = (at(xi + h) - at(xi - h)) / (2.0 * h);
            let fd2 = (at(xi + h) - 2.0 * at(xi) + at(xi - h)) / (h * h);
            assert!((slope - fd1).abs() < 1e-6 * slope.abs().max(1.0), "{slope} {fd1}");
            assert!((curv - fd2).abs() < 1e-4 * curv.abs().max(1.0), "{curv} {fd2}");
        }
    }

    #[test]
    fn posynomial_family() {
        let (d, c) = one_dep();
        let terms = BTreeMap::from([(
            c,
            vec![
                Monomial { coef: 0.1, exponent: -2.0 },
                Monomial { coef: 0.3, exponent: -0.5 },
            ],
        )]);
        let cm = CostModel::from_posynomials(&d, 0.8, &terms).unwrap();
        let f = |x: f64| 0.1 * x.powi(-2) + 0.3 * x.powf(-0.5);
        assert!((cm.cost_of(c, 0.45).unwrap() - (f(0.45) - f(0.5))).abs() < 1e-12);
        let spend = cm.cost_of(c, 0.45).unwrap();
        assert!((cm.invert(c, spend).unwrap() - 0.45).abs() < 1e-10);
        let bad = BTreeMap::from([(c, vec![Monomial { coef: 1.0, exponent: 1.0 }])]);
        assert!(CostModel::from_posynomials(&d, 0.8, &bad).is_err());
    }
}
