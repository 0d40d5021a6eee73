//! Synthetic project networks: random graphs scaled into marginally
//! infeasible projects, centralities, and where the optimal budget goes.

mod centrality;
mod graph;

use serde::{Deserialize, Serialize};

pub use centrality::{betweenness, hubs, normalize_to, pagerank};
pub use graph::{edge_count, generate_graph, GraphModel, ModelKind};

use crate::error::NetgenError;
use crate::matrix::Matrix;
use crate::model::{generalized_wtm_of, Block, Coord, DsmSet, FeedbackDistribution};
use crate::optimize::{solve_budget_constrained, AllocationResult, CostModel};
use crate::spectral::spectral_radius;

/// Largest calibration scale tried before giving up.
pub const MAX_SCALE: f64 = 1e8;
const CALIBRATION_TOL: f64 = 1e-10;

/// The `2m × 2m` matrix `[[Ω_L, Ω_LS], [Ω_SL, Ω_S]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedDsm {
    omega: Matrix<f64>,
}

impl ExtendedDsm {
    pub fn new(omega: Matrix<f64>) -> Result<Self, NetgenError> {
        if !omega.is_square() || omega.rows() % 2 != 0 || omega.rows() == 0 {
            return Err(NetgenError::InvalidParams(format!(
                "extended DSM must be square with even positive size, got {}x{}",
                omega.rows(),
                omega.cols()
            )));
        }
        Ok(Self { omega })
    }

    pub fn from_dsms(d: &DsmSet<f64>) -> Self {
        let m = d.m();
        let mut omega = Matrix::zeros(2 * m, 2 * m);
        for block in Block::ALL {
            for i in 0..m {
                for j in 0..m {
                    let (r, c) = extended_position(Coord::new(block, i, j), m);
                    omega[(r, c)] = d.omega(block)[(i, j)];
                }
            }
        }
        Self { omega }
    }

    pub fn to_dsms(&self) -> Result<DsmSet<f64>, NetgenError> {
        let m = self.m();
        let quarter = |r0: usize, c0: usize| Matrix::from_fn(m, m, |i, j| self.omega[(r0 + i, c0 + j)]);
        Ok(DsmSet::new(quarter(0, 0), quarter(m, m), quarter(0, m), quarter(m, 0))?)
    }

    pub fn m(&self) -> usize {
        self.omega.rows() / 2
    }

    pub fn omega(&self) -> &Matrix<f64> {
        &self.omega
    }
}

/// Row and column of a coordinate inside the extended DSM.
pub fn extended_position(c: Coord, m: usize) -> (usize, usize) {
    match c.block {
        Block::L => (c.i, c.j),
        Block::LS => (c.i, m + c.j),
        Block::SL => (m + c.i, c.j),
        Block::S => (m + c.i, m + c.j),
    }
}

/// Task label in the extended indexing: `L1..Lm` then `S1..Sm`.
pub fn task_label(t: usize, m: usize) -> String {
    if t < m {
        format!("L{}", t + 1)
    } else {
        format!("S{}", t - m + 1)
    }
}

/// `Ω = c·A` off the diagonal, `diag_value` on it.
pub fn scaled_extended(adj: &Matrix<f64>, scale: f64, diag_value: f64) -> Result<ExtendedDsm, NetgenError> {
    let n = adj.rows();
    ExtendedDsm::new(Matrix::from_fn(n, n, |i, j| if i == j { diag_value } else { scale * adj[(i, j)] }))
}

fn rho_at(adj: &Matrix<f64>, dist: &FeedbackDistribution<f64>, scale: f64, diag_value: f64) -> Result<f64, NetgenError> {
    let d = scaled_extended(adj, scale, diag_value)?.to_dsms()?;
    Ok(spectral_radius(&generalized_wtm_of(&d, dist)))
}

/// Finds `c` with `ρ(M(c·A)) = 1` by doubling then bisection.
pub fn calibrate_extended_dsm(
    adj: &Matrix<f64>,
    dist: &FeedbackDistribution<f64>,
    diag_value: f64,
) -> Result<(ExtendedDsm, f64), NetgenError> {
    if !(diag_value > 0.0 && diag_value <= 1.0) {
        return Err(NetgenError::InvalidParams(format!("diag_value = {diag_value} outside (0, 1]")));
    }
    if adj.as_slice().iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
        return Err(NetgenError::InvalidParams("adjacency entries must be finite and nonnegative".into()));
    }
    let mut lo = 1e-8;
    if rho_at(adj, dist, lo, diag_value)? > 1.0 {
        return Err(NetgenError::InvalidParams(format!(
            "feasibility index already above one at scale {lo}"
        )));
    }
    let mut hi = 1.0;
    let mut rho_hi = rho_at(adj, dist, hi, diag_value)?;
    while rho_hi <= 1.0 {
        if hi >= MAX_SCALE {
            return Err(NetgenError::Uncalibratable {
                max_rho: rho_hi,
                max_scale: hi,
            });
        }
        lo = hi;
        hi *= 2.0;
        rho_hi = rho_at(adj, dist, hi, diag_value)?;
    }
    let mut best = (hi, rho_hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let rho = rho_at(adj, dist, mid, diag_value)?;
        if (rho - 1.0).abs() < (best.1 - 1.0).abs() {
            best = (mid, rho);
        }
        if (rho - 1.0).abs() <= CALIBRATION_TOL || mid == lo || mid == hi {
            break;
        }
        if rho > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    log::debug!("calibrated scale {} with rho {}", best.0, best.1);
    Ok((scaled_extended(adj, best.0, diag_value)?, best.0))
}

/// Per-task centralities of the digraph with edge `j → i` iff `Ω_ij > 0`,
/// each normalised to sum `2m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    pub betweenness: Vec<f64>,
    pub pagerank: Vec<f64>,
    pub hub: Vec<f64>,
}

pub fn centralities(ext: &ExtendedDsm) -> CentralityReport {
    // edge weight src → dst is Ω[dst][src]
    let w = ext.omega().transpose();
    let total = ext.omega().rows() as f64;
    let mut report = CentralityReport {
        betweenness: betweenness(&w),
        pagerank: pagerank(&w),
        hub: hubs(&w),
    };
    normalize_to(&mut report.betweenness, total);
    normalize_to(&mut report.pagerank, total);
    normalize_to(&mut report.hub, total);
    report
}

/// Spend on each of the `2m` tasks: a coordinate counts fully toward both
/// its row task and its column task (once if they coincide).
pub fn aggregate_investment_by_task(result: &AllocationResult, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * m];
    for (&c, &s) in &result.spend {
        let (r, col) = extended_position(c, m);
        out[r] += s;
        if col != r {
            out[col] += s;
        }
    }
    out
}

/// Feedback-interval pmf of the automotive case study: weight 1/2 on six
/// steps, 1/8 on each of four, five, seven and eight.
pub fn reference_interval_pmf() -> FeedbackDistribution<f64> {
    FeedbackDistribution::new([(4, 0.125), (5, 0.125), (6, 0.5), (7, 0.125), (8, 0.125)]).expect("valid pmf")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphModel,
    pub m: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Budget as a fraction of the full-investment cost.
    pub budget_fraction: f64,
    pub cost_exponent: f64,
    pub diag_value: f64,
    pub dist: FeedbackDistribution<f64>,
}

impl ExperimentConfig {
    pub fn new(kind: ModelKind, m: usize, seed: u64) -> Self {
        Self {
            graph: GraphModel::default_for(kind, 2 * m),
            m,
            seed,
            epsilon: 0.5,
            budget_fraction: 0.1,
            cost_exponent: 1.0,
            diag_value: 1.0,
            dist: reference_interval_pmf(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: String,
    pub team: String,
    pub betweenness: f64,
    pub pagerank: f64,
    pub hub: f64,
    pub investment: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryReport {
    pub scale: f64,
    pub budget: f64,
    pub edges: usize,
    pub dsms: DsmSet<f64>,
    pub result: AllocationResult,
    pub rows: Vec<TaskRow>,
}

impl BoundaryReport {
    /// Share of total spend received by the top tenth of tasks ranked by
    /// `measure` (at least one task).
    pub fn top_decile_share(&self, measure: impl Fn(&TaskRow) -> f64) -> f64 {
        let total: f64 = self.rows.iter().map(|r| r.investment).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let mut ranked: Vec<&TaskRow> = self.rows.iter().collect();
        ranked.sort_by(|a, b| measure(b).total_cmp(&measure(a)));
        let top = (self.rows.len() / 10).max(1);
        ranked[..top].iter().map(|r| r.investment).sum::<f64>() / total
    }
}

/// Generate, calibrate to `ρ = 1`, optimise a budget, and join centralities
/// with per-task investment.
pub fn run_boundary_experiment(cfg: &ExperimentConfig) -> Result<BoundaryReport, NetgenError> {
    if cfg.m < 1 {
        return Err(NetgenError::InvalidParams("m must be at least 1".into()));
    }
    if !(cfg.budget_fraction >= 0.0) {
        return Err(NetgenError::InvalidParams("budget fraction must be nonnegative".into()));
    }
    let adj = generate_graph(cfg.graph, 2 * cfg.m, cfg.seed)?;
    let (ext, scale) = calibrate_extended_dsm(&adj, &cfg.dist, cfg.diag_value)?;
    let dsms = ext.to_dsms()?;
    let costs = CostModel::power_law(&dsms, cfg.epsilon, cfg.cost_exponent)?;
    let full: f64 = dsms.tunable_coords().iter().map(|&c| dsms.value(c)).sum();
    let budget = cfg.budget_fraction * full;
    let result = solve_budget_constrained(&dsms, &cfg.dist, &costs, budget)?;
    let cent = centralities(&ext);
    let invest = aggregate_investment_by_task(&result, cfg.m);
    let rows = (0..2 * cfg.m)
        .map(|t| TaskRow {
            task_id: task_label(t, cfg.m),
            team: if t < cfg.m { "local" } else { "system" }.into(),
            betweenness: cent.betweenness[t],
            pagerank: cent.pagerank[t],
            hub: cent.hub[t],
            investment: invest[t],
        })
        .collect();
    Ok(BoundaryReport {
        scale,
        budget,
        edges: edge_count(&adj),
        dsms,
        result,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::Diagnostics;

    #[test]
    fn extended_round_trip() {
        let d = DsmSet::from_rows(
            &[vec![0.5, 0.1], vec![0.2, 0.6]],
            &[vec![0.7, 0.0], vec![0.3, 0.8]],
            &[vec![0.4, 0.0], vec![0.0, 0.9]],
            &[vec![0.05, 0.15], vec![0.25, 0.35]],
        )
        .unwrap();
        let ext = ExtendedDsm::from_dsms(&d);
        assert_eq!(ext.omega()[(0, 2)], 0.4);
        assert_eq!(ext.omega()[(3, 1)], 0.35);
        assert_eq!(ext.to_dsms().unwrap(), d);
    }

    #[test]
    fn empty_graph_cannot_calibrate() {
        let adj = Matrix::zeros(4, 4);
        assert!(matches!(
            calibrate_extended_dsm(&adj, &reference_interval_pmf(), 1.0),
            Err(NetgenError::Uncalibratable { .. })
        ));
    }

    #[test]
    fn calibration_hits_one() {
        let adj = generate_graph(GraphModel::Ba { attach: 2 }, 12, 4).unwrap();
        let dist = reference_interval_pmf();
        let (ext, c) = calibrate_extended_dsm(&adj, &dist, 1.0).unwrap();
        let rho = spectral_radius(&generalized_wtm_of(&ext.to_dsms().unwrap(), &dist));
        assert!((rho - 1.0).abs() <= 1e-8, "{rho}");
        assert!(rho_at(&adj, &dist, 0.5 * c, 1.0).unwrap() < 1.0);
        assert!(rho_at(&adj, &dist, 2.0 * c, 1.0).unwrap() > 1.0);
        assert!(rho_at(&adj, &dist, c * (1.0 - 1e-6), 1.0).unwrap() <= 1.0 + 1e-12);
        assert!(rho_at(&adj, &dist, c * (1.0 + 1e-6), 1.0).unwrap() >= 1.0 - 1e-12);
    }

    fn result_with(spend: &[(Coord, f64)]) -> AllocationResult {
        AllocationResult {
            psi: Default::default(),
            spend: spend.iter().copied().collect(),
            total_cost: spend.iter().map(|s| s.1).sum(),
            rho_before: 1.0,
            rho_after: 1.0,
            converged: true,
            iterations: 0,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn aggregation_rule() {
        assert_eq!(aggregate_investment_by_task(&result_with(&[]), 3), vec![0.0; 6]);
        let r = result_with(&[(Coord::new(Block::L, 0, 1), 0.2)]);
        assert_eq!(aggregate_investment_by_task(&r, 3), vec![0.2, 0.2, 0.0, 0.0, 0.0, 0.0]);
        let r = result_with(&[(Coord::new(Block::SL, 2, 0), 0.5), (Coord::new(Block::LS, 1, 1), 0.1)]);
        assert_eq!(aggregate_investment_by_task(&r, 3), vec![0.5, 0.1, 0.0, 0.0, 0.1, 0.5]);
    }

    #[test]
    fn centrality_sums() {
        let adj = generate_graph(GraphModel::Er { p: 0.3 }, 10, 2).unwrap();
        let ext = scaled_extended(&adj, 0.2, 1.0).unwrap();
        let c = centralities(&ext);
        for v in [&c.betweenness, &c.pagerank, &c.hub] {
            assert!((v.iter().sum::<f64>() - 10.0).abs() < 1e-9);
            assert!(v.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn small_experiment() {
        for kind in [ModelKind::Er, ModelKind::Ws, ModelKind::Ba] {
            let rep = run_boundary_experiment(&ExperimentConfig::new(kind, 5, 11)).unwrap();
            assert!(rep.result.rho_after < 1.0);
            assert!((rep.result.rho_before - 1.0).abs() < 1e-8);
            assert!(rep.result.total_cost <= rep.budget * (1.0 + 1e-8));
            let total: f64 = rep.rows.iter().map(|r| r.investment).sum();
            assert!((total - 2.0 * rep.result.total_cost).abs() < 1e-9);
        }
        let mut cfg = ExperimentConfig::new(ModelKind::Ba, 5, 11);
        cfg.budget_fraction = 0.0;
        let rep = run_boundary_experiment(&cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.investment == 0.0));
    }
}
