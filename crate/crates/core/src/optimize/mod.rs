//! Dependency investment: spend a budget to minimise the feasibility index,
//! or reach a target index at least cost.
//!
//! Both programs are convex in `Ξ = log Ψ` and are solved by a log-barrier
//! interior-point method over the box `log εΩ ≤ Ξ ≤ log Ω`.

mod barrier;
mod cost;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cost::{CostModel, CostSplit, Monomial};

use crate::error::OptimizeError;
use crate::model::{Allocation, Block, Coord, DsmSet, FeedbackDistribution};
use crate::spectral::{LogRhoModel, PerronPair, RHO_FLOOR};
use barrier::{Eval, Program};

/// Solver bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stages: usize,
    pub settled_stages: usize,
    /// Evaluations whose gradient fell back to finite differences.
    pub finite_difference_evals: usize,
    /// Largest projected violation of Lagrangian stationarity, relative to the
    /// objective gradient.
    pub kkt_residual: f64,
    pub multiplier: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationResult {
    /// Tuned value of every tunable coordinate.
    pub psi: Allocation<f64>,
    pub spend: Allocation<f64>,
    pub total_cost: f64,
    pub rho_before: f64,
    pub rho_after: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Diagnostics,
}

impl AllocationResult {
    fn at(
        dsms: &DsmSet<f64>,
        dist: &FeedbackDistribution<f64>,
        costs: &CostModel,
        psi: Allocation<f64>,
        rho_before: f64,
    ) -> Result<Self, OptimizeError> {
        let coords: Vec<Coord> = psi.keys().copied().collect();
        let values: Vec<f64> = psi.values().copied().collect();
        let rho_after = LogRhoModel::new(dsms.clone(), dist.clone(), coords).rho(&values);
        let mut spend = Allocation::new();
        let mut total = 0.0;
        for (&c, &v) in &psi {
            let s = costs.cost_of(c, v)?;
            total += s;
            spend.insert(c, s);
        }
        Ok(Self {
            psi,
            spend,
            total_cost: total,
            rho_before,
            rho_after,
            converged: true,
            iterations: 0,
            diagnostics: Diagnostics::default(),
        })
    }
}

struct Setup {
    model: LogRhoModel<f64>,
    coords: Vec<Coord>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Exact `Ω` and `εΩ`; `hi`/`lo` are their logarithms.
    nominal: Vec<f64>,
    floor: Vec<f64>,
    rho_before: f64,
}

fn setup(dsms: &DsmSet<f64>, dist: &FeedbackDistribution<f64>, costs: &CostModel) -> Result<Setup, OptimizeError> {
    let coords = dsms.tunable_coords();
    let cost_coords: Vec<Coord> = costs.coords().collect();
    if cost_coords != coords {
        return Err(OptimizeError::InvalidArgument(
            "cost model was built for a different project".into(),
        ));
    }
    let nominal: Vec<f64> = coords.iter().map(|&c| dsms.value(c)).collect();
    let floor: Vec<f64> = nominal.iter().map(|v| costs.epsilon() * v).collect();
    let hi: Vec<f64> = nominal.iter().map(|v| v.ln()).collect();
    let lo: Vec<f64> = floor.iter().map(|v| v.ln()).collect();
    let model = LogRhoModel::new(dsms.clone(), dist.clone(), coords.clone());
    let rho_before = model.rho(&nominal);
    Ok(Setup {
        model,
        coords,
        lo,
        hi,
        nominal,
        floor,
        rho_before,
    })
}

fn exp_all(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.exp()).collect()
}

fn to_allocation(st: &Setup, x: &[f64]) -> Allocation<f64> {
    st.coords
        .iter()
        .enumerate()
        .map(|(k, &c)| (c, x[k].exp().clamp(st.floor[k], st.nominal[k])))
        .collect()
}

fn corner(coords: &[Coord], values: &[f64]) -> Allocation<f64> {
    coords.iter().copied().zip(values.iter().copied()).collect()
}

/// `log ρ` with a warm-started Perron pair.
struct RhoOracle<'a> {
    model: &'a LogRhoModel<f64>,
    warm: Option<PerronPair<f64>>,
    fd_evals: usize,
}

impl RhoOracle<'_> {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        let e = self.model.evaluate_or_fd(&exp_all(x), self.warm.as_ref());
        if e.finite_difference {
            self.fd_evals += 1;
        }
        if e.pair.is_some() {
            self.warm = e.pair;
        }
        (e.log_rho, e.grad)
    }
}

/// `ln C⁺` in `Ξ`.
struct LogCost {
    value: f64,
    grad: Vec<f64>,
    /// Diagonal of the Hessian without its negative rank-one part.
    diag: Vec<f64>,
}

fn log_c_plus(costs: &CostModel, coords: &[Coord], x: &[f64], c_minus: f64) -> LogCost {
    let mut spend = 0.0;
    let mut slopes = Vec::with_capacity(x.len());
    let mut curvs = Vec::with_capacity(x.len());
    for (&c, &xi) in coords.iter().zip(x) {
        let (s, d, dd) = costs.cost_derivatives_log(c, xi);
        spend += s;
        slopes.push(d);
        curvs.push(dd);
    }
    let c_plus = c_minus + spend;
    LogCost {
        value: c_plus.ln(),
        grad: slopes.into_iter().map(|d| d / c_plus).collect(),
        diag: curvs.into_iter().map(|d| d / c_plus).collect(),
    }
}

fn spend_only(costs: &CostModel, coords: &[Coord], x: &[f64]) -> f64 {
    coords.iter().zip(x).map(|(&c, &xi)| costs.cost_and_slope_log(c, xi).0).sum()
}

struct BudgetProgram<'a> {
    rho: RhoOracle<'a>,
    costs: &'a CostModel,
    coords: &'a [Coord],
    c_minus: f64,
    log_cap: f64,
}

// The gradient of `log ρ` in `Ξ` doubles as its diagonal curvature hint,
// as for a log-sum-exp of linear forms with 0/1 exponents.
impl Program for BudgetProgram<'_> {
    fn eval(&mut self, x: &[f64]) -> Option<Eval> {
        let (f, grad_f) = self.rho.eval(x);
        let lc = log_c_plus(self.costs, self.coords, x, self.c_minus);
        Some(Eval {
            f,
            diag_f: Some(grad_f.clone()),
            grad_f,
            g: lc.value - self.log_cap,
            grad_g: lc.grad,
            diag_g: Some(lc.diag),
        })
    }

    fn constraint(&mut self, x: &[f64]) -> Option<f64> {
        Some((self.c_minus + spend_only(self.costs, self.coords, x)).ln() - self.log_cap)
    }
}

struct PerformanceProgram<'a> {
    rho: RhoOracle<'a>,
    costs: &'a CostModel,
    coords: &'a [Coord],
    c_minus: f64,
    log_target: f64,
}

impl Program for PerformanceProgram<'_> {
    fn eval(&mut self, x: &[f64]) -> Option<Eval> {
        let (lr, grad_g) = self.rho.eval(x);
        let lc = log_c_plus(self.costs, self.coords, x, self.c_minus);
        Some(Eval {
            f: lc.value,
            grad_f: lc.grad,
            diag_f: Some(lc.diag),
            g: lr - self.log_target,
            diag_g: Some(grad_g.clone()),
            grad_g,
        })
    }
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

/// Largest `s ∈ [0, 1]` with `ok(s)`, assuming `ok(0)` and monotone failure.
fn bisect_last_ok(mut ok: impl FnMut(f64) -> bool) -> f64 {
    if ok(1.0) {
        return 1.0;
    }
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if ok(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

/// Largest projected step along the Lagrangian gradient `∇f + λ∇g`,
/// normalised by `‖∇f‖∞`, so a coordinate pressing on a nearby bound counts
/// only its distance to it.
fn projected_residual(x: &[f64], lo: &[f64], hi: &[f64], grad_f: &[f64], grad_g: &[f64], lambda: f64) -> f64 {
    let scale = grad_f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    (0..x.len()).fold(0.0f64, |worst, k| {
        let r = (grad_f[k] + lambda * grad_g[k]) / scale;
        worst.max(((x[k] - r).clamp(lo[k], hi[k]) - x[k]).abs())
    })
}

/// First-order optimality check: returns the projected residual at the
/// multiplier `λ ≥ 0` that minimises it, and that `λ`.
fn kkt(x: &[f64], lo: &[f64], hi: &[f64], grad_f: &[f64], grad_g: &[f64]) -> (f64, f64) {
    let at = |lambda: f64| projected_residual(x, lo, hi, grad_f, grad_g, lambda);
    // least-squares fit on the coordinates away from the bounds as a first guess
    let tol = 1e-4;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..x.len() {
        let width = hi[k] - lo[k];
        if x[k] - lo[k] > tol * width && hi[k] - x[k] > tol * width {
            num += grad_f[k] * grad_g[k];
            den += grad_g[k] * grad_g[k];
        }
    }
    let guess = if den > 0.0 { (-num / den).max(0.0) } else { 0.0 };
    let mut best = (at(0.0), 0.0);
    let top = 1e3 * guess.max(1.0);
    // residual is quasi-convex in λ: coarse log grid, then golden section
    let grid: Vec<f64> = (0..=80).map(|i| top * 10f64.powf(-12.0 * (1.0 - i as f64 / 80.0))).collect();
    for &l in grid.iter().chain([guess].iter()) {
        let r = at(l);
        if r < best.0 {
            best = (r, l);
        }
    }
    let (mut a, mut b) = (best.1 / 10f64.powf(0.15), (best.1 * 10f64.powf(0.15)).max(1e-300));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if at(c) <= at(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mid = 0.5 * (a + b);
    let r = at(mid);
    if r < best.0 {
        best = (r, mid);
    }
    best
}

const KKT_TOL: f64 = 1e-3;
/// Relative gap within which the fully invested index counts as meeting a target.
const TARGET_SLACK: f64 = 1e-12;

/// Minimise `ρ(M)` subject to spending at most `budget`.
pub fn solve_budget_constrained(
    dsms: &DsmSet<f64>,
    dist: &FeedbackDistribution<f64>,
    costs: &CostModel,
    budget: f64,
) -> Result<AllocationResult, OptimizeError> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(OptimizeError::InvalidArgument(format!("budget must be finite and >= 0, got {budget}")));
    }
    let st = setup(dsms, dist, costs)?;
    if budget == 0.0 || st.coords.is_empty() {
        return AllocationResult::at(dsms, dist, costs, corner(&st.coords, &st.nominal), st.rho_before);
    }
    if budget >= costs.total_full_cost() {
        return AllocationResult::at(dsms, dist, costs, corner(&st.coords, &st.floor), st.rho_before);
    }
    let c_minus = costs.c_minus();
    let spend_at = |x: &[f64]| spend_only(costs, &st.coords, x);
    let centre = lerp(&st.lo, &st.hi, 0.5);
    let x0 = if spend_at(&centre) < budget {
        centre
    } else {
        // pull toward the nominal corner until strictly inside the budget
        let mut s = 0.5;
        loop {
            let x = lerp(&centre, &st.hi, 1.0 - s);
            if spend_at(&x) < budget || s < 1e-300 {
                break x;
            }
            s *= 0.5;
        }
    };
    let mut prog = BudgetProgram {
        rho: RhoOracle {
            model: &st.model,
            warm: None,
            fd_evals: 0,
        },
        costs,
        coords: &st.coords,
        c_minus,
        log_cap: (budget + c_minus).ln(),
    };
    let out = barrier::solve(&mut prog, &st.lo, &st.hi, x0);

    // spend any slack left by the barrier
    let s = bisect_last_ok(|s| spend_at(&lerp(&out.x, &st.lo, s)) <= budget);
    let x = lerp(&out.x, &st.lo, s);
    let final_eval = prog.eval(&x).expect("evaluation");
    let active = (spend_at(&x) - budget).abs() <= 1e-8 * budget.max(1.0);
    let (residual, lambda) = kkt(&x, &st.lo, &st.hi, &final_eval.grad_f, &final_eval.grad_g);
    let projected_free = projected_residual(&x, &st.lo, &st.hi, &final_eval.grad_f, &final_eval.grad_g, 0.0)
        * final_eval.grad_f.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut result = AllocationResult::at(dsms, dist, costs, to_allocation(&st, &x), st.rho_before)?;
    result.iterations = out.iterations;
    result.converged = projected_free <= 1e-6 || (active && lambda >= 0.0 && residual <= KKT_TOL);
    result.diagnostics = Diagnostics {
        stages: out.stages,
        settled_stages: out.settled_stages,
        finite_difference_evals: prog.rho.fd_evals,
        kkt_residual: residual,
        multiplier: lambda,
        note: String::new(),
    };
    if result.rho_after > result.rho_before {
        // never worse than doing nothing
        let mut fallback = AllocationResult::at(dsms, dist, costs, corner(&st.coords, &st.nominal), st.rho_before)?;
        fallback.converged = false;
        fallback.diagnostics = result.diagnostics;
        fallback.diagnostics.note = "solver point worse than nominal; returned nominal".into();
        return Ok(fallback);
    }
    Ok(result)
}

/// Minimise total investment subject to `ρ(M) ≤ target`.
pub fn solve_performance_constrained(
    dsms: &DsmSet<f64>,
    dist: &FeedbackDistribution<f64>,
    costs: &CostModel,
    target: f64,
) -> Result<AllocationResult, OptimizeError> {
    if !(target.is_finite() && target >= 0.0) {
        return Err(OptimizeError::InvalidArgument(format!("target must be finite and >= 0, got {target}")));
    }
    let st = setup(dsms, dist, costs)?;
    if target >= st.rho_before {
        return AllocationResult::at(dsms, dist, costs, corner(&st.coords, &st.nominal), st.rho_before);
    }
    let best = st.model.rho(&exp_all(&st.lo));
    if best > target * (1.0 + TARGET_SLACK) {
        return Err(OptimizeError::Infeasible { target, best });
    }
    let rho_at = |x: &[f64]| st.model.rho(&exp_all(x));
    if best >= target * (1.0 - TARGET_SLACK) {
        return AllocationResult::at(dsms, dist, costs, corner(&st.coords, &st.floor), st.rho_before);
    }
    let centre = lerp(&st.lo, &st.hi, 0.5);
    let x0 = {
        let mut s = 1.0;
        loop {
            let x = lerp(&st.lo, &centre, s);
            if rho_at(&x) < target || s < 1e-300 {
                break x;
            }
            s *= 0.5;
        }
    };
    let c_minus = costs.c_minus();
    let mut prog = PerformanceProgram {
        rho: RhoOracle {
            model: &st.model,
            warm: None,
            fd_evals: 0,
        },
        costs,
        coords: &st.coords,
        c_minus,
        log_target: target.max(RHO_FLOOR).ln(),
    };
    let out = barrier::solve(&mut prog, &st.lo, &st.hi, x0);

    // relax toward nominal until the target binds
    let s = bisect_last_ok(|s| rho_at(&lerp(&out.x, &st.hi, s)) <= target);
    let x = lerp(&out.x, &st.hi, s);
    let final_eval = prog.eval(&x).expect("evaluation");
    let rho_x = rho_at(&x);
    let active = (rho_x - target).abs() <= 1e-6 * target.max(1.0);
    let (residual, lambda) = kkt(&x, &st.lo, &st.hi, &final_eval.grad_f, &final_eval.grad_g);

    let mut result = AllocationResult::at(dsms, dist, costs, to_allocation(&st, &x), st.rho_before)?;
    result.iterations = out.iterations;
    result.converged = active && residual <= KKT_TOL;
    result.diagnostics = Diagnostics {
        stages: out.stages,
        settled_stages: out.settled_stages,
        finite_difference_evals: prog.rho.fd_evals,
        kkt_residual: residual,
        multiplier: lambda,
        note: String::new(),
    };
    Ok(result)
}

/// Optimized and (with `focus_tasks`) baseline allocations for every budget,
/// solved in parallel and returned in input order.
pub fn sweep_budget(
    dsms: &DsmSet<f64>,
    dist: &FeedbackDistribution<f64>,
    costs: &CostModel,
    budgets: &[f64],
    focus_tasks: Option<&[usize]>,
) -> Result<Vec<(f64, AllocationResult, Option<AllocationResult>)>, OptimizeError> {
    budgets
        .par_iter()
        .map(|&b| {
            let opt = solve_budget_constrained(dsms, dist, costs, b)?;
            let base = focus_tasks
                .map(|f| baseline_allocation(dsms, dist, costs, b, f))
                .transpose()?;
            Ok((b, opt, base))
        })
        .collect()
}

/// `steps` evenly spaced budgets from `from` to `to` inclusive.
pub fn budget_grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..steps).map(|k| from + (to - from) * k as f64 / (steps - 1) as f64).collect(),
    }
}

/// Coordinates the focus-task baseline spends on: `L` entries in a focus row
/// or column, `LS` entries in a focus column, `SL` entries in a focus row.
pub fn baseline_eligible(dsms: &DsmSet<f64>, focus_tasks: &[usize]) -> Vec<Coord> {
    let f = |t: usize| focus_tasks.contains(&t);
    dsms.tunable_coords()
        .into_iter()
        .filter(|c| match c.block {
            Block::L => f(c.i) || f(c.j),
            Block::LS => f(c.j),
            Block::SL => f(c.i),
            Block::S => false,
        })
        .collect()
}

/// Budget split over the eligible coordinates in proportion to nominal
/// strength, capped at full-investment cost with the surplus redistributed.
///
/// `focus_tasks` are zero-based task indices.
pub fn baseline_allocation(
    dsms: &DsmSet<f64>,
    dist: &FeedbackDistribution<f64>,
    costs: &CostModel,
    budget: f64,
    focus_tasks: &[usize],
) -> Result<AllocationResult, OptimizeError> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(OptimizeError::InvalidArgument(format!("budget must be finite and >= 0, got {budget}")));
    }
    if let Some(&t) = focus_tasks.iter().find(|&&t| t >= dsms.m()) {
        return Err(OptimizeError::InvalidArgument(format!("focus task {} outside 1..={}", t + 1, dsms.m())));
    }
    let st = setup(dsms, dist, costs)?;
    let eligible = baseline_eligible(dsms, focus_tasks);
    let spends = proportional_split(
        &eligible.iter().map(|&c| dsms.value(c)).collect::<Vec<_>>(),
        &eligible.iter().map(|&c| costs.full_cost(c)).collect::<Vec<_>>(),
        budget,
    );
    let mut psi = corner(&st.coords, &st.nominal);
    for (&c, &s) in eligible.iter().zip(&spends) {
        psi.insert(c, costs.invert(c, s)?);
    }
    AllocationResult::at(dsms, dist, costs, psi, st.rho_before)
}

/// Splits `budget` in proportion to `weights`, capping entry `k` at
/// `caps[k]` and handing the excess to the uncapped entries.
pub(crate) fn proportional_split(weights: &[f64], caps: &[f64], budget: f64) -> Vec<f64> {
    let mut spend = vec![0.0; weights.len()];
    let mut active: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > 0.0).collect();
    let mut remaining = budget;
    for _ in 0..=weights.len() {
        let w: f64 = active.iter().map(|&k| weights[k]).sum();
        if active.is_empty() || remaining <= 0.0 || w <= 0.0 {
            break;
        }
        let capped: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&k| remaining * weights[k] / w >= caps[k])
            .collect();
        if capped.is_empty() {
            for &k in &active {
                spend[k] = remaining * weights[k] / w;
            }
            break;
        }
        for &k in &capped {
            spend[k] = caps[k];
            remaining -= caps[k];
        }
        active.retain(|k| !capped.contains(k));
    }
    spend
}
