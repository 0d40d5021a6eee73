//! Log-barrier interior-point method over a box with one convex constraint,
//! using L-BFGS for each barrier subproblem.

use std::collections::VecDeque;

pub(crate) const MU_START: f64 = 1.0;
pub(crate) const MU_END: f64 = 1e-8;
const MU_SHRINK: f64 = 10.0;
const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const FTOL: f64 = 1e-10;
const MAX_INNER: usize = 4000;
const MEMORY: usize = 10;
const TO_BOUNDARY: f64 = 0.99;

/// Objective `f` and constraint `g ≤ 0` with gradients, plus optional
/// nonnegative estimates of their Hessian diagonals.
#[derive(Default)]
pub(crate) struct Eval {
    pub f: f64,
    pub grad_f: Vec<f64>,
    pub g: f64,
    pub grad_g: Vec<f64>,
    pub diag_f: Option<Vec<f64>>,
    pub diag_g: Option<Vec<f64>>,
}

pub(crate) trait Program {
    /// `None` when the point cannot be evaluated.
    fn eval(&mut self, x: &[f64]) -> Option<Eval>;

    /// Constraint value alone, when cheaper than a full evaluation.
    fn constraint(&mut self, _x: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub stages: usize,
    /// Stages that ended on the tolerance rather than the iteration cap or a
    /// failed line search.
    pub settled_stages: usize,
}

struct Barrier<'a> {
    lo: &'a [f64],
    hi: &'a [f64],
    mu: f64,
}

impl Barrier<'_> {
    fn inside(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo).zip(self.hi).all(|((&v, &l), &h)| v > l && v < h)
    }

    fn value(&self, x: &[f64], e: &Eval) -> f64 {
        if e.g >= 0.0 || !self.inside(x) || !e.f.is_finite() {
            return f64::INFINITY;
        }
        let mut b = (-e.g).ln();
        for ((&v, &l), &h) in x.iter().zip(self.lo).zip(self.hi) {
            b += (h - v).ln() + (v - l).ln();
        }
        e.f - self.mu * b
    }

    /// Seed inverse Hessian `(D + a·aᵀ)⁻¹`: `D` holds the box-barrier
    /// curvature plus the diagonal hints (or `curvature` where `f` gives
    /// none), `a·aᵀ` is the Gauss-Newton part of the constraint term.
    fn seed(&self, x: &[f64], e: &Eval, curvature: f64) -> Seed {
        let inv_g = 1.0 / (-e.g);
        let dinv: Vec<f64> = (0..x.len())
            .map(|k| {
                let up = 1.0 / (self.hi[k] - x[k]);
                let down = 1.0 / (x[k] - self.lo[k]);
                let hf = e.diag_f.as_ref().map_or(curvature, |d| d[k].max(0.0));
                let hg = e.diag_g.as_ref().map_or(0.0, |d| d[k].max(0.0));
                1.0 / (self.mu * (up * up + down * down + hg * inv_g) + hf)
            })
            .collect();
        let scale = self.mu.sqrt() * inv_g;
        let a: Vec<f64> = e.grad_g.iter().map(|g| g * scale).collect();
        let dinv_a: Vec<f64> = a.iter().zip(&dinv).map(|(x, d)| x * d).collect();
        let denom = 1.0 + dot(&a, &dinv_a);
        Seed { dinv, a, dinv_a, denom }
    }

    fn gradient(&self, x: &[f64], e: &Eval) -> Vec<f64> {
        let inv_g = 1.0 / (-e.g);
        (0..x.len())
            .map(|k| {
                e.grad_f[k]
                    + self.mu * (1.0 / (self.hi[k] - x[k]) - 1.0 / (x[k] - self.lo[k]) + e.grad_g[k] * inv_g)
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Seed {
    dinv: Vec<f64>,
    a: Vec<f64>,
    dinv_a: Vec<f64>,
    denom: f64,
}

impl Seed {
    /// Sherman-Morrison.
    fn apply(&self, q: &mut [f64]) {
        q.iter_mut().zip(&self.dinv).for_each(|(v, d)| *v *= d);
        let t = dot(&self.a, q) / self.denom;
        q.iter_mut().zip(&self.dinv_a).for_each(|(v, w)| *v -= t * w);
    }
}

/// L-BFGS two-loop recursion `−H·grad` seeded with `h0`.
fn lbfgs_direction(grad: &[f64], h0: &Seed, memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    h0.apply(&mut q);
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Backtracking from the largest step that keeps `0.99` of the distance to
/// the box; requires sufficient and strictly positive decrease.
fn line_search<P: Program>(
    prog: &mut P,
    bar: &Barrier,
    x: &[f64],
    dir: &[f64],
    slope: f64,
    phi: f64,
) -> Option<(Vec<f64>, Eval, f64)> {
    let mut alpha: f64 = 1.0;
    for k in 0..x.len() {
        if dir[k] > 0.0 {
            alpha = alpha.min(TO_BOUNDARY * (bar.hi[k] - x[k]) / dir[k]);
        } else if dir[k] < 0.0 {
            alpha = alpha.min(TO_BOUNDARY * (bar.lo[k] - x[k]) / dir[k]);
        }
    }
    while alpha > 1e-20 {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
        let cheap_reject = matches!(prog.constraint(&trial), Some(g) if g >= 0.0);
        if !cheap_reject && bar.inside(&trial) {
            if let Some(e) = prog.eval(&trial) {
                let val = bar.value(&trial, &e);
                if val < phi && val <= phi + ARMIJO * alpha * slope {
                    return Some((trial, e, val));
                }
            }
        }
        alpha *= BACKTRACK;
    }
    None
}

/// Minimises `f` over `lo < x < hi, g(x) < 0` starting from a strictly
/// feasible `x0`.
pub(crate) fn solve<P: Program>(prog: &mut P, lo: &[f64], hi: &[f64], x0: Vec<f64>) -> Outcome {
    let mut out = Outcome {
        x: x0,
        ..Outcome::default()
    };
    let Some(mut cur) = prog.eval(&out.x) else {
        return out;
    };
    // curvature scale of the objective, learned from accepted steps
    let mut curvature = 0.0f64;
    let mut mu = MU_START;
    while mu >= MU_END * (1.0 - 1e-9) {
        out.stages += 1;
        let bar = Barrier { lo, hi, mu };
        let mut phi = bar.value(&out.x, &cur);
        if !phi.is_finite() {
            break;
        }
        let mut grad = bar.gradient(&out.x, &cur);
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        let mut settled = false;
        for _ in 0..MAX_INNER {
            let h0 = bar.seed(&out.x, &cur, curvature);
            let mut step = None;
            // L-BFGS direction first, the plain seeded direction as a retry
            for fresh in [false, true] {
                if fresh {
                    if memory.is_empty() {
                        break;
                    }
                    memory.clear();
                }
                let mut dir = lbfgs_direction(&grad, &h0, &memory);
                let mut slope = dot(&dir, &grad);
                if slope >= 0.0 {
                    memory.clear();
                    dir = grad.iter().map(|g| -g).collect();
                    h0.apply(&mut dir);
                    slope = dot(&dir, &grad);
                }
                if -slope <= FTOL * phi.abs().max(1.0) {
                    settled = true;
                    break;
                }
                step = line_search(prog, &bar, &out.x, &dir, slope, phi);
                if step.is_some() {
                    break;
                }
            }
            if settled {
                break;
            }
            out.iterations += 1;
            let Some((trial, e, val)) = step else {
                break;
            };
            let new_grad = bar.gradient(&trial, &e);
            let s: Vec<f64> = trial.iter().zip(&out.x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            let yf: Vec<f64> = e.grad_f.iter().zip(&cur.grad_f).map(|(a, b)| a - b).collect();
            let syf = dot(&s, &yf);
            if syf > 0.0 {
                curvature = dot(&yf, &yf) / syf;
            }
            if sy > 1e-300 {
                if memory.len() == MEMORY {
                    memory.pop_front();
                }
                memory.push_back((s, y, 1.0 / sy));
            }
            out.x = trial;
            cur = e;
            phi = val;
            grad = new_grad;
        }
        if settled {
            out.settled_stages += 1;
        }
        mu /= MU_SHRINK;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min Σ (x_k − t_k)² s.t. Σ x_k − 1 ≤ 0 inside the unit box.
    struct Quadratic {
        target: Vec<f64>,
    }

    impl Program for Quadratic {
        fn eval(&mut self, x: &[f64]) -> Option<Eval> {
            Some(Eval {
                f: x.iter().zip(&self.target).map(|(a, t)| (a - t) * (a - t)).sum(),
                grad_f: x.iter().zip(&self.target).map(|(a, t)| 2.0 * (a - t)).collect(),
                g: x.iter().sum::<f64>() - 1.0,
                grad_g: vec![1.0; x.len()],
                ..Eval::default()
            })
        }
    }

    #[test]
    fn projects_onto_simplex_face() {
        let mut prog = Quadratic { target: vec![0.9, 0.9] };
        let out = solve(&mut prog, &[0.0, 0.0], &[1.0, 1.0], vec![0.25, 0.25]);
        assert!((out.x[0] - 0.5).abs() < 1e-6, "{:?}", out.x);
        assert!((out.x[1] - 0.5).abs() < 1e-6);
        assert_eq!(out.stages, 9);
    }

    #[test]
    fn interior_optimum() {
        let mut prog = Quadratic { target: vec![0.2, 0.3] };
        let out = solve(&mut prog, &[0.0, 0.0], &[1.0, 1.0], vec![0.25, 0.25]);
        assert!((out.x[0] - 0.2).abs() < 1e-6);
        assert!((out.x[1] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn bound_optimum() {
        let mut prog = Quadratic { target: vec![-1.0, 0.3] };
        let out = solve(&mut prog, &[0.0, 0.0], &[1.0, 1.0], vec![0.25, 0.25]);
        assert!(out.x[0] < 1e-6);
        assert!((out.x[1] - 0.3).abs() < 1e-6, "{out:?}");
    }
}
