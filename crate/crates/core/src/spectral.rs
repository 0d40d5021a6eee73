//! Feasibility index `ρ(M)`, Perron vectors, and the gradient of `log ρ`
//! with respect to log-dependencies `Ξ = log Ψ`.

use nalgebra::DMatrix;

use crate::error::SpectralError;
use crate::matrix::Matrix;
use crate::model::{
    assemble_transitions, build_wtms, generalized_wtm, Allocation, Block, Coord, DsmSet,
    FeedbackDistribution, TransitionPair,
};
use crate::scalar::Scalar;

/// Logarithms are taken of `max(ρ, RHO_FLOOR)`.
pub const RHO_FLOOR: f64 = 1e-12;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;
const RESIDUAL_TOL: f64 = 1e-9;

/// Spectral radius with nonnegative left/right eigenvectors, `uᵀv = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerronPair<T> {
    pub rho: T,
    pub u: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> PerronPair<T> {
    /// `(‖Mᵀu − ρu‖∞, ‖Mv − ρv‖∞)`
    pub fn residuals(&self, mat: &Matrix<T>) -> (T, T) {
        let ru = inf_residual(&mat.tmatvec(&self.u), &self.u, self.rho);
        let rv = inf_residual(&mat.matvec(&self.v), &self.v, self.rho);
        (ru, rv)
    }
}

fn inf_residual<T: Scalar>(mx: &[T], x: &[T], rho: T) -> T {
    mx.iter()
        .zip(x)
        .fold(T::zero(), |acc, (&a, &b)| acc.max((a - rho * b).abs()))
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn max_entry<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc.max(v))
}

/// Largest eigenvalue modulus of a nonnegative matrix.
///
/// Uses the two-sided power iteration when it converges and the dense
/// Schur decomposition otherwise (nilpotent and defective cases).
pub fn spectral_radius<T: Scalar>(mat: &Matrix<T>) -> T {
    match power_pair(mat, None) {
        Some(pair) => pair.rho,
        None => T::lit(dense_spectral_radius(&mat.to_f64()).unwrap_or_else(|| growth_rate(mat))),
    }
}

/// Perron root and vectors, warm-started from `warm` when given.
pub fn perron_pair<T: Scalar>(mat: &Matrix<T>) -> Result<PerronPair<T>, SpectralError> {
    perron_pair_warm(mat, None)
}

pub fn perron_pair_warm<T: Scalar>(
    mat: &Matrix<T>,
    warm: Option<&PerronPair<T>>,
) -> Result<PerronPair<T>, SpectralError> {
    if let Some(pair) = power_pair(mat, warm) {
        return Ok(pair);
    }
    log::debug!("power iteration stalled on {}x{} matrix, using dense fallback", mat.rows(), mat.cols());
    let pair = dense_perron(&mat.to_f64())?;
    let pair = PerronPair {
        rho: T::lit(pair.rho),
        u: pair.u.into_iter().map(T::lit).collect(),
        v: pair.v.into_iter().map(T::lit).collect(),
    };
    if accept(mat, &pair) {
        Ok(pair)
    } else {
        Err(SpectralError::DegenerateSpectrum(
            "dense Perron vectors fail the residual check".into(),
        ))
    }
}

fn accept<T: Scalar>(mat: &Matrix<T>, pair: &PerronPair<T>) -> bool {
    let (ru, rv) = pair.residuals(mat);
    let bound = T::tol_floor(RESIDUAL_TOL) * pair.rho.max(T::one());
    let uv = dot(&pair.u, &pair.v);
    pair.rho > T::lit(RHO_FLOOR)
        && ru <= bound
        && rv <= bound
        && (uv - T::one()).abs() <= T::tol_floor(1e-12)
}

/// Normalises `u`, `v` to `uᵀv = 1` and computes the two-sided Rayleigh quotient.
fn finish_pair<T: Scalar>(mat: &Matrix<T>, mut u: Vec<T>, mut v: Vec<T>) -> Option<PerronPair<T>> {
    let uv = dot(&u, &v);
    let scale = max_entry(&u) * max_entry(&v);
    if !(uv > scale * T::tol_floor(1e-14)) {
        // left and right vectors orthogonal: defective Perron root
        return None;
    }
    let rho = dot(&u, &mat.matvec(&v)) / uv;
    let s = uv.sqrt();
    u.iter_mut().for_each(|x| *x = *x / s);
    v.iter_mut().for_each(|x| *x = *x / s);
    Some(PerronPair { rho, u, v })
}

fn power_pair<T: Scalar>(mat: &Matrix<T>, warm: Option<&PerronPair<T>>) -> Option<PerronPair<T>> {
    assert!(mat.is_square());
    let v = power_iterate(mat, false, warm.map(|w| w.v.as_slice()))?;
    let u = power_iterate(mat, true, warm.map(|w| w.u.as_slice()))?;
    let pair = finish_pair(mat, u, v)?;
    accept(mat, &pair).then_some(pair)
}

/// Plain power iteration, switching to `M + ρ̂I` once a quarter of the
/// iteration budget is spent (breaks the oscillation of imprimitive matrices).
fn power_iterate<T: Scalar>(mat: &Matrix<T>, transpose: bool, init: Option<&[T]>) -> Option<Vec<T>> {
    let n = mat.rows();
    let tol = T::tol_floor(POWER_TOL);
    let mut x: Vec<T> = match init {
        Some(w) if w.len() == n && max_entry(w) > T::zero() => {
            // keep the warm start strictly positive so no component is lost
            let top = max_entry(w);
            w.iter().map(|&a| (a / top).max(T::lit(1e-3))).collect()
        }
        _ => vec![T::one(); n],
    };
    let mut shift = T::zero();
    for it in 0..POWER_MAX_ITER {
        let mut y = if transpose { mat.tmatvec(&x) } else { mat.matvec(&x) };
        if shift > T::zero() {
            y.iter_mut().zip(&x).for_each(|(a, &b)| *a = *a + shift * b);
        }
        let top = max_entry(&y);
        if !(top > T::zero()) || !top.is_finite() {
            return None;
        }
        let mut diff = T::zero();
        for (a, b) in y.iter_mut().zip(&x) {
            *a = *a / top;
            diff = diff.max((*a - *b).abs());
        }
        x = y;
        if diff <= tol {
            return Some(x);
        }
        if it == POWER_MAX_ITER / 4 {
            shift = top;
        }
    }
    None
}

/// `‖M^k 1‖∞^(1/k)` estimate, used only if every other route fails.
fn growth_rate<T: Scalar>(mat: &Matrix<T>) -> f64 {
    let n = mat.rows();
    let mut x = vec![T::one(); n];
    let mut log_sum = 0.0;
    let k = 2000;
    for _ in 0..k {
        x = mat.matvec(&x);
        let top = max_entry(&x);
        if !(top > T::zero()) {
            return 0.0;
        }
        log_sum += top.to_f64_lossy().ln();
        x.iter_mut().for_each(|a| *a = *a / top);
    }
    (log_sum / k as f64).exp()
}

/// All eigenvalues via the real Schur form; `None` if QR fails to converge.
pub fn dense_spectral_radius(mat: &Matrix<f64>) -> Option<f64> {
    let n = mat.rows();
    if n == 0 {
        return Some(0.0);
    }
    let dm = DMatrix::from_row_slice(n, n, mat.as_slice());
    let schur = dm.try_schur(f64::EPSILON, 100_000)?;
    let eig = schur.complex_eigenvalues();
    Some(eig.iter().fold(0.0f64, |acc, z| acc.max(z.norm())))
}

/// Schur eigenvalue followed by shifted inverse iteration for both vectors.
fn dense_perron(mat: &Matrix<f64>) -> Result<PerronPair<f64>, SpectralError> {
    let rho = dense_spectral_radius(mat)
        .ok_or_else(|| SpectralError::DegenerateSpectrum("Schur iteration did not converge".into()))?;
    if rho <= RHO_FLOOR {
        return Err(SpectralError::DegenerateSpectrum(format!("spectral radius {rho:e} is zero")));
    }
    let v = inverse_iteration(mat, rho)?;
    let u = inverse_iteration(&mat.transpose(), rho)?;
    finish_pair(mat, u, v)
        .ok_or_else(|| SpectralError::DegenerateSpectrum("left and right Perron vectors are orthogonal".into()))
}

fn inverse_iteration(mat: &Matrix<f64>, rho: f64) -> Result<Vec<f64>, SpectralError> {
    let n = mat.rows();
    let sigma = rho * (1.0 + 1e-10) + 1e-300;
    let mut shifted = DMatrix::from_row_slice(n, n, mat.as_slice()).scale(-1.0);
    for i in 0..n {
        shifted[(i, i)] += sigma;
    }
    let lu = shifted.lu();
    let mut x = nalgebra::DVector::from_element(n, 1.0);
    for _ in 0..20 {
        x = lu
            .solve(&x)
            .ok_or_else(|| SpectralError::DegenerateSpectrum("singular shifted system".into()))?;
        let top = x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if !(top > 0.0) || !top.is_finite() {
            return Err(SpectralError::DegenerateSpectrum("inverse iteration diverged".into()));
        }
        x /= top;
    }
    let sign = if x.sum() < 0.0 { -1.0 } else { 1.0 };
    Ok(x.iter().map(|&a| (sign * a).max(0.0)).collect())
}

/// `log ρ(M)` as a function of the tunable dependencies of a fixed project.
#[derive(Clone, Debug)]
pub struct LogRhoModel<T> {
    dsms: DsmSet<T>,
    dist: FeedbackDistribution<T>,
    coords: Vec<Coord>,
}

/// One evaluation of `log ρ` and its gradient in `Ξ`.
#[derive(Clone, Debug)]
pub struct RhoEval<T> {
    pub rho: T,
    pub log_rho: T,
    pub grad: Vec<T>,
    pub pair: Option<PerronPair<T>>,
    /// Gradient came from finite differences after a degenerate spectrum.
    pub finite_difference: bool,
}

impl<T: Scalar> LogRhoModel<T> {
    /// `coords` must be tunable in `dsms`.
    pub fn new(dsms: DsmSet<T>, dist: FeedbackDistribution<T>, coords: Vec<Coord>) -> Self {
        debug_assert!(coords.iter().all(|&c| dsms.is_tunable(c)));
        Self { dsms, dist, coords }
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn dsms(&self) -> &DsmSet<T> {
        &self.dsms
    }

    pub fn dist(&self) -> &FeedbackDistribution<T> {
        &self.dist
    }

    pub fn transitions(&self, psi: &[T]) -> TransitionPair<T> {
        assemble_transitions(&build_wtms(&self.dsms.with_values(&self.coords, psi)))
    }

    pub fn matrix(&self, psi: &[T]) -> Matrix<T> {
        generalized_wtm(&self.transitions(psi), &self.dist)
    }

    pub fn rho(&self, psi: &[T]) -> T {
        spectral_radius(&self.matrix(psi))
    }

    /// `∂ log ρ / ∂Ξ_k = Ψ_k · uᵀ (∂M/∂Ψ_k) v / ρ` with `uᵀv = 1`.
    pub fn evaluate(&self, psi: &[T], warm: Option<&PerronPair<T>>) -> Result<RhoEval<T>, SpectralError> {
        let pair_t = self.transitions(psi);
        let mat = generalized_wtm(&pair_t, &self.dist);
        let pair = perron_pair_warm(&mat, warm)?;
        let grad = self.gradient_from_pair(&pair_t, &pair, psi);
        Ok(RhoEval {
            rho: pair.rho,
            log_rho: pair.rho.max(T::lit(RHO_FLOOR)).ln(),
            grad,
            pair: Some(pair),
            finite_difference: false,
        })
    }

    /// Analytic gradient, or central differences (step `1e-6` in `Ξ`) when
    /// the Perron pair is unavailable.
    pub fn evaluate_or_fd(&self, psi: &[T], warm: Option<&PerronPair<T>>) -> RhoEval<T> {
        match self.evaluate(psi, warm) {
            Ok(e) => e,
            Err(err) => {
                log::debug!("{err}; falling back to finite differences");
                let rho = self.rho(psi);
                RhoEval {
                    rho,
                    log_rho: rho.max(T::lit(RHO_FLOOR)).ln(),
                    grad: self.fd_gradient(psi, T::lit(1e-6)),
                    pair: None,
                    finite_difference: true,
                }
            }
        }
    }

    pub fn fd_gradient(&self, psi: &[T], step: T) -> Vec<T> {
        let floor = T::lit(RHO_FLOOR);
        let mut work = psi.to_vec();
        (0..psi.len())
            .map(|k| {
                work[k] = psi[k] * step.exp();
                let up = self.rho(&work).max(floor).ln();
                work[k] = psi[k] * (-step).exp();
                let down = self.rho(&work).max(floor).ln();
                work[k] = psi[k];
                (up - down) / (step + step)
            })
            .collect()
    }

    fn gradient_from_pair(&self, pair_t: &TransitionPair<T>, pp: &PerronPair<T>, psi: &[T]) -> Vec<T> {
        let m = self.dsms.m();
        let h_max = self.dist.h_max();
        let (a1, a2) = (&pair_t.a1, &pair_t.a2);

        // a[s] = (A2ᵀ)^s u, s = 0..h_max-1
        let mut a = Vec::with_capacity(h_max);
        a.push(pp.u.clone());
        for s in 1..h_max {
            let next = a2.tmatvec(&a[s - 1]);
            a.push(next);
        }
        // b[t] = A2^t A1 v, t = 0..h_max-2
        let mut b: Vec<Vec<T>> = Vec::with_capacity(h_max.saturating_sub(1));
        if h_max >= 2 {
            b.push(a1.matvec(&pp.v));
            for t in 1..h_max - 1 {
                let next = a2.matvec(&b[t - 1]);
                b.push(next);
            }
        }
        let n = a1.rows();
        // w1 = Σ_h p_h a[h-1]  (A1 sensitivity: w1[r] v[c])
        let mut w1 = vec![T::zero(); n];
        for &(h, p) in self.dist.entries() {
            w1.iter_mut().zip(&a[h - 1]).for_each(|(w, &x)| *w = *w + p * x);
        }
        // c[s] = Σ_t p_{s+t+2} b[t]  (A2 sensitivity: Σ_s a[s][r] c[s][col])
        let c: Vec<Vec<T>> = (0..h_max.saturating_sub(1))
            .map(|s| {
                let mut acc = vec![T::zero(); n];
                for (t, bt) in b.iter().enumerate() {
                    let p = self.dist.prob(s + t + 2);
                    if p > T::zero() {
                        acc.iter_mut().zip(bt).for_each(|(x, &y)| *x = *x + p * y);
                    }
                }
                acc
            })
            .collect();
        let g1 = |r: usize, col: usize| w1[r] * pp.v[col];
        let g2 = |r: usize, col: usize| -> T { a.iter().zip(&c).map(|(s, cs)| s[r] * cs[col]).sum() };

        let ol = self.dsms.omega(Block::L);
        let os = self.dsms.omega(Block::S);
        let rho = pp.rho.max(T::lit(RHO_FLOOR));
        self.coords
            .iter()
            .zip(psi)
            .map(|(c, &value)| {
                let (i, j) = (c.i, c.j);
                let d_rho = match c.block {
                    Block::L => ol[(j, j)] * (g1(i, j) + g2(i, j)),
                    Block::S => os[(j, j)] * (g1(m + i, m + j) + g2(m + i, m + j)),
                    Block::LS => ol[(j, j)] * (g1(m + i, j) + g2(m + i, j)),
                    Block::SL => os[(j, j)] * (g1(i, m + j) + g2(2 * m + i, m + j)),
                };
                value * d_rho / rho
            })
            .collect()
    }
}

/// Gradient of `log ρ(M)` in `Ξ = log Ψ` for every tunable coordinate.
///
/// Coordinates absent from `psi` keep their nominal value.
pub fn grad_log_rho<T: Scalar>(
    dsms: &DsmSet<T>,
    dist: &FeedbackDistribution<T>,
    psi: &Allocation<T>,
) -> Result<Allocation<T>, SpectralError> {
    let coords = dsms.tunable_coords();
    let values: Vec<T> = coords
        .iter()
        .map(|c| psi.get(c).copied().unwrap_or_else(|| dsms.value(*c)))
        .collect();
    let model = LogRhoModel::new(dsms.clone(), dist.clone(), coords.clone());
    let eval = model.evaluate(&values, None)?;
    Ok(coords.into_iter().zip(eval.grad).collect())
}
