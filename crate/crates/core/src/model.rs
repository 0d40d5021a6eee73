//! Project data model: DSMs/IDMs, work transformation matrices, the switched
//! transition pair and the generalized (epoch-to-epoch) WTM.
//!
//! State ordering everywhere is `x = [L; S; H]`, so a project with `m` tasks
//! has state dimension `n = 3m`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Which of the four nominal matrices a dependency lives in.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    /// Local-team DSM.
    L,
    /// System-team DSM.
    S,
    /// Rework on system tasks caused by local work.
    LS,
    /// Rework on local tasks caused by system work.
    SL,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::L, Block::S, Block::LS, Block::SL];

    pub fn name(self) -> &'static str {
        match self {
            Block::L => "L",
            Block::S => "S",
            Block::LS => "LS",
            Block::SL => "SL",
        }
    }

    pub fn parse(s: &str) -> Option<Block> {
        Block::ALL.into_iter().find(|b| b.name() == s)
    }

    fn field(self) -> &'static str {
        match self {
            Block::L => "omega_l",
            Block::S => "omega_s",
            Block::LS => "omega_ls",
            Block::SL => "omega_sl",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single dependency entry `Ω_{block, ij}` (zero-based indices).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub block: Block,
    pub i: usize,
    pub j: usize,
}

impl Coord {
    pub fn new(block: Block, i: usize, j: usize) -> Self {
        Self { block, i, j }
    }
}

impl fmt::Display for Coord {
    // one-based, matching task numbering in reports
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.block, self.i + 1, self.j + 1)
    }
}

/// Tuned dependency values keyed by coordinate.
pub type Allocation<T> = BTreeMap<Coord, T>;

/// The nominal boundary conditions of a project.
#[derive(Clone, Debug, PartialEq)]
pub struct DsmSet<T> {
    m: usize,
    omega_l: Matrix<T>,
    omega_s: Matrix<T>,
    omega_ls: Matrix<T>,
    omega_sl: Matrix<T>,
}

impl<T: Scalar> DsmSet<T> {
    pub fn new(
        omega_l: Matrix<T>,
        omega_s: Matrix<T>,
        omega_ls: Matrix<T>,
        omega_sl: Matrix<T>,
    ) -> Result<Self, ModelError> {
        let m = omega_l.rows();
        if m == 0 {
            return Err(ModelError::invalid("m", "must be positive"));
        }
        let set = Self {
            m,
            omega_l,
            omega_s,
            omega_ls,
            omega_sl,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn from_rows(
        omega_l: &[Vec<T>],
        omega_s: &[Vec<T>],
        omega_ls: &[Vec<T>],
        omega_sl: &[Vec<T>],
    ) -> Result<Self, ModelError> {
        let mat = |rows: &[Vec<T>], field: &str| {
            Matrix::from_rows(rows).ok_or_else(|| ModelError::invalid(field, "rows must have equal length"))
        };
        Self::new(
            mat(omega_l, "omega_l")?,
            mat(omega_s, "omega_s")?,
            mat(omega_ls, "omega_ls")?,
            mat(omega_sl, "omega_sl")?,
        )
    }

    fn validate(&self) -> Result<(), ModelError> {
        let m = self.m;
        for block in Block::ALL {
            let mat = self.omega(block);
            if mat.rows() != m || mat.cols() != m {
                return Err(ModelError::invalid(block.field(), format!("must be {m}x{m}")));
            }
            for i in 0..m {
                for j in 0..m {
                    let x = mat[(i, j)];
                    let field = || format!("{}[{i}][{j}]", block.field());
                    if !x.is_finite() {
                        return Err(ModelError::invalid(field(), "finite"));
                    }
                    if x < T::zero() {
                        return Err(ModelError::invalid(field(), "nonnegative"));
                    }
                    let is_dsm = matches!(block, Block::L | Block::S);
                    if is_dsm && i == j && !(x > T::zero() && x <= T::one()) {
                        return Err(ModelError::invalid(
                            field(),
                            "diagonal completion coefficient must lie in (0, 1]",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// State dimension `3m`.
    pub fn n(&self) -> usize {
        3 * self.m
    }

    pub fn omega(&self, block: Block) -> &Matrix<T> {
        match block {
            Block::L => &self.omega_l,
            Block::S => &self.omega_s,
            Block::LS => &self.omega_ls,
            Block::SL => &self.omega_sl,
        }
    }

    fn omega_mut(&mut self, block: Block) -> &mut Matrix<T> {
        match block {
            Block::L => &mut self.omega_l,
            Block::S => &mut self.omega_s,
            Block::LS => &mut self.omega_ls,
            Block::SL => &mut self.omega_sl,
        }
    }

    pub fn value(&self, c: Coord) -> T {
        self.omega(c.block)[(c.i, c.j)]
    }

    /// A coordinate is tunable when its nominal value is nonzero and it is
    /// not a completion coefficient (DSM diagonal).
    pub fn is_tunable(&self, c: Coord) -> bool {
        if c.i >= self.m || c.j >= self.m {
            return false;
        }
        let structural = match c.block {
            Block::L | Block::S => c.i != c.j,
            Block::LS | Block::SL => true,
        };
        structural && self.value(c) != T::zero()
    }

    /// All tunable coordinates, ordered by block (L, S, LS, SL) then row-major.
    pub fn tunable_coords(&self) -> Vec<Coord> {
        let mut out = Vec::new();
        for block in Block::ALL {
            for i in 0..self.m {
                for j in 0..self.m {
                    let c = Coord::new(block, i, j);
                    if self.is_tunable(c) {
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    /// Replaces the listed coordinates without validation. Callers guarantee
    /// the coordinates are tunable and the values nonnegative.
    pub(crate) fn with_values(&self, coords: &[Coord], values: &[T]) -> Self {
        debug_assert_eq!(coords.len(), values.len());
        let mut out = self.clone();
        for (c, &v) in coords.iter().zip(values) {
            out.omega_mut(c.block)[(c.i, c.j)] = v;
        }
        out
    }

    /// Multiplies every tunable entry by `factor`; completion coefficients stay.
    pub fn scale_dependencies(&self, factor: T) -> Self {
        let coords = self.tunable_coords();
        let values: Vec<T> = coords.iter().map(|&c| self.value(c) * factor).collect();
        self.with_values(&coords, &values)
    }
}

/// Probability mass function of the interval between system feedbacks.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackDistribution<T> {
    // sorted by interval length, no duplicates
    pmf: Vec<(usize, T)>,
}

impl<T: Scalar> FeedbackDistribution<T> {
    pub fn new(entries: impl IntoIterator<Item = (usize, T)>) -> Result<Self, ModelError> {
        let mut pmf: Vec<(usize, T)> = entries.into_iter().collect();
        pmf.sort_by_key(|&(h, _)| h);
        for w in pmf.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::invalid(
                    "interval_pmf",
                    format!("duplicate interval {}", w[0].0),
                ));
            }
        }
        for &(h, p) in &pmf {
            if h < 1 {
                return Err(ModelError::invalid("interval_pmf", "intervals must be >= 1"));
            }
            if !p.is_finite() || p < T::zero() {
                return Err(ModelError::invalid(
                    format!("interval_pmf[{h}]"),
                    "probability must be finite and nonnegative",
                ));
            }
        }
        let total: T = pmf.iter().map(|&(_, p)| p).sum();
        if (total - T::one()).abs() > T::tol_floor(1e-12) {
            return Err(ModelError::invalid("interval_pmf", "must sum to 1"));
        }
        pmf.retain(|&(_, p)| p > T::zero());
        if pmf.is_empty() {
            return Err(ModelError::invalid("interval_pmf", "empty support"));
        }
        Ok(Self { pmf })
    }

    /// Point mass at `h`.
    pub fn deterministic(h: usize) -> Result<Self, ModelError> {
        Self::new([(h, T::one())])
    }

    pub fn h_min(&self) -> usize {
        self.pmf[0].0
    }

    pub fn h_max(&self) -> usize {
        self.pmf[self.pmf.len() - 1].0
    }

    pub fn prob(&self, h: usize) -> T {
        self.pmf
            .binary_search_by_key(&h, |&(k, _)| k)
            .map_or(T::zero(), |idx| self.pmf[idx].1)
    }

    /// `(h, p_h)` pairs with positive probability, increasing in `h`.
    pub fn entries(&self) -> &[(usize, T)] {
        &self.pmf
    }

    pub fn mean_interval(&self) -> T {
        self.pmf
            .iter()
            .map(|&(h, p)| T::from_usize(h).unwrap() * p)
            .sum()
    }
}

/// Work transformation matrices derived from a [`DsmSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct WtmSet<T> {
    w_l: Matrix<T>,
    w_s: Matrix<T>,
    w_ls: Matrix<T>,
    w_sl: Matrix<T>,
}

impl<T: Scalar> WtmSet<T> {
    /// `W_SH` is tied to `W_SL`, so only four matrices are taken.
    pub fn new(
        w_l: Matrix<T>,
        w_s: Matrix<T>,
        w_ls: Matrix<T>,
        w_sl: Matrix<T>,
    ) -> Result<Self, ModelError> {
        let m = w_l.rows();
        for (name, w) in [("w_l", &w_l), ("w_s", &w_s), ("w_ls", &w_ls), ("w_sl", &w_sl)] {
            if w.rows() != m || w.cols() != m {
                return Err(ModelError::invalid(name, format!("must be {m}x{m}")));
            }
            if !w.is_nonnegative() {
                return Err(ModelError::invalid(name, "nonnegative"));
            }
        }
        Ok(Self { w_l, w_s, w_ls, w_sl })
    }

    pub fn m(&self) -> usize {
        self.w_l.rows()
    }
    pub fn w_l(&self) -> &Matrix<T> {
        &self.w_l
    }
    pub fn w_s(&self) -> &Matrix<T> {
        &self.w_s
    }
    pub fn w_ls(&self) -> &Matrix<T> {
        &self.w_ls
    }
    pub fn w_sl(&self) -> &Matrix<T> {
        &self.w_sl
    }
    pub fn w_sh(&self) -> &Matrix<T> {
        &self.w_sl
    }
}

/// `A1` applies at feedback steps, `A2` at every other step.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPair<T> {
    pub a1: Matrix<T>,
    pub a2: Matrix<T>,
}

impl<T: Scalar> TransitionPair<T> {
    pub fn n(&self) -> usize {
        self.a1.rows()
    }
}

/// Unfinished local work `l`, unfinished system work `s`, and finished but
/// not yet transferred system work `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectState<T> {
    pub l: Vec<T>,
    pub s: Vec<T>,
    pub h: Vec<T>,
}

impl<T: Scalar> ProjectState<T> {
    pub fn new(l: Vec<T>, s: Vec<T>, h: Vec<T>) -> Result<Self, ModelError> {
        let m = l.len();
        if s.len() != m || h.len() != m {
            return Err(ModelError::invalid("initial_state", "L, S, H must have equal length"));
        }
        for (name, v) in [("L", &l), ("S", &s), ("H", &h)] {
            if let Some(k) = v.iter().position(|x| !x.is_finite() || *x < T::zero()) {
                return Err(ModelError::invalid(format!("initial_state.{name}[{k}]"), "nonnegative"));
            }
        }
        Ok(Self { l, s, h })
    }

    /// One unit of unfinished work per task in both teams, nothing pending.
    pub fn unit(m: usize) -> Self {
        Self {
            l: vec![T::one(); m],
            s: vec![T::one(); m],
            h: vec![T::zero(); m],
        }
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn to_vector(&self) -> Vec<T> {
        let mut x = Vec::with_capacity(3 * self.m());
        x.extend_from_slice(&self.l);
        x.extend_from_slice(&self.s);
        x.extend_from_slice(&self.h);
        x
    }

    /// Splits a length-`3m` state vector.
    pub fn from_vector(x: &[T]) -> Self {
        assert_eq!(x.len() % 3, 0);
        let m = x.len() / 3;
        Self {
            l: x[..m].to_vec(),
            s: x[m..2 * m].to_vec(),
            h: x[2 * m..].to_vec(),
        }
    }

    /// Total unfinished work `ΣL + ΣS`; `H` is finished work and excluded.
    pub fn unfinished(&self) -> T {
        self.l.iter().chain(&self.s).copied().sum()
    }
}

/// Work transformation matrices from DSMs and IDMs.
///
/// Off-diagonal entries are scaled by the completion coefficient of the
/// source task (column); DSM diagonals become `1 - Ω_ii`.
pub fn build_wtms<T: Scalar>(dsms: &DsmSet<T>) -> WtmSet<T> {
    let m = dsms.m();
    let ol = dsms.omega(Block::L);
    let os = dsms.omega(Block::S);
    let within = |om: &Matrix<T>| {
        Matrix::from_fn(m, m, |i, j| {
            if i == j {
                T::one() - om[(i, i)]
            } else {
                om[(i, j)] * om[(j, j)]
            }
        })
    };
    let w_l = within(ol);
    let w_s = within(os);
    let ols = dsms.omega(Block::LS);
    let osl = dsms.omega(Block::SL);
    let w_ls = Matrix::from_fn(m, m, |i, j| ols[(i, j)] * ol[(j, j)]);
    let w_sl = Matrix::from_fn(m, m, |i, j| osl[(i, j)] * os[(j, j)]);
    WtmSet { w_l, w_s, w_ls, w_sl }
}

/// ```text
/// A1 = [ W_L  W_SL  I ]      A2 = [ W_L   0     0 ]
///      [ W_LS W_S   0 ]           [ W_LS  W_S   0 ]
///      [ 0    0     0 ]           [ 0     W_SH  I ]
/// ```
pub fn assemble_transitions<T: Scalar>(wtms: &WtmSet<T>) -> TransitionPair<T> {
    let m = wtms.m();
    let n = 3 * m;
    let eye = Matrix::identity(m);

    let mut a1 = Matrix::zeros(n, n);
    a1.set_block(0, 0, wtms.w_l());
    a1.set_block(0, m, wtms.w_sl());
    a1.set_block(0, 2 * m, &eye);
    a1.set_block(m, 0, wtms.w_ls());
    a1.set_block(m, m, wtms.w_s());

    let mut a2 = Matrix::zeros(n, n);
    a2.set_block(0, 0, wtms.w_l());
    a2.set_block(m, 0, wtms.w_ls());
    a2.set_block(m, m, wtms.w_s());
    a2.set_block(2 * m, m, wtms.w_sh());
    a2.set_block(2 * m, 2 * m, &eye);

    TransitionPair { a1, a2 }
}

/// `A2^(h-1) · A1` for `h = 1..=h_max`, by repeated left multiplication.
pub fn epoch_products<T: Scalar>(pair: &TransitionPair<T>, h_max: usize) -> Vec<Matrix<T>> {
    let mut out = Vec::with_capacity(h_max);
    let mut p = pair.a1.clone();
    for h in 1..=h_max {
        if h > 1 {
            p = pair.a2.matmul(&p);
        }
        out.push(p.clone());
    }
    out
}

/// Expected epoch-to-epoch transition `M = Σ_h p_h · A2^(h-1) · A1`.
pub fn generalized_wtm<T: Scalar>(pair: &TransitionPair<T>, dist: &FeedbackDistribution<T>) -> Matrix<T> {
    let n = pair.n();
    let mut m = Matrix::zeros(n, n);
    let mut p = pair.a1.clone();
    let mut power = 1;
    for &(h, prob) in dist.entries() {
        while power < h {
            p = pair.a2.matmul(&p);
            power += 1;
        }
        m.add_scaled(prob, &p);
    }
    m
}

/// Convenience: DSMs straight to `M`.
pub fn generalized_wtm_of<T: Scalar>(dsms: &DsmSet<T>, dist: &FeedbackDistribution<T>) -> Matrix<T> {
    generalized_wtm(&assemble_transitions(&build_wtms(dsms)), dist)
}

/// Replaces tunable coordinates by tuned values.
///
/// Every key of `psi` must be tunable and its value must lie in
/// `[ε·Ω, Ω]` (with a relative slack of `1e-12` for rounding).
pub fn apply_allocation<T: Scalar>(
    dsms: &DsmSet<T>,
    psi: &Allocation<T>,
    epsilon: T,
) -> Result<DsmSet<T>, ModelError> {
    let slack = T::tol_floor(1e-12);
    let mut coords = Vec::with_capacity(psi.len());
    let mut values = Vec::with_capacity(psi.len());
    for (&c, &v) in psi {
        if !dsms.is_tunable(c) {
            return Err(ModelError::NotTunable(c));
        }
        let hi = dsms.value(c);
        let lo = epsilon * hi;
        if !v.is_finite() || v < lo * (T::one() - slack) || v > hi * (T::one() + slack) {
            return Err(ModelError::OutOfBox {
                coord: c,
                value: v.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            });
        }
        coords.push(c);
        values.push(v.max(lo).min(hi));
    }
    Ok(dsms.with_values(&coords, &values))
}
