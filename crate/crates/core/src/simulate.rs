//! Sample paths of the switched dynamics, the expected epoch recursion, and
//! completion-time Monte Carlo.
//!
//! Every run draws from its own ChaCha8 stream: the generator is seeded with
//! the user seed and the stream number is the run index, so results do not
//! depend on how runs are scheduled across threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::model::{
    assemble_transitions, build_wtms, generalized_wtm_of, DsmSet, FeedbackDistribution,
    ProjectState, TransitionPair,
};
use crate::scalar::Scalar;

/// States `x(0..=horizon)` and the feedback times that fell inside the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<ProjectState<f64>>,
    pub feedback_times: Vec<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn unfinished(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(ProjectState::unfinished)
    }
}

/// Result of thresholding a trajectory.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Completion {
    At(usize),
    NotCompleted,
}

/// Generator for run `run` of an experiment seeded with `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn sample_interval<R: Rng + ?Sized>(dist: &FeedbackDistribution<f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(h, p) in dist.entries() {
        acc += p;
        if u < acc {
            return h;
        }
    }
    dist.h_max()
}

fn step(pair: &TransitionPair<f64>, feedback: bool, x: &[f64]) -> Vec<f64> {
    if feedback {
        pair.a1.matvec(x)
    } else {
        pair.a2.matvec(x)
    }
}

/// Simulates `horizon` steps with feedback at `τ_0 = 0` and i.i.d. intervals.
pub fn run_trajectory(
    dsms: &DsmSet<f64>,
    dist: &FeedbackDistribution<f64>,
    x0: &ProjectState<f64>,
    horizon: usize,
    seed: u64,
) -> Trajectory {
    let pair = assemble_transitions(&build_wtms(dsms));
    trajectory_with_rng(&pair, dist, x0, horizon, &mut run_rng(seed, 0))
}

pub fn trajectory_with_rng<R: Rng + ?Sized>(
    pair: &TransitionPair<f64>,
    dist: &FeedbackDistribution<f64>,
    x0: &ProjectState<f64>,
    horizon: usize,
    rng: &mut R,
) -> Trajectory {
    let mut x = x0.to_vector();
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.clone());
    let mut feedback_times = vec![0];
    let mut next = 0;
    for k in 0..horizon {
        let feedback = k == next;
        if feedback {
            if k > 0 {
                feedback_times.push(k);
            }
            next = k + sample_interval(dist, rng);
        }
        x = step(pair, feedback, &x);
        states.push(ProjectState::from_vector(&x));
    }
    Trajectory {
        states,
        feedback_times,
    }
}

/// `z(ℓ) = M^ℓ z0` for `ℓ = 0..=num_epochs`.
pub fn expected_epoch_states<T: Scalar>(
    dsms: &DsmSet<T>,
    dist: &FeedbackDistribution<T>,
    z0: &[T],
    num_epochs: usize,
) -> Vec<Vec<T>> {
    let mat = generalized_wtm_of(dsms, dist);
    let mut out = Vec::with_capacity(num_epochs + 1);
    out.push(z0.to_vec());
    for l in 0..num_epochs {
        let next = mat.matvec(&out[l]);
        out.push(next);
    }
    out
}

/// First step at which `ΣL + ΣS ≤ gamma`.
pub fn completion_time(traj: &Trajectory, gamma: f64) -> Completion {
    traj.unfinished()
        .position(|w| w <= gamma)
        .map_or(Completion::NotCompleted, Completion::At)
}

/// Uniform draw from the probability simplex over `support`.
pub fn sample_interval_pmf(seed: u64, support: &[usize]) -> FeedbackDistribution<f64> {
    pmf_with_rng(&mut run_rng(seed, 0), support)
}

pub fn pmf_with_rng<R: Rng + ?Sized>(rng: &mut R, support: &[usize]) -> FeedbackDistribution<f64> {
    assert!(!support.is_empty(), "empty interval support");
    let draws: Vec<f64> = support.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    FeedbackDistribution::new(support.iter().copied().zip(draws.into_iter().map(|e| e / total)))
        .expect("normalised exponential draws form a pmf")
}

/// Where each run's feedback-interval distribution comes from.
#[derive(Clone, Debug)]
pub enum IntervalSource {
    Fixed(FeedbackDistribution<f64>),
    /// A fresh pmf per run, uniform on the simplex over this support.
    Dirichlet(Vec<usize>),
}

impl IntervalSource {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> FeedbackDistribution<f64> {
        match self {
            IntervalSource::Fixed(d) => d.clone(),
            IntervalSource::Dirichlet(support) => pmf_with_rng(rng, support),
        }
    }
}

fn completion_only<R: Rng + ?Sized>(
    pair: &TransitionPair<f64>,
    dist: &FeedbackDistribution<f64>,
    x0: &ProjectState<f64>,
    gamma: f64,
    horizon: usize,
    rng: &mut R,
) -> Completion {
    let m = x0.m();
    let unfinished = |x: &[f64]| x[..2 * m].iter().sum::<f64>();
    let mut x = x0.to_vector();
    let mut next = 0;
    for k in 0..=horizon {
        if unfinished(&x) <= gamma {
            return Completion::At(k);
        }
        if k == horizon {
            break;
        }
        let feedback = k == next;
        if feedback {
            next = k + sample_interval(dist, rng);
        }
        x = step(pair, feedback, &x);
    }
    Completion::NotCompleted
}

/// Completion times of `runs` independent trajectories, in run order.
pub fn monte_carlo_completion(
    dsms: &DsmSet<f64>,
    source: &IntervalSource,
    x0: &ProjectState<f64>,
    gamma: f64,
    horizon: usize,
    runs: usize,
    seed: u64,
) -> Vec<Completion> {
    monte_carlo_completion_with(|_| Some(dsms.clone()), source, x0, gamma, horizon, runs, seed)
        .into_iter()
        .map(|c| c.expect("fixed project"))
        .collect()
}

/// Like [`monte_carlo_completion`], but the project simulated in each run is
/// chosen from that run's interval distribution (e.g. an allocation re-solved
/// for the drawn pmf). Runs for which `project_for` returns `None` yield `None`.
pub fn monte_carlo_completion_with<F>(
    project_for: F,
    source: &IntervalSource,
    x0: &ProjectState<f64>,
    gamma: f64,
    horizon: usize,
    runs: usize,
    seed: u64,
) -> Vec<Option<Completion>>
where
    F: Fn(&FeedbackDistribution<f64>) -> Option<DsmSet<f64>> + Sync,
{
    (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(seed, run as u64);
            let dist = source.draw(&mut rng);
            let dsms = project_for(&dist)?;
            let pair = assemble_transitions(&build_wtms(&dsms));
            Some(completion_only(&pair, &dist, x0, gamma, horizon, &mut rng))
        })
        .collect()
}

/// Mean of `ΣL + ΣS` at every step over `runs` trajectories.
pub fn monte_carlo_mean_unfinished(
    dsms: &DsmSet<f64>,
    dist: &FeedbackDistribution<f64>,
    x0: &ProjectState<f64>,
    horizon: usize,
    runs: usize,
    seed: u64,
) -> Vec<f64> {
    let pair = assemble_transitions(&build_wtms(dsms));
    let paths: Vec<Vec<f64>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let traj = trajectory_with_rng(&pair, dist, x0, horizon, &mut run_rng(seed, run as u64));
            traj.unfinished().collect()
        })
        .collect();
    (0..=horizon)
        .map(|k| paths.iter().map(|p| p[k]).sum::<f64>() / runs as f64)
        .collect()
}

/// Counts per completion time; `NotCompleted` sorts last.
pub fn histogram(times: &[Completion]) -> BTreeMap<Completion, usize> {
    let mut out = BTreeMap::new();
    for &t in times {
        *out.entry(t).or_insert(0) += 1;
    }
    out
}
