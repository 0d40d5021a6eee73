//! Feasibility analysis and dependency-investment optimization for
//! product-development projects in which a system-integration team sends
//! feedback to a local development team at random intervals.
//!
//! The project is a switched linear system on unfinished work. Its
//! feasibility index is the spectral radius of the expected epoch-to-epoch
//! transition matrix. The [`optimize`] module spends a budget on weakening
//! dependencies (or meets a target index at least cost) by solving the
//! convex programs that arise in log-dependency coordinates.
//!
//! The numerical core ([`matrix`], [`model`], [`spectral`]) is generic over
//! [`Scalar`]; the aliases below fix it to `f64`, which the optimizer,
//! simulator and experiment code use.

pub mod error;
pub mod io;
pub mod matrix;
pub mod model;
pub mod netgen;
pub mod optimize;
pub mod scalar;
pub mod simulate;
pub mod spectral;

pub use error::{IoError, ModelError, NetgenError, OptimizeError, SpectralError};
pub use model::{Block, Coord};
pub use scalar::Scalar;

pub type Mat = matrix::Matrix<f64>;
pub type DsmSet = model::DsmSet<f64>;
pub type FeedbackDistribution = model::FeedbackDistribution<f64>;
pub type WtmSet = model::WtmSet<f64>;
pub type TransitionPair = model::TransitionPair<f64>;
pub type ProjectState = model::ProjectState<f64>;
pub type Allocation = model::Allocation<f64>;
pub type PerronPair = spectral::PerronPair<f64>;
