//! Probability-space conformalized quantile regression (PCQR) and its
//! inverse.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`forest`]: quantile regression forests with a continuous, strictly
//!   increasing conditional CDF and its exact inverse.
//! - [`conformal`]: probability-space conformity scores and the two
//!   split-conformal intervals `I⁻(x, δ)` / `I⁺(x, δ)`, plus the
//!   quantile-space CQR baseline.
//! - [`inverse`]: calibrated lower/upper bounds `(p⁻, p⁺)` on the
//!   probability that a response falls in a target interval.
//! - [`sim`]: two episodic MDP simulators (river-network invasive species
//!   management and a stochastic skirmish).
//! - [`monitor`]: per-timestep reward-to-go models and an alarm monitor.
//! - [`eval`]: partitioning, target intervals, ECE, reliability tables and
//!   the full calibration experiment.
//!
//! File formats, report writing and the command-line tool live in the
//! companion `pcqr` crate.
#![no_std]
#![deny(missing_docs)]

extern crate alloc;

mod error;
mod math;

pub mod conformal;
pub mod eval;
pub mod forest;
pub mod inverse;
pub mod monitor;
pub mod sim;

pub use error::{Error, Result};
pub use math::{mean_std, order_index, Rounding};
