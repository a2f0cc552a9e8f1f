//! PCQR⁻¹: calibrated bounds on the probability that a response lands in
//! a target interval.
//!
//! With calibration probabilities `α_i = F̂(y_i | x_i)` sorted into
//! `α_(1) < … < α_(n)`, a target `[y⁻, y⁺]` at query `x` maps to
//! `a⁻ = F̂(y⁻ | x)` and `a⁺ = F̂(y⁺ | x)`. The rank statistics are
//!
//! ```text
//! rank_lo = min { i : α_(i) ≥ a⁻ }    (n + 1 when empty)
//! rank_hi = max { i : α_(i) ≤ a⁺ }    (0 when empty)
//! p⁻ = (rank_hi − rank_lo) / (n + 1)
//! p⁺ = (rank_hi − rank_lo + 2) / (n + 1)
//! ```
//!
//! and both bounds are clamped into `[0, 1]`.

use alloc::vec::Vec;

use crate::forest::{CdfValue, ForestModel};
use crate::{Error, Result};

/// Sorted calibration probabilities `α_(1) < … < α_(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationAlphas {
    alphas: Vec<CdfValue>,
}

impl CalibrationAlphas {
    /// Sorts the values and rejects exact ties.
    pub fn from_values(mut alphas: Vec<CdfValue>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        if alphas
            .iter()
            .any(|a| !(0.0..=1.0).contains(&a.level) || a.overshoot.is_nan())
        {
            return Err(Error::Invalid {
                name: "alpha",
                reason: "level must lie in [0, 1]",
            });
        }
        alphas.sort_unstable();
        if let Some(i) = alphas.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Tie(i + 1, i + 2));
        }
        Ok(Self { alphas })
    }

    /// Builds from plain interior probability levels.
    pub fn from_levels(levels: &[f64]) -> Result<Self> {
        Self::from_values(levels.iter().map(|&p| CdfValue::interior(p)).collect())
    }

    /// Calibration size `n`.
    pub fn n(&self) -> usize {
        self.alphas.len()
    }

    /// Sorted values.
    pub fn values(&self) -> &[CdfValue] {
        &self.alphas
    }

    /// Sorted probability levels.
    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.alphas.iter().map(|a| a.level)
    }
}

/// Computes `α_i = F̂(y_i | x_i)` for every calibration pair and sorts them.
pub fn calibrate_alphas<'a, I>(model: &ForestModel, cal_set: I) -> Result<CalibrationAlphas>
where
    I: IntoIterator<Item = (&'a [f64], f64)>,
{
    let alphas = cal_set
        .into_iter()
        .map(|(x, y)| model.cdf_value(x, y))
        .collect::<Result<Vec<_>>>()?;
    CalibrationAlphas::from_values(alphas)
}

/// User target `[y⁻, y⁺]`. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetInterval {
    /// `y⁻`
    pub y_minus: f64,
    /// `y⁺`
    pub y_plus: f64,
}

impl TargetInterval {
    /// Checks `y⁻ ≤ y⁺` and rejects NaN.
    pub fn new(y_minus: f64, y_plus: f64) -> Result<Self> {
        if y_minus.is_nan() || y_plus.is_nan() {
            return Err(Error::NonFinite("target interval"));
        }
        if y_minus > y_plus {
            return Err(Error::Invalid {
                name: "target interval",
                reason: "lower end exceeds upper end",
            });
        }
        Ok(Self { y_minus, y_plus })
    }

    /// The interval shifted down by `offset` (`[y⁻ − b, y⁺ − b]`).
    pub fn shifted_down(&self, offset: f64) -> Self {
        Self {
            y_minus: self.y_minus - offset,
            y_plus: self.y_plus - offset,
        }
    }

    /// Whether `y` lies in the closed interval.
    pub fn contains(&self, y: f64) -> bool {
        self.y_minus <= y && y <= self.y_plus
    }
}

/// `(p⁻, p⁺)` with the rank statistics that produced them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageBounds {
    /// Lower bound `p⁻`, clamped into `[0, 1]`.
    pub p_lower: f64,
    /// Upper bound `p⁺`, clamped into `[0, 1]`.
    pub p_upper: f64,
    /// `α⁻` rank, `n + 1` when no calibration value reaches `a⁻`.
    pub rank_lo: usize,
    /// `α⁺` rank, 0 when no calibration value is at most `a⁺`.
    pub rank_hi: usize,
    /// Calibration size.
    pub n: usize,
}

impl CoverageBounds {
    /// Bounds implied by the rank statistics.
    pub fn from_ranks(rank_lo: usize, rank_hi: usize, n: usize) -> Self {
        let denom = (n + 1) as f64;
        let diff = rank_hi as i64 - rank_lo as i64;
        Self {
            p_lower: (diff as f64 / denom).clamp(0.0, 1.0),
            p_upper: ((diff + 2) as f64 / denom).clamp(0.0, 1.0),
            rank_lo,
            rank_hi,
            n,
        }
    }

    /// Unclamped numerator of `p⁻`; `p⁺` has numerator two larger.
    pub fn lower_numerator(&self) -> i64 {
        self.rank_hi as i64 - self.rank_lo as i64
    }

    /// Whether neither bound was clamped.
    pub fn is_unclamped(&self) -> bool {
        let d = self.lower_numerator();
        d >= 0 && d + 2 <= (self.n + 1) as i64
    }
}

/// `(rank_lo, rank_hi)` for probability-space endpoints `a_lo ≤ a_hi`.
pub fn interval_rank_stats(
    alphas: &CalibrationAlphas,
    a_lo: CdfValue,
    a_hi: CdfValue,
) -> (usize, usize) {
    let v = &alphas.alphas;
    // partition_point gives the count of values below a_lo, i.e. the
    // 1-based index of the first value >= a_lo (n + 1 if none).
    let rank_lo = v.partition_point(|a| *a < a_lo) + 1;
    let rank_hi = v.partition_point(|a| *a <= a_hi);
    (rank_lo, rank_hi)
}

/// PCQR⁻¹ bounds on `P(y⁻ ≤ y ≤ y⁺ | x)`.
pub fn coverage_bounds(
    model: &ForestModel,
    alphas: &CalibrationAlphas,
    x: &[f64],
    target: &TargetInterval,
) -> Result<CoverageBounds> {
    let target = TargetInterval::new(target.y_minus, target.y_plus)?;
    let [a_lo, a_hi] = model.cdf_values(x, [target.y_minus, target.y_plus])?;
    let (rank_lo, rank_hi) = interval_rank_stats(alphas, a_lo, a_hi);
    Ok(CoverageBounds::from_ranks(rank_lo, rank_hi, alphas.n()))
}
