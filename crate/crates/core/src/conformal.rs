//! Forward PCQR: probability-space conformity scores and the calibrated
//! intervals `I⁻(x, δ)` and `I⁺(x, δ)`, plus the quantile-space CQR
//! baseline.
//!
//! The conformity score of `(x, y)` is `|1/2 − F̂(y | x)|`. A score `s`
//! defines the interval `[Q̂(1/2 − s), Q̂(1/2 + s)]`, and `y` lies in that
//! interval exactly when its own score is at most `s`. Outside the
//! conditional support the CDF saturates; there the score keeps the
//! distance past the support as a secondary key and the interval is widened
//! by the same distance, so the equivalence holds on the whole line.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::forest::{CdfValue, ConditionalCdf, ForestModel};
use crate::math::{order_index, Rounding};
use crate::{Error, Result};

/// Conformity score: `value = |1/2 − F̂(y|x)|` in `[0, 1/2]`, and for
/// `value = 1/2` the (non-negative) distance past the conditional support.
#[derive(Debug, Clone, Copy)]
pub struct Score {
    /// `|1/2 − F̂(y|x)|`.
    pub value: f64,
    /// Distance outside the support; 0 inside.
    pub overshoot: f64,
}

impl Score {
    /// A score strictly determined by its probability-space value.
    pub fn new(value: f64) -> Self {
        Self {
            value,
            overshoot: 0.0,
        }
    }

    /// Score of a CDF evaluation.
    pub fn from_cdf(c: CdfValue) -> Self {
        Self {
            value: libm::fabs(0.5 - c.level),
            overshoot: libm::fabs(c.overshoot),
        }
    }
}

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.overshoot.total_cmp(&other.overshoot))
    }
}

/// `S(x, y) = |1/2 − F̂(y | x)|`.
pub fn conformity_score(model: &ForestModel, x: &[f64], y: f64) -> Result<Score> {
    Ok(Score::from_cdf(model.cdf_value(x, y)?))
}

/// Sorted calibration conformity scores `S_(1) < … < S_(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalScores {
    scores: Vec<Score>,
}

impl ConformalScores {
    /// Sorts the scores and rejects exact ties.
    pub fn from_scores(mut scores: Vec<Score>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        if scores
            .iter()
            .any(|s| !(0.0..=0.5).contains(&s.value) || s.overshoot.is_nan() || s.overshoot < 0.0)
        {
            return Err(Error::Invalid {
                name: "score",
                reason: "value must lie in [0, 0.5] with a non-negative overshoot",
            });
        }
        scores.sort_unstable();
        if let Some(i) = scores.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Tie(i + 1, i + 2));
        }
        Ok(Self { scores })
    }

    /// Calibration size `n`.
    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// Sorted scores.
    pub fn scores(&self) -> &[Score] {
        &self.scores
    }

    /// 1-based order statistic `S_(i)`.
    pub fn order_statistic(&self, i: usize) -> Option<Score> {
        i.checked_sub(1).and_then(|k| self.scores.get(k)).copied()
    }
}

/// Scores every calibration pair with `model` and sorts them. The model
/// must not have been trained on these pairs.
pub fn calibrate<'a, I>(model: &ForestModel, cal_set: I) -> Result<ConformalScores>
where
    I: IntoIterator<Item = (&'a [f64], f64)>,
{
    let scores = cal_set
        .into_iter()
        .map(|(x, y)| conformity_score(model, x, y))
        .collect::<Result<Vec<_>>>()?;
    ConformalScores::from_scores(scores)
}

/// Which of the two calibrated intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalKind {
    /// `I⁻`: order statistic `⌊(1−δ)(n+1)⌋`, coverage at most `1 − δ`.
    Lower,
    /// `I⁺`: order statistic `⌈(1−δ)(n+1)⌉`, coverage at least `1 − δ`.
    Upper,
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    /// Lower end.
    pub lo: f64,
    /// Upper end.
    pub hi: f64,
}

impl Interval {
    /// Whether `y` lies in `[lo, hi]`.
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    /// Whether `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

/// A calibrated PCQR interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    /// Lower end.
    pub lo: f64,
    /// Upper end.
    pub hi: f64,
    /// `I⁻` or `I⁺`.
    pub kind: IntervalKind,
    /// Miscoverage level.
    pub delta: f64,
    /// 1-based order statistic the interval was built from.
    pub index: usize,
    /// Whether `⌈(1−δ)(n+1)⌉` exceeded `n` and the index was clamped to `n`.
    /// The coverage guarantee does not hold for a clamped interval.
    pub clamped: bool,
}

impl PredictionInterval {
    /// Whether `y` lies in the interval.
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// 1-based order statistic selected for `(δ, kind)` with `n` calibration
/// scores. An index above `n` is clamped to `n` (see
/// [`interval_index_unclamped`]); an index below 1 is an error.
pub fn interval_index(n: usize, delta: f64, kind: IntervalKind) -> Result<usize> {
    interval_index_unclamped(n, delta, kind).map(|k| k.min(n))
}

/// `⌊(1−δ)(n+1)⌋` or `⌈(1−δ)(n+1)⌉`, which may be `n + 1`.
pub fn interval_index_unclamped(n: usize, delta: f64, kind: IntervalKind) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) || n == 0 {
        return Err(Error::DeltaOutOfRange { delta, n });
    }
    let rounding = match kind {
        IntervalKind::Lower => Rounding::Floor,
        IntervalKind::Upper => Rounding::Ceil,
    };
    let k = order_index(delta, n, rounding);
    if k < 1 {
        return Err(Error::DeltaOutOfRange { delta, n });
    }
    Ok(k as usize)
}

/// `PCQR(x, s) = [Q̂(1/2 − s), Q̂(1/2 + s)]`, widened by the score's
/// overshoot past the support.
pub fn pcqr_at_score(model: &ForestModel, x: &[f64], s: Score) -> Result<Interval> {
    Ok(interval_from_conditional(&model.conditional(x)?, s))
}

/// [`pcqr_at_score`] on an already computed conditional distribution.
pub fn interval_from_conditional(cond: &ConditionalCdf, s: Score) -> Interval {
    let v = s.value.clamp(0.0, 0.5);
    // quantile only fails outside [0, 1], excluded by the clamp
    let lo = cond.quantile(0.5 - v).unwrap_or(f64::NAN);
    let hi = cond.quantile(0.5 + v).unwrap_or(f64::NAN);
    Interval {
        lo: lo - s.overshoot,
        hi: hi + s.overshoot,
    }
}

/// The calibrated interval `I⁻(x, δ)` or `I⁺(x, δ)`.
pub fn pcqr_interval(
    model: &ForestModel,
    scores: &ConformalScores,
    x: &[f64],
    delta: f64,
    kind: IntervalKind,
) -> Result<PredictionInterval> {
    let raw = interval_index_unclamped(scores.n(), delta, kind)?;
    let index = raw.min(scores.n());
    let s = scores.scores[index - 1];
    let iv = pcqr_at_score(model, x, s)?;
    Ok(PredictionInterval {
        lo: iv.lo,
        hi: iv.hi,
        kind,
        delta,
        index,
        clamped: raw > index,
    })
}

/// CQR interval `[q̂_lo − c, q̂_hi + c]` from externally supplied quantiles
/// and correction.
pub fn cqr_interval(qhat_lo: f64, qhat_hi: f64, c_delta: f64) -> Result<Interval> {
    if !(qhat_lo.is_finite() && qhat_hi.is_finite() && c_delta.is_finite()) {
        return Err(Error::NonFinite("cqr input"));
    }
    if qhat_lo > qhat_hi {
        return Err(Error::Crossing {
            lo: qhat_lo,
            hi: qhat_hi,
        });
    }
    let (lo, hi) = (qhat_lo - c_delta, qhat_hi + c_delta);
    if lo > hi {
        return Err(Error::Crossing { lo, hi });
    }
    Ok(Interval { lo, hi })
}
