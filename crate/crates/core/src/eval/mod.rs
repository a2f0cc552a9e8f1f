//! Calibration experiments: partitioning, target intervals, forward
//! coverage, expected calibration error and reliability tables.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conformal::{calibrate, pcqr_interval, ConformalScores, IntervalKind};
use crate::forest::{ForestConfig, ForestModel};
use crate::inverse::TargetInterval;
use crate::math::snap;
use crate::monitor::build_monitor;
use crate::sim::{generate_dataset, DomainConfig, Episode, NOISE_HALF_WIDTH};
use crate::{mean_std, Error, Result};

/// Experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Episodes to simulate.
    pub episode_count: usize,
    /// Training episodes per partition.
    pub n_train: usize,
    /// Calibration episodes per partition.
    pub n_cal: usize,
    /// Test episodes per partition.
    pub n_test: usize,
    /// One seed per random partition.
    pub partition_seeds: Vec<u64>,
    /// Miscoverage level of the forward interval.
    pub delta: f64,
    /// Equal-width bins for ECE and reliability tables.
    pub ece_bins: usize,
    /// Quantile levels of the empirical target interval.
    pub target_quantiles: (f64, f64),
    /// Per-timestep forest settings.
    pub forest: ForestConfig,
    /// Test episodes whose probability traces are kept.
    pub trace_count: usize,
    /// Seed of the simulated dataset.
    pub data_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            episode_count: 10_000,
            n_train: 2_500,
            n_cal: 2_500,
            n_test: 5_000,
            partition_seeds: vec![1, 2, 3, 4, 5],
            delta: 0.2,
            ece_bins: 30,
            target_quantiles: (0.1, 0.9),
            forest: ForestConfig::default(),
            trace_count: 10,
            data_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Checks sizes and levels.
    pub fn validate(&self) -> Result<()> {
        if self.n_train + self.n_cal + self.n_test != self.episode_count {
            return Err(Error::LengthMismatch {
                expected: self.episode_count,
                actual: self.n_train + self.n_cal + self.n_test,
            });
        }
        if self.n_train < 2 || self.n_cal == 0 || self.n_test == 0 {
            return Err(Error::Invalid {
                name: "partition sizes",
                reason: "need at least two training, one calibration and one test episode",
            });
        }
        if self.partition_seeds.is_empty() {
            return Err(Error::Invalid {
                name: "partition_seeds",
                reason: "need at least one partition",
            });
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::DeltaOutOfRange {
                delta: self.delta,
                n: self.n_cal,
            });
        }
        if self.ece_bins == 0 {
            return Err(Error::Invalid {
                name: "ece_bins",
                reason: "must be at least 1",
            });
        }
        let (lo, hi) = self.target_quantiles;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Invalid {
                name: "target_quantiles",
                reason: "need 0 <= lo <= hi <= 1",
            });
        }
        self.forest.validate()
    }
}

/// Episode indices of one random split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Training indices.
    pub train: Vec<usize>,
    /// Calibration indices.
    pub cal: Vec<usize>,
    /// Test indices.
    pub test: Vec<usize>,
}

impl Partition {
    /// Copies the three parts out of `episodes`.
    pub fn select(&self, episodes: &[Episode]) -> (Vec<Episode>, Vec<Episode>, Vec<Episode>) {
        let pick = |idx: &[usize]| idx.iter().map(|&i| episodes[i].clone()).collect();
        (pick(&self.train), pick(&self.cal), pick(&self.test))
    }
}

/// Uniformly random split of `0..episode_count` into parts of the configured
/// sizes, deterministic per seed.
pub fn partition(episode_count: usize, config: &ExperimentConfig, seed: u64) -> Result<Partition> {
    let total = config.n_train + config.n_cal + config.n_test;
    if episode_count != total {
        return Err(Error::LengthMismatch {
            expected: total,
            actual: episode_count,
        });
    }
    let mut idx: Vec<usize> = (0..episode_count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(config.n_train + config.n_cal);
    let cal = idx.split_off(config.n_train);
    Ok(Partition {
        train: idx,
        cal,
        test,
    })
}

/// Inverted-CDF (type 1) empirical quantile: the `⌈q·n⌉`-th smallest value,
/// and the minimum for `q = 0`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Invalid {
            name: "quantile level",
            reason: "must lie in [0, 1]",
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = libm::ceil(snap(q * sorted.len() as f64)) as usize;
    Ok(sorted[k.max(1) - 1])
}

/// `[y⁻, y⁺]` from empirical quantiles of the final returns.
pub fn empirical_target_interval(episodes: &[Episode], q_lo: f64, q_hi: f64) -> Result<TargetInterval> {
    let finals: Vec<f64> = episodes.iter().map(Episode::final_return).collect();
    TargetInterval::new(empirical_quantile(&finals, q_lo)?, empirical_quantile(&finals, q_hi)?)
}

/// Fraction of test episodes whose final return lies in `I⁺(x_0, δ)`.
pub fn forward_coverage(
    model: &ForestModel,
    scores: &ConformalScores,
    test: &[Episode],
    delta: f64,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test episodes"));
    }
    let mut hits = 0usize;
    for e in test {
        let interval = pcqr_interval(model, scores, &e.features()[0], delta, IntervalKind::Upper)?;
        hits += usize::from(interval.contains(e.final_return()));
    }
    Ok(hits as f64 / test.len() as f64)
}

/// Per-bin sums for ECE and reliability tables over equal-width bins of
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    counts: Vec<u64>,
    pred_sums: Vec<f64>,
    hit_sums: Vec<u64>,
}

/// One row of a reliability table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityBin {
    /// Left edge.
    pub lo: f64,
    /// Right edge.
    pub hi: f64,
    /// Predictions in the bin.
    pub count: u64,
    /// Mean prediction, 0 for an empty bin.
    pub mean_pred: f64,
    /// Observed frequency, 0 for an empty bin.
    pub observed_freq: f64,
}

impl BinStats {
    /// Empty statistics with `bins ≥ 1` bins.
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Invalid {
                name: "bins",
                reason: "must be at least 1",
            });
        }
        Ok(Self {
            counts: vec![0; bins],
            pred_sums: vec![0.0; bins],
            hit_sums: vec![0; bins],
        })
    }

    /// Bin of a probability; 1 falls in the last bin.
    pub fn bin_of(&self, p: f64) -> usize {
        let bins = self.counts.len();
        (libm::floor(p * bins as f64) as usize).min(bins - 1)
    }

    /// Adds one prediction.
    pub fn add(&mut self, p: f64, outcome: bool) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Invalid {
                name: "predicted probability",
                reason: "must lie in [0, 1]",
            });
        }
        let k = self.bin_of(p);
        self.counts[k] += 1;
        self.pred_sums[k] += p;
        self.hit_sums[k] += u64::from(outcome);
        Ok(())
    }

    /// Adds another accumulator with the same bin count.
    pub fn merge(&mut self, other: &BinStats) -> Result<()> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::LengthMismatch {
                expected: self.counts.len(),
                actual: other.counts.len(),
            });
        }
        for k in 0..self.counts.len() {
            self.counts[k] += other.counts[k];
            self.pred_sums[k] += other.pred_sums[k];
            self.hit_sums[k] += other.hit_sums[k];
        }
        Ok(())
    }

    /// Total predictions.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `Σ_k (|B_k|/N)·|freq_k − conf_k|`; 0 when empty.
    pub fn ece(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        let gap: f64 = (0..self.counts.len())
            .map(|k| libm::fabs(self.hit_sums[k] as f64 - self.pred_sums[k]))
            .sum();
        gap / n as f64
    }

    /// One row per bin, including empty bins.
    pub fn table(&self) -> Vec<ReliabilityBin> {
        let bins = self.counts.len() as f64;
        (0..self.counts.len())
            .map(|k| {
                let c = self.counts[k];
                let (mean_pred, observed_freq) = if c == 0 {
                    (0.0, 0.0)
                } else {
                    (self.pred_sums[k] / c as f64, self.hit_sums[k] as f64 / c as f64)
                };
                ReliabilityBin {
                    lo: k as f64 / bins,
                    hi: (k + 1) as f64 / bins,
                    count: c,
                    mean_pred,
                    observed_freq,
                }
            })
            .collect()
    }
}

fn bin_stats(probs: &[f64], outcomes: &[bool], bins: usize) -> Result<BinStats> {
    if probs.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            expected: probs.len(),
            actual: outcomes.len(),
        });
    }
    let mut stats = BinStats::new(bins)?;
    for (&p, &o) in probs.iter().zip(outcomes) {
        stats.add(p, o)?;
    }
    Ok(stats)
}

/// Expected calibration error over `bins` equal-width bins.
pub fn ece(probs: &[f64], outcomes: &[bool], bins: usize) -> Result<f64> {
    Ok(bin_stats(probs, outcomes, bins)?.ece())
}

/// Reliability table over `bins` equal-width bins.
pub fn reliability_table(probs: &[f64], outcomes: &[bool], bins: usize) -> Result<Vec<ReliabilityBin>> {
    Ok(bin_stats(probs, outcomes, bins)?.table())
}

/// `p⁻` and `p⁺` over time for one test episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Partition the episode was tested in.
    pub partition: usize,
    /// Index into the full dataset.
    pub episode: usize,
    /// Final return.
    pub final_return: f64,
    /// Whether the final return lies in the target interval.
    pub inside: bool,
    /// `p⁻` for `t = 0 … H−1`.
    pub p_lower: Vec<f64>,
    /// `p⁺` for `t = 0 … H−1`.
    pub p_upper: Vec<f64>,
}

/// Results for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    /// Partition seed.
    pub seed: u64,
    /// Target interval from the test set.
    pub target: TargetInterval,
    /// Fraction of test final returns inside the target.
    pub inside_fraction: f64,
    /// Coverage of `I⁺(x_0, δ)` on the test set.
    pub forward_coverage: f64,
    /// ECE of `p⁻` at each timestep.
    pub ece_lower: Vec<f64>,
    /// ECE of `p⁺` at each timestep.
    pub ece_upper: Vec<f64>,
    /// ECE of `p⁻` pooled over all timesteps.
    pub pooled_ece_lower: f64,
    /// ECE of `p⁺` pooled over all timesteps.
    pub pooled_ece_upper: f64,
    /// Mean `p⁻` at each timestep.
    pub mean_p_lower: Vec<f64>,
    /// Mean `p⁺` at each timestep.
    pub mean_p_upper: Vec<f64>,
}

/// Share of final-step probabilities that settled near 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Convergence {
    /// Test episodes whose final return is not within the noise band of a
    /// target endpoint.
    pub eligible: usize,
    /// Of those, episodes with `p⁻ ≤ 2/(n+1)` or `p⁻ ≥ 1 − 4/(n+1)` at
    /// `t = H−1`.
    pub converged: usize,
}

impl Convergence {
    fn record(&mut self, eligible: bool, converged: bool) {
        if eligible {
            self.eligible += 1;
            self.converged += usize::from(converged);
        }
    }

    /// `converged / eligible`, 1 when nothing is eligible.
    pub fn fraction(&self) -> f64 {
        if self.eligible == 0 {
            1.0
        } else {
            self.converged as f64 / self.eligible as f64
        }
    }
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    /// Domain name.
    pub domain: String,
    /// Horizon `H`.
    pub horizon: usize,
    /// Calibration size.
    pub n_cal: usize,
    /// Forward miscoverage level.
    pub delta: f64,
    /// ECE bin count.
    pub bins: usize,
    /// Per-partition results.
    pub partitions: Vec<PartitionReport>,
    /// `p⁻` statistics pooled over all timesteps and partitions.
    pub pooled_lower: BinStats,
    /// `p⁺` statistics pooled over all timesteps and partitions.
    pub pooled_upper: BinStats,
    /// Probability traces from the first partition.
    pub traces: Vec<Trace>,
    /// End-of-episode convergence over all partitions, excluding final
    /// returns within the noise half-width of a target endpoint.
    pub convergence: Convergence,
    /// Same, excluding final returns within the full noise width of a
    /// target endpoint, i.e. in the same noise mode as the endpoint.
    pub convergence_mode: Convergence,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    /// Mean.
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
}

fn summarize(values: impl Iterator<Item = f64>) -> MeanStd {
    let v: Vec<f64> = values.collect();
    let (mean, std) = mean_std(&v);
    MeanStd { mean, std }
}

impl CalibrationReport {
    /// Forward coverage across partitions.
    pub fn forward_coverage(&self) -> MeanStd {
        summarize(self.partitions.iter().map(|p| p.forward_coverage))
    }

    /// Per-partition pooled `p⁻` ECE across partitions.
    pub fn pooled_ece_lower(&self) -> MeanStd {
        summarize(self.partitions.iter().map(|p| p.pooled_ece_lower))
    }

    /// Per-partition pooled `p⁺` ECE across partitions.
    pub fn pooled_ece_upper(&self) -> MeanStd {
        summarize(self.partitions.iter().map(|p| p.pooled_ece_upper))
    }

    /// `(lower, upper)` ECE at timestep `t` across partitions.
    pub fn ece_at(&self, t: usize) -> (MeanStd, MeanStd) {
        (
            summarize(self.partitions.iter().map(|p| p.ece_lower[t])),
            summarize(self.partitions.iter().map(|p| p.ece_upper[t])),
        )
    }

    /// Mean `p⁻` at timestep `t` across partitions.
    pub fn mean_coverage_at(&self, t: usize) -> MeanStd {
        summarize(self.partitions.iter().map(|p| p.mean_p_lower[t]))
    }

    /// Pooled `p⁻` reliability table.
    pub fn reliability(&self) -> Vec<ReliabilityBin> {
        self.pooled_lower.table()
    }
}

/// Simulates a dataset and runs [`evaluate_episodes`] on it.
pub fn run_experiment(domain: &DomainConfig, config: &ExperimentConfig) -> Result<CalibrationReport> {
    config.validate()?;
    let episodes = generate_dataset(domain, config.episode_count, config.data_seed)?;
    evaluate_episodes(domain.name(), &episodes, config)
}

/// Full calibration experiment on a given dataset: for each partition seed,
/// split, fit and calibrate per-timestep models, then score forward
/// coverage at `t = 0` and `(p⁻, p⁺)` for the empirical target at every
/// timestep of every test episode.
pub fn evaluate_episodes(
    domain: &str,
    episodes: &[Episode],
    config: &ExperimentConfig,
) -> Result<CalibrationReport> {
    config.validate()?;
    let first = episodes.first().ok_or(Error::Empty("episodes"))?;
    let horizon = first.horizon();
    let bins = config.ece_bins;
    let n1 = (config.n_cal + 1) as f64;
    let mut report = CalibrationReport {
        domain: String::from(domain),
        horizon,
        n_cal: config.n_cal,
        delta: config.delta,
        bins,
        partitions: Vec::with_capacity(config.partition_seeds.len()),
        pooled_lower: BinStats::new(bins)?,
        pooled_upper: BinStats::new(bins)?,
        traces: Vec::new(),
        convergence: Convergence::default(),
        convergence_mode: Convergence::default(),
    };

    for (k, &seed) in config.partition_seeds.iter().enumerate() {
        let split = partition(episodes.len(), config, seed)?;
        let (train, cal, test) = split.select(episodes);
        let forest = ForestConfig {
            seed: config.forest.seed ^ seed.wrapping_mul(0xD1B5_4A32_D192_ED03),
            ..config.forest.clone()
        };
        let suite = build_monitor(&train, &cal, &forest)?;

        let model0 = &suite.models()[0];
        let scores = calibrate(
            model0,
            cal.iter().map(|e| (e.features()[0].as_slice(), e.final_return())),
        )?;
        let coverage = forward_coverage(model0, &scores, &test, config.delta)?;

        let (q_lo, q_hi) = config.target_quantiles;
        let target = empirical_target_interval(&test, q_lo, q_hi)?;
        let outcomes: Vec<bool> = test.iter().map(|e| target.contains(e.final_return())).collect();

        let mut part = PartitionReport {
            seed,
            target,
            inside_fraction: outcomes.iter().filter(|&&o| o).count() as f64 / test.len() as f64,
            forward_coverage: coverage,
            ece_lower: Vec::with_capacity(horizon),
            ece_upper: Vec::with_capacity(horizon),
            pooled_ece_lower: 0.0,
            pooled_ece_upper: 0.0,
            mean_p_lower: Vec::with_capacity(horizon),
            mean_p_upper: Vec::with_capacity(horizon),
        };
        let mut pooled_lo = BinStats::new(bins)?;
        let mut pooled_hi = BinStats::new(bins)?;
        let trace_count = if k == 0 { config.trace_count.min(test.len()) } else { 0 };
        let mut traces: Vec<Trace> = (0..trace_count)
            .map(|i| Trace {
                partition: k,
                episode: split.test[i],
                final_return: test[i].final_return(),
                inside: outcomes[i],
                p_lower: Vec::with_capacity(horizon),
                p_upper: Vec::with_capacity(horizon),
            })
            .collect();

        for t in 0..horizon {
            let mut lo_t = BinStats::new(bins)?;
            let mut hi_t = BinStats::new(bins)?;
            let (mut sum_lo, mut sum_hi) = (0.0, 0.0);
            for (i, e) in test.iter().enumerate() {
                let b = suite.step_probability(t, &e.features()[t], e.cumulative()[t], &target)?;
                lo_t.add(b.p_lower, outcomes[i])?;
                hi_t.add(b.p_upper, outcomes[i])?;
                sum_lo += b.p_lower;
                sum_hi += b.p_upper;
                if let Some(tr) = traces.get_mut(i) {
                    tr.p_lower.push(b.p_lower);
                    tr.p_upper.push(b.p_upper);
                }
                if t + 1 == horizon {
                    let converged = b.p_lower <= 2.0 / n1 || b.p_lower >= 1.0 - 4.0 / n1;
                    let gap = libm::fabs(e.final_return() - target.y_minus)
                        .min(libm::fabs(e.final_return() - target.y_plus));
                    report.convergence.record(gap > NOISE_HALF_WIDTH, converged);
                    report.convergence_mode.record(gap > 2.0 * NOISE_HALF_WIDTH, converged);
                }
            }
            part.ece_lower.push(lo_t.ece());
            part.ece_upper.push(hi_t.ece());
            part.mean_p_lower.push(sum_lo / test.len() as f64);
            part.mean_p_upper.push(sum_hi / test.len() as f64);
            pooled_lo.merge(&lo_t)?;
            pooled_hi.merge(&hi_t)?;
        }
        part.pooled_ece_lower = pooled_lo.ece();
        part.pooled_ece_upper = pooled_hi.ece();
        report.pooled_lower.merge(&pooled_lo)?;
        report.pooled_upper.merge(&pooled_hi)?;
        report.traces.extend(traces);
        report.partitions.push(part);
    }
    Ok(report)
}
