//! Per-timestep reward-to-go models and runtime alarms.
//!
//! A [`MonitorSuite`] holds one forest and one set of calibration alphas per
//! timestep. At time `t` the user's target `[y⁻, y⁺]` for the final return is
//! translated into reward-to-go space, `[y⁻ − b_t, y⁺ − b_t]`, and queried
//! with [`coverage_bounds`].

use alloc::vec::Vec;

use crate::forest::{fit_forest, ForestConfig, ForestModel, TrainingSet};
use crate::inverse::{
    calibrate_alphas, coverage_bounds, CalibrationAlphas, CoverageBounds, TargetInterval,
};
use crate::sim::Episode;
use crate::{Error, Result};

/// One model and one set of alphas per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSuite {
    models: Vec<ForestModel>,
    alphas: Vec<CalibrationAlphas>,
}

impl MonitorSuite {
    /// Assembles a suite, checking that every timestep has a model and that
    /// all alpha sets share one calibration size.
    pub fn from_parts(models: Vec<ForestModel>, alphas: Vec<CalibrationAlphas>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("monitor suite"));
        }
        if models.len() != alphas.len() {
            return Err(Error::HorizonMismatch {
                expected: models.len(),
                actual: alphas.len(),
            });
        }
        let n = alphas[0].n();
        if let Some(a) = alphas.iter().find(|a| a.n() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: a.n(),
            });
        }
        let d = models[0].n_features();
        if let Some(m) = models.iter().find(|m| m.n_features() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: m.n_features(),
            });
        }
        Ok(Self { models, alphas })
    }

    /// Horizon `H`.
    pub fn horizon(&self) -> usize {
        self.models.len()
    }

    /// Calibration size shared by all timesteps.
    pub fn n_cal(&self) -> usize {
        self.alphas[0].n()
    }

    /// Feature dimension.
    pub fn n_features(&self) -> usize {
        self.models[0].n_features()
    }

    /// Per-timestep models.
    pub fn models(&self) -> &[ForestModel] {
        &self.models
    }

    /// Per-timestep alphas.
    pub fn alphas(&self) -> &[CalibrationAlphas] {
        &self.alphas
    }

    /// Model and alphas at `t`.
    pub fn at(&self, t: usize) -> Result<(&ForestModel, &CalibrationAlphas)> {
        match (self.models.get(t), self.alphas.get(t)) {
            (Some(m), Some(a)) => Ok((m, a)),
            _ => Err(Error::TimestepOutOfRange {
                t,
                horizon: self.horizon(),
            }),
        }
    }

    /// `(p⁻, p⁺)` for reaching `target` at the horizon given `x_t` and
    /// `b_t`.
    pub fn step_probability(
        &self,
        t: usize,
        x: &[f64],
        b: f64,
        target: &TargetInterval,
    ) -> Result<CoverageBounds> {
        let (model, alphas) = self.at(t)?;
        coverage_bounds(model, alphas, x, &target.shifted_down(b))
    }
}

fn check_horizon(episodes: &[Episode], horizon: usize) -> Result<()> {
    match episodes.iter().find(|e| e.horizon() != horizon) {
        Some(e) => Err(Error::HorizonMismatch {
            expected: horizon,
            actual: e.horizon(),
        }),
        None => Ok(()),
    }
}

/// `(x_t, y_H − b_t)` pairs for one timestep.
pub fn timestep_training_set(episodes: &[Episode], t: usize) -> Result<TrainingSet> {
    let rows: Vec<Vec<f64>> = episodes.iter().map(|e| e.features()[t].clone()).collect();
    let responses = episodes.iter().map(|e| e.reward_to_go(t)).collect();
    TrainingSet::new(&rows, responses)
}

/// Forest seed used for timestep `t`, so each timestep has its own trees.
pub fn timestep_seed(seed: u64, t: usize) -> u64 {
    seed ^ (t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits the reward-to-go model for timestep `t`.
pub fn fit_timestep(train: &[Episode], t: usize, config: &ForestConfig) -> Result<ForestModel> {
    let set = timestep_training_set(train, t)?;
    let config = ForestConfig {
        seed: timestep_seed(config.seed, t),
        ..config.clone()
    };
    fit_forest(&set, &config)
}

/// Calibrates the timestep-`t` model on held-out episodes.
pub fn calibrate_timestep(
    model: &ForestModel,
    cal: &[Episode],
    t: usize,
) -> Result<CalibrationAlphas> {
    calibrate_alphas(
        model,
        cal.iter()
            .map(|e| (e.features()[t].as_slice(), e.reward_to_go(t))),
    )
}

/// Fits one forest per timestep on `train` and calibrates it on `cal`.
/// The two sets must be disjoint and share a horizon.
pub fn build_monitor(
    train: &[Episode],
    cal: &[Episode],
    config: &ForestConfig,
) -> Result<MonitorSuite> {
    if train.is_empty() {
        return Err(Error::Empty("training episodes"));
    }
    if cal.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let horizon = train[0].horizon();
    check_horizon(train, horizon)?;
    check_horizon(cal, horizon)?;
    let mut models = Vec::with_capacity(horizon);
    let mut alphas = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let model = fit_timestep(train, t, config)?;
        alphas.push(calibrate_timestep(&model, cal, t)?);
        models.push(model);
    }
    MonitorSuite::from_parts(models, alphas)
}

/// Alarm reporting policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlarmMode {
    /// Report only the first sub-threshold step.
    #[default]
    FirstCrossing,
    /// Report every sub-threshold step.
    EveryStep,
}

/// A step at which `p⁻` fell below the alarm threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlarmEvent {
    /// Episode identifier.
    pub episode_id: u64,
    /// Timestep.
    pub t: usize,
    /// `p⁻` at `t`.
    pub p_lower: f64,
    /// `p⁺` at `t`.
    pub p_upper: f64,
    /// Threshold in force.
    pub threshold: f64,
}

/// Incremental monitor for one episode.
#[derive(Debug, Clone)]
pub struct EpisodeMonitor<'a> {
    suite: &'a MonitorSuite,
    target: TargetInterval,
    threshold: f64,
    mode: AlarmMode,
    episode_id: u64,
    t: usize,
    alarmed: bool,
}

impl<'a> EpisodeMonitor<'a> {
    /// Starts monitoring. `threshold` must lie in `[0, 1]`.
    pub fn new(
        suite: &'a MonitorSuite,
        episode_id: u64,
        target: TargetInterval,
        threshold: f64,
        mode: AlarmMode,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Invalid {
                name: "threshold",
                reason: "must lie in [0, 1]",
            });
        }
        let target = TargetInterval::new(target.y_minus, target.y_plus)?;
        Ok(Self {
            suite,
            target,
            threshold,
            mode,
            episode_id,
            t: 0,
            alarmed: false,
        })
    }

    /// Next timestep to be observed.
    pub fn next_timestep(&self) -> usize {
        self.t
    }

    /// Whether an alarm has been raised.
    pub fn alarmed(&self) -> bool {
        self.alarmed
    }

    /// Consumes the next observation `(x_t, b_t)`.
    pub fn observe(&mut self, x: &[f64], b: f64) -> Result<(CoverageBounds, Option<AlarmEvent>)> {
        let t = self.t;
        let bounds = self.suite.step_probability(t, x, b, &self.target)?;
        self.t += 1;
        let below = bounds.p_lower < self.threshold;
        let report = below && (self.mode == AlarmMode::EveryStep || !self.alarmed);
        self.alarmed |= below;
        let event = report.then_some(AlarmEvent {
            episode_id: self.episode_id,
            t,
            p_lower: bounds.p_lower,
            p_upper: bounds.p_upper,
            threshold: self.threshold,
        });
        Ok((bounds, event))
    }
}

/// Bounds for every observed step and the alarms raised.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonitorOutput {
    /// `(t, bounds)` in time order.
    pub bounds: Vec<(usize, CoverageBounds)>,
    /// Alarm events in time order.
    pub alarms: Vec<AlarmEvent>,
}

/// Runs a monitor over an observation stream `(x_t, b_t)`, `t = 0, 1, …`.
pub fn monitor_episode<'x, I>(
    suite: &MonitorSuite,
    episode_id: u64,
    stream: I,
    target: TargetInterval,
    threshold: f64,
    mode: AlarmMode,
) -> Result<MonitorOutput>
where
    I: IntoIterator<Item = (&'x [f64], f64)>,
{
    let mut monitor = EpisodeMonitor::new(suite, episode_id, target, threshold, mode)?;
    let mut out = MonitorOutput::default();
    for (x, b) in stream {
        let t = monitor.next_timestep();
        let (bounds, event) = monitor.observe(x, b)?;
        out.bounds.push((t, bounds));
        out.alarms.extend(event);
    }
    if out.bounds.is_empty() {
        return Err(Error::Empty("observation stream"));
    }
    Ok(out)
}
