//! Episode simulators for the two evaluation domains.
//!
//! Both domains add uniform noise in `[−h, h]` (default `h = 5·10⁻⁶`) to the
//! last reward so that final returns are almost surely distinct.

mod skirmish;
mod tamarisk;

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub use skirmish::{
    sample_skirmish_episode, simulate_skirmish_from, SkirmishConfig, SkirmishStart,
    SKIRMISH_FEATURES,
};
pub use tamarisk::{
    greedy_policy, sample_tamarisk_episode, simulate_tamarisk_from, Action, EdgeState,
    TamariskConfig, TamariskCosts, TamariskState, EDGE_COUNT, TAMARISK_FEATURES,
};

/// Default half-width of the tie-breaking noise on the final reward.
pub const NOISE_HALF_WIDTH: f64 = 5e-6;

/// Generator used by [`generate_dataset`]: ChaCha8 seeded with the dataset
/// seed, one stream per episode index.
pub const RNG_ALGORITHM: &str = "chacha8-stream-per-episode";

/// One trajectory of a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    features: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Episode {
    /// Builds an episode from per-step features and rewards; the cumulative
    /// rewards `b_0 = 0, b_{t+1} = b_t + r_t` are computed here.
    pub fn new(features: Vec<Vec<f64>>, rewards: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::Empty("episode"));
        }
        if features.len() != rewards.len() {
            return Err(Error::LengthMismatch {
                expected: rewards.len(),
                actual: features.len(),
            });
        }
        let d = features[0].len();
        if let Some(bad) = features.iter().find(|f| f.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        if !rewards.iter().all(|r| r.is_finite()) || !features.iter().flatten().all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("episode"));
        }
        let mut cumulative = Vec::with_capacity(rewards.len() + 1);
        let mut b = 0.0;
        cumulative.push(b);
        for r in &rewards {
            b += r;
            cumulative.push(b);
        }
        Ok(Self {
            features,
            rewards,
            cumulative,
        })
    }

    /// Horizon `H`.
    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    /// Feature dimension.
    pub fn n_features(&self) -> usize {
        self.features[0].len()
    }

    /// Feature vectors `x_0 … x_{H−1}`.
    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    /// Rewards `r_0 … r_{H−1}`; the last one carries the noise.
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Cumulative rewards `b_0 … b_H`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `b_H`.
    pub fn final_return(&self) -> f64 {
        self.cumulative[self.rewards.len()]
    }

    /// `b_H − b_t`.
    pub fn reward_to_go(&self, t: usize) -> f64 {
        self.final_return() - self.cumulative[t]
    }

    /// `(x_t, b_t)` pairs in time order, as seen by a runtime monitor.
    pub fn observations(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.features
            .iter()
            .zip(&self.cumulative)
            .map(|(x, &b)| (x.as_slice(), b))
    }
}

/// A simulator configuration for either domain.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainConfig {
    /// River-network invasive species management.
    Tamarisk(TamariskConfig),
    /// Two-team attrition battle with mid-episode reinforcements.
    Skirmish(SkirmishConfig),
}

impl DomainConfig {
    /// Short domain name used in file metadata.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Tamarisk(_) => "tamarisk",
            Self::Skirmish(_) => "skirmish",
        }
    }

    /// Default configuration for a domain name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "tamarisk" => Some(Self::Tamarisk(TamariskConfig::default())),
            "skirmish" => Some(Self::Skirmish(SkirmishConfig::default())),
            _ => None,
        }
    }

    /// Horizon `H`.
    pub fn horizon(&self) -> usize {
        match self {
            Self::Tamarisk(c) => c.horizon,
            Self::Skirmish(c) => c.horizon,
        }
    }

    /// Column names of the feature vector.
    pub fn feature_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            Self::Tamarisk(_) => &TAMARISK_FEATURES,
            Self::Skirmish(_) => &SKIRMISH_FEATURES,
        };
        names.iter().map(|s| String::from(*s)).collect()
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Tamarisk(c) => c.validate(),
            Self::Skirmish(c) => c.validate(),
        }
    }

    /// Samples one episode.
    pub fn sample_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> Episode {
        match self {
            Self::Tamarisk(c) => sample_tamarisk_episode(c, rng),
            Self::Skirmish(c) => sample_skirmish_episode(c, rng),
        }
    }

    /// Noise half-width on the final reward.
    pub fn noise_half_width(&self) -> f64 {
        match self {
            Self::Tamarisk(c) => c.noise_half_width,
            Self::Skirmish(c) => c.noise_half_width,
        }
    }
}

/// Samples `episode_count` independent episodes. Episode `i` uses ChaCha8
/// stream `i` under `seed`, so the output depends only on `(config, seed)`.
pub fn generate_dataset(
    config: &DomainConfig,
    episode_count: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    if episode_count == 0 {
        return Err(Error::Invalid {
            name: "episode_count",
            reason: "must be at least 1",
        });
    }
    config.validate()?;
    Ok((0..episode_count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            config.sample_episode(&mut rng)
        })
        .collect())
}

fn noise<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    let u: f64 = rng.gen();
    (2.0 * u - 1.0) * half_width
}

fn check_prob(p: f64, name: &'static str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Invalid {
            name,
            reason: "probability must lie in [0, 1]",
        })
    }
}

#[cfg(test)]
mod tests;
