//! A stochastic two-team attrition battle.
//!
//! Every step each blue unit eliminates a red unit with probability
//! `blue_kill_prob` and each red unit eliminates a blue unit with
//! probability `red_kill_prob`, so losses are binomial in the opposing
//! team's current strength. At `reinforcement_step` the red team gains
//! `Uniform{0..N}` units with `N ~ Uniform{cap range}`. Blue earns +1 per
//! red unit eliminated and −1 per blue unit lost.

use alloc::vec::Vec;

use rand::Rng;

use super::{check_prob, noise, Episode, NOISE_HALF_WIDTH};
use crate::{Error, Result};

/// Feature columns: unit counts, timestep, `b_t` and whether the
/// reinforcement has arrived.
pub const SKIRMISH_FEATURES: [&str; 5] = ["blue", "red", "t", "b", "reinforced"];

/// Simulator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SkirmishConfig {
    /// Inclusive range of the initial blue count.
    pub blue_init: (u32, u32),
    /// Inclusive range of the initial red count.
    pub red_init: (u32, u32),
    /// Step at which red reinforcements arrive.
    pub reinforcement_step: usize,
    /// Inclusive range of the reinforcement cap `N`.
    pub reinforcement_cap: (u32, u32),
    /// Per-step kill probability of each blue unit.
    pub blue_kill_prob: f64,
    /// Per-step kill probability of each red unit.
    pub red_kill_prob: f64,
    /// Horizon `H`.
    pub horizon: usize,
    /// Half-width of the noise added to the last reward.
    pub noise_half_width: f64,
}

impl Default for SkirmishConfig {
    fn default() -> Self {
        Self {
            blue_init: (5, 20),
            red_init: (5, 10),
            reinforcement_step: 14,
            reinforcement_cap: (0, 15),
            blue_kill_prob: 0.04,
            red_kill_prob: 0.06,
            horizon: 57,
            noise_half_width: NOISE_HALF_WIDTH,
        }
    }
}

impl SkirmishConfig {
    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        check_prob(self.blue_kill_prob, "blue_kill_prob")?;
        check_prob(self.red_kill_prob, "red_kill_prob")?;
        for (lo, hi) in [self.blue_init, self.red_init, self.reinforcement_cap] {
            if lo > hi {
                return Err(Error::Invalid {
                    name: "skirmish range",
                    reason: "range is empty",
                });
            }
        }
        if self.horizon == 0 || self.horizon < self.reinforcement_step {
            return Err(Error::Invalid {
                name: "horizon",
                reason: "must be positive and not before the reinforcement step",
            });
        }
        if !(self.noise_half_width.is_finite() && self.noise_half_width >= 0.0) {
            return Err(Error::Invalid {
                name: "noise_half_width",
                reason: "must be finite and non-negative",
            });
        }
        Ok(())
    }
}

/// Initial forces and the (pre-drawn) reinforcement size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkirmishStart {
    /// Initial blue units.
    pub blue: u32,
    /// Initial red units.
    pub red: u32,
    /// Red units added at the reinforcement step.
    pub reinforcement: u32,
}

/// Samples an episode with random initial forces and reinforcements.
pub fn sample_skirmish_episode<R: Rng + ?Sized>(config: &SkirmishConfig, rng: &mut R) -> Episode {
    let blue = rng.gen_range(config.blue_init.0..=config.blue_init.1);
    let red = rng.gen_range(config.red_init.0..=config.red_init.1);
    let cap = rng.gen_range(config.reinforcement_cap.0..=config.reinforcement_cap.1);
    let reinforcement = rng.gen_range(0..=cap);
    simulate_skirmish_from(
        config,
        SkirmishStart {
            blue,
            red,
            reinforcement,
        },
        rng,
    )
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u32, p: f64) -> u32 {
    (0..trials).filter(|_| rng.gen_bool(p)).count() as u32
}

/// Runs the battle from given forces.
pub fn simulate_skirmish_from<R: Rng + ?Sized>(
    config: &SkirmishConfig,
    start: SkirmishStart,
    rng: &mut R,
) -> Episode {
    let h = config.horizon;
    let (mut blue, mut red) = (start.blue, start.red);
    let mut features = Vec::with_capacity(h);
    let mut rewards = Vec::with_capacity(h);
    let mut b = 0.0;
    for t in 0..h {
        if t == config.reinforcement_step {
            red += start.reinforcement;
        }
        let reinforced = if t >= config.reinforcement_step { 1.0 } else { 0.0 };
        features.push(alloc::vec![blue as f64, red as f64, t as f64, b, reinforced]);

        let red_lost = binomial(rng, blue, config.blue_kill_prob).min(red);
        let blue_lost = binomial(rng, red, config.red_kill_prob).min(blue);
        red -= red_lost;
        blue -= blue_lost;
        let mut r = red_lost as f64 - blue_lost as f64;
        if t + 1 == h {
            r += noise(rng, config.noise_half_width);
        }
        rewards.push(r);
        b += r;
    }
    Episode::new(features, rewards).expect("simulator builds well-formed episodes")
}
