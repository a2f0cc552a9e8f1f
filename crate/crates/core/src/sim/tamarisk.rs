//! Invasive species management on a seven-edge river network.
//!
//! The network is a balanced binary tree. Edge 0 is the outlet; edge `e`
//! has upstream children `2e + 1` and `2e + 2`, so edges 3–6 are
//! headwaters. Each step the fixed policy acts on the observed state, the
//! step's cost is charged, then natural deaths and tamarisk colonization
//! produce the next state.

use alloc::vec::Vec;

use rand::Rng;

use super::{check_prob, noise, Episode, NOISE_HALF_WIDTH};
use crate::{Error, Result};

/// Number of river edges.
pub const EDGE_COUNT: usize = 7;

/// Feature columns: the seven edge codes, the timestep and `b_t`.
pub const TAMARISK_FEATURES: [&str; 9] = ["e0", "e1", "e2", "e3", "e4", "e5", "e6", "t", "b"];

/// Occupancy of one river edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeState {
    /// Bare.
    Empty,
    /// Native vegetation.
    Native,
    /// Invasive tamarisk.
    Tamarisk,
}

impl EdgeState {
    /// Integer feature code (0, 1, 2).
    pub fn code(self) -> f64 {
        match self {
            Self::Empty => 0.0,
            Self::Native => 1.0,
            Self::Tamarisk => 2.0,
        }
    }
}

/// State of all edges.
pub type TamariskState = [EdgeState; EDGE_COUNT];

/// Primitive per-edge action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Leave the edge alone.
    Nothing,
    /// Remove a tamarisk tree.
    Eradicate,
    /// Plant natives on an empty edge.
    Plant,
    /// Remove a tamarisk tree and plant natives.
    EradicateAndPlant,
}

/// Per-step costs.
#[derive(Debug, Clone, PartialEq)]
pub struct TamariskCosts {
    /// Cost of [`Action::Eradicate`].
    pub eradicate: f64,
    /// Cost of [`Action::Plant`].
    pub plant: f64,
    /// Cost of [`Action::EradicateAndPlant`].
    pub eradicate_and_plant: f64,
    /// Cost per edge occupied by tamarisk at the start of a step.
    pub tamarisk_per_edge: f64,
}

impl Default for TamariskCosts {
    fn default() -> Self {
        Self {
            eradicate: 0.5,
            plant: 0.9,
            eradicate_and_plant: 1.4,
            tamarisk_per_edge: 1.0,
        }
    }
}

impl TamariskCosts {
    /// Cost of one primitive action.
    pub fn of(&self, a: Action) -> f64 {
        match a {
            Action::Nothing => 0.0,
            Action::Eradicate => self.eradicate,
            Action::Plant => self.plant,
            Action::EradicateAndPlant => self.eradicate_and_plant,
        }
    }
}

/// Simulator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TamariskConfig {
    /// Action and occupancy costs.
    pub costs: TamariskCosts,
    /// Maximum total action cost per step.
    pub budget: f64,
    /// Per-step probability that an empty edge is colonized from outside.
    pub invasion_prob: f64,
    /// Per-step death probability of an occupied edge.
    pub death_prob: f64,
    /// Probability that a tamarisk edge seeds its downstream neighbour;
    /// upstream neighbours receive half of it.
    pub seed_spread_prob: f64,
    /// Horizon `H`.
    pub horizon: usize,
    /// Half-width of the noise added to the last reward.
    pub noise_half_width: f64,
}

impl Default for TamariskConfig {
    fn default() -> Self {
        Self {
            costs: TamariskCosts::default(),
            budget: 3.0,
            invasion_prob: 0.1,
            death_prob: 0.02,
            seed_spread_prob: 0.1,
            horizon: 50,
            noise_half_width: NOISE_HALF_WIDTH,
        }
    }
}

impl TamariskConfig {
    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        check_prob(self.invasion_prob, "invasion_prob")?;
        check_prob(self.death_prob, "death_prob")?;
        check_prob(self.seed_spread_prob, "seed_spread_prob")?;
        let c = &self.costs;
        let all = [
            c.eradicate,
            c.plant,
            c.eradicate_and_plant,
            c.tamarisk_per_edge,
            self.budget,
            self.noise_half_width,
        ];
        if !all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::Invalid {
                name: "tamarisk costs",
                reason: "costs, budget and noise must be finite and non-negative",
            });
        }
        if self.horizon == 0 {
            return Err(Error::Invalid {
                name: "horizon",
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

/// Greedy fixed policy: treat tamarisk edges headwaters first
/// (eradicate+plant, else eradicate), then plant empty edges, all within
/// the per-step budget.
pub fn greedy_policy(config: &TamariskConfig, state: &TamariskState) -> [Action; EDGE_COUNT] {
    let costs = &config.costs;
    let mut remaining = config.budget;
    let mut actions = [Action::Nothing; EDGE_COUNT];
    let spend = |a: Action, remaining: &mut f64| -> bool {
        let c = costs.of(a);
        if c <= *remaining + 1e-12 {
            *remaining -= c;
            true
        } else {
            false
        }
    };
    for e in (0..EDGE_COUNT).rev() {
        if state[e] == EdgeState::Tamarisk {
            if spend(Action::EradicateAndPlant, &mut remaining) {
                actions[e] = Action::EradicateAndPlant;
            } else if spend(Action::Eradicate, &mut remaining) {
                actions[e] = Action::Eradicate;
            }
        }
    }
    for e in (0..EDGE_COUNT).rev() {
        if state[e] == EdgeState::Empty && spend(Action::Plant, &mut remaining) {
            actions[e] = Action::Plant;
        }
    }
    actions
}

/// Samples an episode from a uniformly random initial state.
pub fn sample_tamarisk_episode<R: Rng + ?Sized>(config: &TamariskConfig, rng: &mut R) -> Episode {
    let mut initial = [EdgeState::Empty; EDGE_COUNT];
    for edge in &mut initial {
        *edge = match rng.gen_range(0..3) {
            0 => EdgeState::Empty,
            1 => EdgeState::Native,
            _ => EdgeState::Tamarisk,
        };
    }
    simulate_tamarisk_from(config, initial, rng)
}

/// Runs the fixed policy from a given initial state.
pub fn simulate_tamarisk_from<R: Rng + ?Sized>(
    config: &TamariskConfig,
    initial: TamariskState,
    rng: &mut R,
) -> Episode {
    let h = config.horizon;
    let mut state = initial;
    let mut features = Vec::with_capacity(h);
    let mut rewards = Vec::with_capacity(h);
    let mut b = 0.0;
    for t in 0..h {
        let mut x: Vec<f64> = state.iter().map(|s| s.code()).collect();
        x.push(t as f64);
        x.push(b);
        features.push(x);

        let actions = greedy_policy(config, &state);
        let occupied = state.iter().filter(|&&s| s == EdgeState::Tamarisk).count();
        let action_cost: f64 = actions.iter().map(|&a| config.costs.of(a)).sum();
        let mut r = -(action_cost + config.costs.tamarisk_per_edge * occupied as f64);
        if t + 1 == h {
            r += noise(rng, config.noise_half_width);
        }
        rewards.push(r);
        b += r;

        for (s, a) in state.iter_mut().zip(actions) {
            *s = match a {
                Action::Nothing => *s,
                Action::Eradicate => EdgeState::Empty,
                Action::Plant | Action::EradicateAndPlant => EdgeState::Native,
            };
        }
        state = transition(config, &state, rng);
    }
    // Episode::new only fails on malformed input, which cannot occur here.
    Episode::new(features, rewards).expect("simulator builds well-formed episodes")
}

fn transition<R: Rng + ?Sized>(
    config: &TamariskConfig,
    state: &TamariskState,
    rng: &mut R,
) -> TamariskState {
    let sources = *state;
    let mut next = *state;
    for s in next.iter_mut() {
        let dies = rng.gen_bool(config.death_prob);
        if *s != EdgeState::Empty && dies {
            *s = EdgeState::Empty;
        }
    }
    for e in 0..EDGE_COUNT {
        let u: f64 = rng.gen();
        if next[e] != EdgeState::Empty {
            continue;
        }
        let mut clear = 1.0 - config.invasion_prob;
        for child in [2 * e + 1, 2 * e + 2] {
            if child < EDGE_COUNT && sources[child] == EdgeState::Tamarisk {
                clear *= 1.0 - config.seed_spread_prob;
            }
        }
        if e > 0 && sources[(e - 1) / 2] == EdgeState::Tamarisk {
            clear *= 1.0 - 0.5 * config.seed_spread_prob;
        }
        if u < 1.0 - clear {
            next[e] = EdgeState::Tamarisk;
        }
    }
    next
}
