//! Conversions between [`KeyValues`] and the library configuration types.
//!
//! Domain parameters live under `tamarisk.*` or `skirmish.*`; forest and
//! experiment settings use flat keys (`trees`, `min_leaf`, `n_cal`, ...).

use pcqr_core::eval::ExperimentConfig;
use pcqr_core::forest::ForestConfig;
use pcqr_core::sim::{DomainConfig, SkirmishConfig, TamariskConfig};

use crate::fsutil::fmt_f64;
use crate::kv::KeyValues;
use crate::{Error, Result};

const TAMARISK_KEYS: [&str; 10] = [
    "cost_eradicate",
    "cost_plant",
    "cost_eradicate_and_plant",
    "cost_tamarisk",
    "budget",
    "invasion_prob",
    "death_prob",
    "seed_spread_prob",
    "horizon",
    "noise_half_width",
];

const SKIRMISH_KEYS: [&str; 11] = [
    "blue_min",
    "blue_max",
    "red_min",
    "red_max",
    "reinforcement_step",
    "reinforcement_cap_min",
    "reinforcement_cap_max",
    "blue_kill_prob",
    "red_kill_prob",
    "horizon",
    "noise_half_width",
];

/// `domain` plus every domain parameter.
pub fn domain_to_kv(domain: &DomainConfig) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("domain", domain.name());
    match domain {
        DomainConfig::Tamarisk(c) => {
            let p = "tamarisk.";
            kv.set(format!("{p}cost_eradicate"), fmt_f64(c.costs.eradicate));
            kv.set(format!("{p}cost_plant"), fmt_f64(c.costs.plant));
            kv.set(
                format!("{p}cost_eradicate_and_plant"),
                fmt_f64(c.costs.eradicate_and_plant),
            );
            kv.set(format!("{p}cost_tamarisk"), fmt_f64(c.costs.tamarisk_per_edge));
            kv.set(format!("{p}budget"), fmt_f64(c.budget));
            kv.set(format!("{p}invasion_prob"), fmt_f64(c.invasion_prob));
            kv.set(format!("{p}death_prob"), fmt_f64(c.death_prob));
            kv.set(format!("{p}seed_spread_prob"), fmt_f64(c.seed_spread_prob));
            kv.set(format!("{p}horizon"), c.horizon);
            kv.set(format!("{p}noise_half_width"), fmt_f64(c.noise_half_width));
        }
        DomainConfig::Skirmish(c) => {
            let p = "skirmish.";
            kv.set(format!("{p}blue_min"), c.blue_init.0);
            kv.set(format!("{p}blue_max"), c.blue_init.1);
            kv.set(format!("{p}red_min"), c.red_init.0);
            kv.set(format!("{p}red_max"), c.red_init.1);
            kv.set(format!("{p}reinforcement_step"), c.reinforcement_step);
            kv.set(format!("{p}reinforcement_cap_min"), c.reinforcement_cap.0);
            kv.set(format!("{p}reinforcement_cap_max"), c.reinforcement_cap.1);
            kv.set(format!("{p}blue_kill_prob"), fmt_f64(c.blue_kill_prob));
            kv.set(format!("{p}red_kill_prob"), fmt_f64(c.red_kill_prob));
            kv.set(format!("{p}horizon"), c.horizon);
            kv.set(format!("{p}noise_half_width"), fmt_f64(c.noise_half_width));
        }
    }
    kv
}

fn check_keys(kv: &KeyValues, prefix: &str, known: &[&str]) -> Result<()> {
    for key in kv.keys_with_prefix(prefix) {
        if !known.contains(&&key[prefix.len()..]) {
            return Err(Error::Config(format!("unknown key {key}")));
        }
    }
    Ok(())
}

/// Reads `domain` and overrides the defaults with any `<domain>.*` keys.
pub fn domain_from_kv(kv: &KeyValues) -> Result<DomainConfig> {
    let name = kv.require("domain")?;
    let domain = match name {
        "tamarisk" => {
            let p = "tamarisk.";
            check_keys(kv, p, &TAMARISK_KEYS)?;
            let d = TamariskConfig::default();
            let f = |k: &str, v: f64| kv.float_or(&format!("{p}{k}"), v);
            let mut c = d.clone();
            c.costs.eradicate = f("cost_eradicate", d.costs.eradicate)?;
            c.costs.plant = f("cost_plant", d.costs.plant)?;
            c.costs.eradicate_and_plant = f("cost_eradicate_and_plant", d.costs.eradicate_and_plant)?;
            c.costs.tamarisk_per_edge = f("cost_tamarisk", d.costs.tamarisk_per_edge)?;
            c.budget = f("budget", d.budget)?;
            c.invasion_prob = f("invasion_prob", d.invasion_prob)?;
            c.death_prob = f("death_prob", d.death_prob)?;
            c.seed_spread_prob = f("seed_spread_prob", d.seed_spread_prob)?;
            c.horizon = kv.parsed_or(&format!("{p}horizon"), d.horizon)?;
            c.noise_half_width = f("noise_half_width", d.noise_half_width)?;
            DomainConfig::Tamarisk(c)
        }
        "skirmish" => {
            let p = "skirmish.";
            check_keys(kv, p, &SKIRMISH_KEYS)?;
            let d = SkirmishConfig::default();
            let u = |k: &str, v: u32| kv.parsed_or(&format!("{p}{k}"), v);
            let f = |k: &str, v: f64| kv.float_or(&format!("{p}{k}"), v);
            DomainConfig::Skirmish(SkirmishConfig {
                blue_init: (u("blue_min", d.blue_init.0)?, u("blue_max", d.blue_init.1)?),
                red_init: (u("red_min", d.red_init.0)?, u("red_max", d.red_init.1)?),
                reinforcement_step: kv
                    .parsed_or(&format!("{p}reinforcement_step"), d.reinforcement_step)?,
                reinforcement_cap: (
                    u("reinforcement_cap_min", d.reinforcement_cap.0)?,
                    u("reinforcement_cap_max", d.reinforcement_cap.1)?,
                ),
                blue_kill_prob: f("blue_kill_prob", d.blue_kill_prob)?,
                red_kill_prob: f("red_kill_prob", d.red_kill_prob)?,
                horizon: kv.parsed_or(&format!("{p}horizon"), d.horizon)?,
                noise_half_width: f("noise_half_width", d.noise_half_width)?,
            })
        }
        other => return Err(Error::Config(format!("unknown domain {other:?}"))),
    };
    domain.validate()?;
    Ok(domain)
}

/// Forest settings.
pub fn forest_to_kv(c: &ForestConfig) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("trees", c.tree_count);
    kv.set("min_leaf", c.min_leaf_size);
    kv.set("feature_fraction", fmt_f64(c.feature_subsample));
    kv.set("bootstrap", c.bootstrap);
    kv.set("forest_seed", c.seed);
    kv
}

/// Forest settings over `base`.
pub fn forest_from_kv(kv: &KeyValues, base: &ForestConfig) -> Result<ForestConfig> {
    let c = ForestConfig {
        tree_count: kv.parsed_or("trees", base.tree_count)?,
        min_leaf_size: kv.parsed_or("min_leaf", base.min_leaf_size)?,
        feature_subsample: kv.float_or("feature_fraction", base.feature_subsample)?,
        bootstrap: kv.parsed_or("bootstrap", base.bootstrap)?,
        seed: kv.parsed_or("forest_seed", base.seed)?,
    };
    c.validate()?;
    Ok(c)
}

/// Experiment settings including the forest.
pub fn experiment_to_kv(c: &ExperimentConfig) -> KeyValues {
    let mut kv = forest_to_kv(&c.forest);
    kv.set("episodes", c.episode_count);
    kv.set("n_train", c.n_train);
    kv.set("n_cal", c.n_cal);
    kv.set("n_test", c.n_test);
    kv.set(
        "partition_seeds",
        c.partition_seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    kv.set("delta", fmt_f64(c.delta));
    kv.set("bins", c.ece_bins);
    kv.set("q_lo", fmt_f64(c.target_quantiles.0));
    kv.set("q_hi", fmt_f64(c.target_quantiles.1));
    kv.set("trace_count", c.trace_count);
    kv.set("seed", c.data_seed);
    kv
}

/// Experiment settings over `base`. When only `episodes` is given the
/// partition sizes keep the default 1:1:2 proportions.
pub fn experiment_from_kv(kv: &KeyValues, base: &ExperimentConfig) -> Result<ExperimentConfig> {
    let episode_count = kv.parsed_or("episodes", base.episode_count)?;
    let (dt, dc) = if episode_count == base.episode_count {
        (base.n_train, base.n_cal)
    } else {
        (episode_count / 4, episode_count / 4)
    };
    let n_train = kv.parsed_or("n_train", dt)?;
    let n_cal = kv.parsed_or("n_cal", dc)?;
    let n_test = match kv.parsed("n_test")? {
        Some(n) => n,
        None => episode_count.saturating_sub(n_train + n_cal),
    };
    let partition_seeds = match (kv.list("partition_seeds")?, kv.parsed::<u64>("partitions")?) {
        (Some(s), _) => s,
        (None, Some(k)) => (1..=k).collect(),
        (None, None) => base.partition_seeds.clone(),
    };
    let c = ExperimentConfig {
        episode_count,
        n_train,
        n_cal,
        n_test,
        partition_seeds,
        delta: kv.float_or("delta", base.delta)?,
        ece_bins: kv.parsed_or("bins", base.ece_bins)?,
        target_quantiles: (
            kv.float_or("q_lo", base.target_quantiles.0)?,
            kv.float_or("q_hi", base.target_quantiles.1)?,
        ),
        forest: forest_from_kv(kv, &base.forest)?,
        trace_count: kv.parsed_or("trace_count", base.trace_count)?,
        data_seed: kv.parsed_or("seed", base.data_seed)?,
    };
    c.validate()?;
    Ok(c)
}
