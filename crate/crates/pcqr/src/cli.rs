//! The `pcqr` command-line tool.
//!
//! Every command accepts `--config FILE` (plain `key=value` lines); flags
//! override file values. Relative `--out` paths are resolved under
//! `$PCQR_OUT_ROOT` when it is set. Each command writes its fully resolved
//! settings to `config.txt` next to its outputs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pcqr_core::conformal::{pcqr_interval, ConformalScores, IntervalKind, Score};
use pcqr_core::eval::{evaluate_episodes, partition, ExperimentConfig};
use pcqr_core::inverse::TargetInterval;
use pcqr_core::monitor::{build_monitor, monitor_episode, AlarmMode, MonitorSuite};
use pcqr_core::sim::generate_dataset;

use crate::artifacts::{
    alarms_csv, bounds_csv, write_partition_manifest, write_scores,
};
use crate::dataset::{read_dataset, read_episode_table, write_dataset, DatasetMeta, EpisodeTable};
use crate::fsutil::{fmt_f64, parse_f64, write_atomic};
use crate::kv::KeyValues;
use crate::model_io::{read_suite, write_suite};
use crate::report::{summary, write_report};
use crate::settings::{
    domain_from_kv, domain_to_kv, experiment_from_kv, experiment_to_kv, forest_from_kv,
    forest_to_kv,
};

/// Environment variable naming the root for relative output paths.
pub const OUT_ROOT_ENV: &str = "PCQR_OUT_ROOT";
/// Suite file name inside a suite directory.
pub const SUITE_FILE: &str = "suite.bin";
/// Exit code when a monitor raised an alarm.
pub const EXIT_ALARM: i32 = 2;

/// Probability-space conformal prediction for episodic returns.
#[derive(Debug, Parser)]
#[command(name = "pcqr", version)]
pub struct Cli {
    /// Plain-text key=value settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Command to run.
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an episode dataset.
    Simulate(SimulateArgs),
    /// Partition a dataset, fit per-timestep forests and calibrate them.
    Train(TrainArgs),
    /// Query coverage bounds (and optionally intervals) at one timestep.
    Predict(PredictArgs),
    /// Monitor episode streams and raise alarms.
    Monitor(MonitorArgs),
    /// Run the full calibration experiment and write a report.
    Evaluate(EvaluateArgs),
}

/// Forest hyperparameters.
#[derive(Debug, Args, Default)]
pub struct ForestArgs {
    /// Trees per forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Minimum rows per leaf.
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Fraction of features tried at each split.
    #[arg(long)]
    pub feature_fraction: Option<f64>,
    /// Grow trees on bootstrap samples.
    #[arg(long)]
    pub bootstrap: Option<bool>,
    /// Forest seed.
    #[arg(long)]
    pub forest_seed: Option<u64>,
}

impl ForestArgs {
    fn apply(&self, kv: &mut KeyValues) {
        kv.set_opt("trees", self.trees);
        kv.set_opt("min_leaf", self.min_leaf);
        kv.set_opt("feature_fraction", self.feature_fraction);
        kv.set_opt("bootstrap", self.bootstrap);
        kv.set_opt("forest_seed", self.forest_seed);
    }
}

/// `pcqr simulate`
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `tamarisk` or `skirmish`.
    #[arg(long)]
    pub domain: Option<String>,
    /// Number of episodes.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// `pcqr train`
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Seed of the random partition.
    #[arg(long)]
    pub partition_seed: Option<u64>,
    /// Training episodes (default: a quarter of the dataset).
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Calibration episodes (default: a quarter of the dataset).
    #[arg(long)]
    pub n_cal: Option<usize>,
    /// Forest settings.
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// `pcqr predict`
#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Suite directory written by `train`.
    #[arg(long)]
    pub suite: PathBuf,
    /// Timestep.
    #[arg(long)]
    pub t: usize,
    /// Comma-separated feature vector `x_t`.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "data")]
    pub features: Option<String>,
    /// Return so far `b_t` (with `--features`).
    #[arg(long, allow_hyphen_values = true, requires = "features")]
    pub b: Option<String>,
    /// Read `x_t` and `b_t` from an episode table file or dataset directory.
    #[arg(long, requires = "episode")]
    pub data: Option<PathBuf>,
    /// Episode id (with `--data`).
    #[arg(long)]
    pub episode: Option<u64>,
    /// Target lower end `y⁻` (`-inf` allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub target_lo: Option<String>,
    /// Target upper end `y⁺` (`inf` allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub target_hi: Option<String>,
    /// Also print `I⁻` and `I⁺` on the final-return scale at this level.
    #[arg(long)]
    pub delta: Option<f64>,
}

/// Alarm reporting mode.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// First sub-threshold step only.
    First,
    /// Every sub-threshold step.
    Every,
}

/// `pcqr monitor`
#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Suite directory written by `train`.
    #[arg(long)]
    pub suite: PathBuf,
    /// Episode table file (or dataset directory) with the observed steps.
    #[arg(long)]
    pub stream: PathBuf,
    /// Only monitor this episode id.
    #[arg(long)]
    pub episode: Option<u64>,
    /// Target lower end `y⁻` (`-inf` allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub target_lo: Option<String>,
    /// Target upper end `y⁺` (`inf` allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub target_hi: Option<String>,
    /// Alarm when `p⁻` falls below this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Alarm reporting mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Output directory for `bounds.csv` and `alarms.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

/// `pcqr evaluate`
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Simulate this domain (ignored with `--data`).
    #[arg(long)]
    pub domain: Option<String>,
    /// Use an existing dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Episodes to simulate.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training episodes per partition.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Calibration episodes per partition.
    #[arg(long)]
    pub n_cal: Option<usize>,
    /// Test episodes per partition.
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Number of partitions (seeds 1..=k).
    #[arg(long)]
    pub partitions: Option<u64>,
    /// Explicit comma-separated partition seeds.
    #[arg(long)]
    pub partition_seeds: Option<String>,
    /// Forward miscoverage level.
    #[arg(long)]
    pub delta: Option<f64>,
    /// ECE bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Lower target quantile.
    #[arg(long)]
    pub q_lo: Option<f64>,
    /// Upper target quantile.
    #[arg(long)]
    pub q_hi: Option<f64>,
    /// Probability traces to keep.
    #[arg(long)]
    pub traces: Option<usize>,
    /// Forest settings.
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolves a relative output path under `$PCQR_OUT_ROOT`.
pub fn resolve_out(out: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if out.is_relative() && !root.is_empty() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<KeyValues> {
    Ok(match path {
        Some(p) => KeyValues::read(p)?,
        None => KeyValues::new(),
    })
}

fn number(kv: &KeyValues, key: &str, default: f64) -> anyhow::Result<f64> {
    Ok(kv.float_or(key, default)?)
}

fn target_from(kv: &KeyValues) -> anyhow::Result<TargetInterval> {
    let lo = number(kv, "target_lo", f64::NEG_INFINITY)?;
    let hi = number(kv, "target_hi", f64::INFINITY)?;
    TargetInterval::new(lo, hi).map_err(|e| anyhow!("target interval: {e}"))
}

fn write_config(dir: &Path, kv: &KeyValues) -> anyhow::Result<()> {
    write_atomic(&dir.join("config.txt"), kv.render().as_bytes())?;
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let mut kv = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(a, &mut kv),
        Command::Train(a) => train(a, &mut kv),
        Command::Predict(a) => predict(a, &mut kv),
        Command::Monitor(a) => monitor(a, &mut kv),
        Command::Evaluate(a) => evaluate(a, &mut kv),
    }
}

fn simulate(a: SimulateArgs, kv: &mut KeyValues) -> anyhow::Result<i32> {
    kv.set_opt("domain", a.domain);
    kv.set_opt("episodes", a.episodes);
    kv.set_opt("seed", a.seed);
    let domain = domain_from_kv(kv)?;
    let count: usize = kv.parsed_or("episodes", 10_000)?;
    let seed: u64 = kv.parsed_or("seed", 0)?;
    let episodes = generate_dataset(&domain, count, seed)?;
    let out = resolve_out(&a.out);
    let meta = DatasetMeta {
        domain,
        seed,
        episode_count: count,
    };
    write_dataset(&out, &episodes, &meta)?;
    let mut resolved = meta.to_kv();
    resolved.set("episodes", count);
    write_config(&out, &resolved)?;
    println!(
        "wrote {count} {} episodes to {}",
        meta.domain.name(),
        out.display()
    );
    Ok(0)
}

fn train(a: TrainArgs, kv: &mut KeyValues) -> anyhow::Result<i32> {
    kv.set_opt("partition_seed", a.partition_seed);
    kv.set_opt("n_train", a.n_train);
    kv.set_opt("n_cal", a.n_cal);
    a.forest.apply(kv);
    let (episodes, meta) = read_dataset(&a.data)?;
    let count = episodes.len();
    let n_train: usize = kv.parsed_or("n_train", count / 4)?;
    let n_cal: usize = kv.parsed_or("n_cal", count / 4)?;
    if n_train + n_cal > count {
        bail!("n_train + n_cal = {} exceeds the {count} episodes", n_train + n_cal);
    }
    let split_config = ExperimentConfig {
        episode_count: count,
        n_train,
        n_cal,
        n_test: count - n_train - n_cal,
        ..ExperimentConfig::default()
    };
    let seed: u64 = kv.parsed_or("partition_seed", 1)?;
    let forest = forest_from_kv(kv, &ExperimentConfig::default().forest)?;
    let split = partition(count, &split_config, seed)?;
    let (train, cal, _) = split.select(&episodes);
    let suite = build_monitor(&train, &cal, &forest)?;

    let out = resolve_out(&a.out);
    write_suite(&out.join(SUITE_FILE), &suite)?;
    write_partition_manifest(&out.join("partition.csv"), &split)?;
    write_scores(&out.join("scores_t0.csv"), &scores_at(&suite, 0)?)?;
    let mut resolved = meta.to_kv();
    resolved.extend(&forest_to_kv(&forest));
    resolved.set("partition_seed", seed);
    resolved.set("n_train", n_train);
    resolved.set("n_cal", n_cal);
    resolved.set("n_test", count - n_train - n_cal);
    resolved.set("data", a.data.display());
    write_config(&out, &resolved)?;
    println!(
        "trained {} timestep models (n_train={n_train}, n_cal={n_cal}) into {}",
        suite.horizon(),
        out.display()
    );
    Ok(0)
}

/// Conformity scores `|1/2 − α|` of the timestep-`t` calibration alphas.
pub fn scores_at(suite: &MonitorSuite, t: usize) -> anyhow::Result<ConformalScores> {
    let (_, alphas) = suite.at(t)?;
    Ok(ConformalScores::from_scores(
        alphas.values().iter().map(|&a| Score::from_cdf(a)).collect(),
    )?)
}

fn observation(
    path: &Path,
    episode: u64,
    t: usize,
) -> anyhow::Result<(Vec<f64>, f64)> {
    let (_, table) = read_table(path)?;
    let (_, ep) = table
        .into_iter()
        .find(|(id, _)| *id == episode)
        .ok_or_else(|| anyhow!("episode {episode} not found in {}", path.display()))?;
    if t >= ep.horizon() {
        bail!("episode {episode} has only {} observed steps", ep.horizon());
    }
    Ok((ep.features()[t].clone(), ep.cumulative()[t]))
}

fn read_table(path: &Path) -> anyhow::Result<EpisodeTable> {
    let file = if path.is_dir() {
        path.join(crate::dataset::EPISODES_FILE)
    } else {
        path.to_path_buf()
    };
    Ok(read_episode_table(&file)?)
}

fn predict(a: PredictArgs, kv: &mut KeyValues) -> anyhow::Result<i32> {
    kv.set_opt("target_lo", a.target_lo);
    kv.set_opt("target_hi", a.target_hi);
    kv.set_opt("delta", a.delta);
    let suite = read_suite(&a.suite.join(SUITE_FILE))?;
    let target = target_from(kv)?;
    let (x, b) = match (&a.features, &a.data, a.episode) {
        (Some(f), _, _) => {
            let x = f
                .split(',')
                .map(|s| parse_f64(s).ok_or_else(|| anyhow!("bad feature value {s:?}")))
                .collect::<anyhow::Result<Vec<f64>>>()?;
            let b = match &a.b {
                Some(s) => parse_f64(s).ok_or_else(|| anyhow!("bad --b value {s:?}"))?,
                None => 0.0,
            };
            (x, b)
        }
        (None, Some(path), Some(id)) => observation(path, id, a.t)?,
        _ => bail!("give either --features or --data with --episode"),
    };
    if !b.is_finite() {
        bail!("b_t must be finite");
    }
    let bounds = suite.step_probability(a.t, &x, b, &target)?;
    let mut line = format!(
        "t={} p_lower={} p_upper={} rank_lo={} rank_hi={} n={}",
        a.t,
        fmt_f64(bounds.p_lower),
        fmt_f64(bounds.p_upper),
        bounds.rank_lo,
        bounds.rank_hi,
        bounds.n
    );
    if let Some(delta) = kv.float("delta")? {
        let (model, _) = suite.at(a.t)?;
        let scores = scores_at(&suite, a.t)?;
        for (name, kind) in [("i_minus", IntervalKind::Lower), ("i_plus", IntervalKind::Upper)] {
            let iv = pcqr_interval(model, &scores, &x, delta, kind)?;
            line.push_str(&format!(
                " {name}_lo={} {name}_hi={}",
                fmt_f64(iv.lo + b),
                fmt_f64(iv.hi + b)
            ));
            if iv.clamped {
                eprintln!(
                    "warning: {name} order statistic clamped to n={}; delta is below 1/(n+1)",
                    scores.n()
                );
                line.push_str(&format!(" {name}_clamped=true"));
            }
        }
    }
    println!("{line}");
    Ok(0)
}

fn monitor(a: MonitorArgs, kv: &mut KeyValues) -> anyhow::Result<i32> {
    kv.set_opt("target_lo", a.target_lo);
    kv.set_opt("target_hi", a.target_hi);
    kv.set_opt("threshold", a.threshold);
    kv.set_opt(
        "mode",
        a.mode.map(|m| match m {
            ModeArg::First => "first",
            ModeArg::Every => "every",
        }),
    );
    let suite = read_suite(&a.suite.join(SUITE_FILE))?;
    let target = target_from(kv)?;
    let threshold = number(kv, "threshold", 0.5)?;
    let mode = match kv.get("mode").unwrap_or("first") {
        "first" => AlarmMode::FirstCrossing,
        "every" => AlarmMode::EveryStep,
        other => bail!("mode must be first or every, got {other:?}"),
    };
    let (names, table) = read_table(&a.stream)?;
    if names.len() != suite.n_features() {
        bail!(
            "stream has {} feature columns, suite expects {}",
            names.len(),
            suite.n_features()
        );
    }
    let selected: Vec<_> = table
        .into_iter()
        .filter(|(id, _)| a.episode.is_none_or(|e| e == *id))
        .collect();
    if selected.is_empty() {
        bail!("no matching episodes in {}", a.stream.display());
    }
    let mut bounds = Vec::new();
    let mut alarms = Vec::new();
    for (id, ep) in &selected {
        if ep.horizon() > suite.horizon() {
            bail!(
                "episode {id} has {} steps but the suite covers {}",
                ep.horizon(),
                suite.horizon()
            );
        }
        let out = monitor_episode(&suite, *id, ep.observations(), target, threshold, mode)
            .with_context(|| format!("episode {id}"))?;
        bounds.extend(out.bounds.into_iter().map(|(t, b)| (*id, t, b)));
        alarms.extend(out.alarms);
    }
    let out = resolve_out(&a.out);
    write_atomic(
        &out.join("bounds.csv"),
        &bounds_csv(bounds.iter().map(|(id, t, b)| (*id, *t, b))),
    )?;
    write_atomic(&out.join("alarms.csv"), &alarms_csv(&alarms))?;
    let mut resolved = KeyValues::new();
    resolved.set("target_lo", fmt_f64(target.y_minus));
    resolved.set("target_hi", fmt_f64(target.y_plus));
    resolved.set("threshold", fmt_f64(threshold));
    resolved.set("mode", kv.get("mode").unwrap_or("first"));
    resolved.set("suite", a.suite.display());
    resolved.set("stream", a.stream.display());
    write_config(&out, &resolved)?;
    match alarms.first() {
        Some(first) => {
            println!(
                "alarms={} first_episode={} first_t={} p_lower={}",
                alarms.len(),
                first.episode_id,
                first.t,
                fmt_f64(first.p_lower)
            );
            Ok(EXIT_ALARM)
        }
        None => {
            println!("alarms=0");
            Ok(0)
        }
    }
}

fn evaluate(a: EvaluateArgs, kv: &mut KeyValues) -> anyhow::Result<i32> {
    kv.set_opt("domain", a.domain);
    kv.set_opt("episodes", a.episodes);
    kv.set_opt("seed", a.seed);
    kv.set_opt("n_train", a.n_train);
    kv.set_opt("n_cal", a.n_cal);
    kv.set_opt("n_test", a.n_test);
    kv.set_opt("partitions", a.partitions);
    kv.set_opt("partition_seeds", a.partition_seeds);
    kv.set_opt("delta", a.delta);
    kv.set_opt("bins", a.bins);
    kv.set_opt("q_lo", a.q_lo);
    kv.set_opt("q_hi", a.q_hi);
    kv.set_opt("trace_count", a.traces);
    a.forest.apply(kv);

    let (episodes, domain_kv, name) = match &a.data {
        Some(dir) => {
            let (episodes, meta) = read_dataset(dir)?;
            kv.set("episodes", episodes.len());
            kv.set("seed", meta.seed);
            let mut d = meta.to_kv();
            d.set("data", dir.display());
            (episodes, d, meta.domain.name())
        }
        None => {
            if kv.get("domain").is_none() {
                kv.set("domain", "tamarisk");
            }
            let domain = domain_from_kv(kv)?;
            let config = experiment_from_kv(kv, &ExperimentConfig::default())?;
            let episodes = generate_dataset(&domain, config.episode_count, config.data_seed)?;
            (episodes, domain_to_kv(&domain), domain.name())
        }
    };
    let config = experiment_from_kv(kv, &ExperimentConfig::default())?;
    let report = evaluate_episodes(name, &episodes, &config)?;
    let mut resolved = domain_kv;
    resolved.extend(&experiment_to_kv(&config));
    let out = resolve_out(&a.out);
    write_report(&out, &report, &resolved)?;
    write_config(&out, &resolved)?;
    print_summary(&report);
    Ok(0)
}

fn print_summary(report: &pcqr_core::eval::CalibrationReport) {
    let s = summary(report);
    let get = |k: &str| s.get(k).and_then(parse_f64).unwrap_or(f64::NAN);
    println!("domain                 {}", report.domain);
    println!("partitions             {}", report.partitions.len());
    println!(
        "forward coverage       {:.4} ± {:.4}",
        get("forward_coverage_mean"),
        get("forward_coverage_std")
    );
    println!(
        "pooled ECE (p_lower)   {:.4} ± {:.4}",
        get("pooled_ece_lower_mean"),
        get("pooled_ece_lower_std")
    );
    println!(
        "pooled ECE (p_upper)   {:.4} ± {:.4}",
        get("pooled_ece_upper_mean"),
        get("pooled_ece_upper_std")
    );
    println!(
        "max |mean p_lower-0.8| {:.4}",
        get("mean_coverage_max_abs_dev_from_0.8")
    );
    println!(
        "converged at t=H-1     {:.4} ({}/{})",
        report.convergence.fraction(),
        report.convergence.converged,
        report.convergence.eligible
    );
}
