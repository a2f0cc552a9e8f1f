//! Episode datasets: `episodes.csv` plus `metadata.txt`.
//!
//! `episodes.csv` has one row per `(episode_id, t)` with columns
//! `episode_id,t,<features...>,reward,cumulative`, where `cumulative` is
//! `b_{t+1}`, the running return after the step. Floats are written in
//! shortest round-trip form, so reading a file back is bit-exact.

use std::path::Path;

use pcqr_core::sim::{DomainConfig, Episode, RNG_ALGORITHM};

use crate::fsutil::{csv_bytes, fmt_f64, parse_f64, read, write_atomic};
use crate::kv::KeyValues;
use crate::settings::{domain_from_kv, domain_to_kv};
use crate::{Error, Result};

/// Episode table file name.
pub const EPISODES_FILE: &str = "episodes.csv";
/// Metadata file name.
pub const METADATA_FILE: &str = "metadata.txt";
/// Dataset schema version.
pub const DATASET_SCHEMA: u32 = 1;

/// Provenance of a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    /// Simulator configuration.
    pub domain: DomainConfig,
    /// Dataset seed.
    pub seed: u64,
    /// Number of episodes.
    pub episode_count: usize,
}

impl DatasetMeta {
    /// Metadata as key-value pairs.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = domain_to_kv(&self.domain);
        kv.set("schema_version", DATASET_SCHEMA);
        kv.set("seed", self.seed);
        kv.set("episode_count", self.episode_count);
        kv.set("horizon", self.domain.horizon());
        kv.set("noise_half_width", fmt_f64(self.domain.noise_half_width()));
        kv.set("rng", RNG_ALGORITHM);
        kv.set("features", self.domain.feature_names().join(","));
        kv
    }

    fn from_kv(kv: &KeyValues, path: &Path) -> Result<Self> {
        let version: u32 = kv.parsed_or("schema_version", 0)?;
        if version != DATASET_SCHEMA {
            return Err(Error::format(path, format!("unsupported schema_version {version}")));
        }
        let mut domain_kv = KeyValues::new();
        for key in ["domain"]
            .into_iter()
            .chain(kv.keys_with_prefix("tamarisk."))
            .chain(kv.keys_with_prefix("skirmish."))
        {
            domain_kv.set(key, kv.get(key).unwrap_or_default());
        }
        Ok(Self {
            domain: domain_from_kv(&domain_kv)?,
            seed: kv.parsed("seed")?.ok_or_else(|| Error::format(path, "missing seed"))?,
            episode_count: kv
                .parsed("episode_count")?
                .ok_or_else(|| Error::format(path, "missing episode_count"))?,
        })
    }
}

/// Feature column names stored in a dataset header.
pub fn header(feature_names: &[String]) -> Vec<String> {
    let mut h = vec!["episode_id".to_string(), "t".to_string()];
    h.extend(feature_names.iter().cloned());
    h.push("reward".into());
    h.push("cumulative".into());
    h
}

/// Encodes episodes as CSV with ids `0, 1, …`.
pub fn episodes_csv(episodes: &[Episode], feature_names: &[String]) -> Vec<u8> {
    let head = header(feature_names);
    let head: Vec<&str> = head.iter().map(String::as_str).collect();
    let rows = episodes.iter().enumerate().flat_map(|(id, e)| {
        (0..e.horizon()).map(move |t| {
            let mut row = vec![id.to_string(), t.to_string()];
            row.extend(e.features()[t].iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(e.rewards()[t]));
            row.push(fmt_f64(e.cumulative()[t + 1]));
            row
        })
    });
    csv_bytes(&head, rows)
}

/// Writes `episodes.csv` and `metadata.txt` into `dir`.
pub fn write_dataset(dir: &Path, episodes: &[Episode], meta: &DatasetMeta) -> Result<()> {
    let names = meta.domain.feature_names();
    write_atomic(&dir.join(EPISODES_FILE), &episodes_csv(episodes, &names))?;
    write_atomic(&dir.join(METADATA_FILE), meta.to_kv().render().as_bytes())
}

/// Feature names and `(episode_id, episode)` pairs read from a table.
pub type EpisodeTable = (Vec<String>, Vec<(u64, Episode)>);

/// Episodes in an episode table, keyed by id. Episodes may have different
/// lengths; each must list `t = 0, 1, …` in order, and the `cumulative`
/// column must equal the running sum of rewards exactly.
pub fn read_episode_table(path: &Path) -> Result<EpisodeTable> {
    let bytes = read(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let bad = |msg: String| Error::format(path, msg);
    let head = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if head.len() < 5
        || head[0] != "episode_id"
        || head[1] != "t"
        || head[head.len() - 2] != "reward"
        || head[head.len() - 1] != "cumulative"
    {
        return Err(bad("header must be episode_id,t,<features...>,reward,cumulative".into()));
    }
    let d = head.len() - 4;
    let names = head[2..2 + d].to_vec();

    struct Partial {
        id: u64,
        features: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        cumulative: Vec<f64>,
    }
    let mut done: Vec<(u64, Episode)> = Vec::new();
    let mut cur: Option<Partial> = None;
    let finish = |p: Partial, done: &mut Vec<(u64, Episode)>| -> Result<()> {
        let ep = Episode::new(p.features, p.rewards)?;
        if ep.cumulative()[1..] != p.cumulative[..] {
            return Err(Error::format(
                path,
                format!("episode {}: cumulative column is not the running sum of rewards", p.id),
            ));
        }
        done.push((p.id, ep));
        Ok(())
    };
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let at = |msg: &str| bad(format!("row {}: {msg}", line + 1));
        if record.len() != head.len() {
            return Err(at("wrong number of columns"));
        }
        let id: u64 = record[0].parse().map_err(|_| at("bad episode_id"))?;
        let t: usize = record[1].parse().map_err(|_| at("bad t"))?;
        let nums = record
            .iter()
            .skip(2)
            .map(|s| parse_f64(s).ok_or_else(|| at("bad number")))
            .collect::<Result<Vec<f64>>>()?;
        if cur.as_ref().is_none_or(|p| p.id != id) {
            if let Some(p) = cur.take() {
                finish(p, &mut done)?;
            }
            if done.iter().any(|(i, _)| *i == id) {
                return Err(at("episode rows are not contiguous"));
            }
            cur = Some(Partial {
                id,
                features: Vec::new(),
                rewards: Vec::new(),
                cumulative: Vec::new(),
            });
        }
        let p = cur.as_mut().expect("set above");
        if t != p.features.len() {
            return Err(at("timesteps must start at 0 and increase by 1"));
        }
        p.features.push(nums[..d].to_vec());
        p.rewards.push(nums[d]);
        p.cumulative.push(nums[d + 1]);
    }
    if let Some(p) = cur.take() {
        finish(p, &mut done)?;
    }
    Ok((names, done))
}

/// Reads a dataset written by [`write_dataset`]. Episode ids must be
/// `0 … count−1` in order and agree with the metadata.
pub fn read_dataset(dir: &Path) -> Result<(Vec<Episode>, DatasetMeta)> {
    let meta_path = dir.join(METADATA_FILE);
    let meta = DatasetMeta::from_kv(&KeyValues::read(&meta_path)?, &meta_path)?;
    let path = dir.join(EPISODES_FILE);
    let (names, table) = read_episode_table(&path)?;
    if names != meta.domain.feature_names() {
        return Err(Error::format(&path, "feature columns do not match metadata"));
    }
    if table.len() != meta.episode_count {
        return Err(Error::format(
            &path,
            format!("{} episodes, metadata says {}", table.len(), meta.episode_count),
        ));
    }
    let h = meta.domain.horizon();
    let mut episodes = Vec::with_capacity(table.len());
    for (i, (id, e)) in table.into_iter().enumerate() {
        if id != i as u64 {
            return Err(Error::format(&path, format!("expected episode id {i}, found {id}")));
        }
        if e.horizon() != h {
            return Err(Error::format(&path, format!("episode {id} has {} steps, expected {h}", e.horizon())));
        }
        episodes.push(e);
    }
    Ok((episodes, meta))
}
