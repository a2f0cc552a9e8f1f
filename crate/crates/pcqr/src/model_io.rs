//! Binary model files: an 8-byte magic tag, a little-endian `u32` format
//! version, then a bincode payload. Decoding re-validates every structural
//! invariant through the core constructors.

use std::path::Path;

use pcqr_core::forest::{CdfValue, ForestModel, Node, Tree};
use pcqr_core::inverse::CalibrationAlphas;
use pcqr_core::monitor::MonitorSuite;
use serde::{Deserialize, Serialize};

use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

/// Magic tag of a single-forest file.
pub const MODEL_MAGIC: &[u8; 8] = b"PCQRFRST";
/// Magic tag of a monitor suite file.
pub const SUITE_MAGIC: &[u8; 8] = b"PCQRSUIT";
/// Current binary format version.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
enum NodeRecord {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        rows: Vec<u32>,
    },
}

#[derive(Serialize, Deserialize)]
struct ForestRecord {
    n_features: u32,
    trees: Vec<Vec<NodeRecord>>,
    sorted_responses: Vec<f64>,
    sorted_rows: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct SuiteRecord {
    models: Vec<ForestRecord>,
    alphas: Vec<Vec<(f64, f64)>>,
}

fn forest_record(m: &ForestModel) -> ForestRecord {
    ForestRecord {
        n_features: m.n_features() as u32,
        trees: m
            .trees()
            .iter()
            .map(|t| {
                t.nodes()
                    .iter()
                    .map(|n| match n {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => NodeRecord::Split {
                            feature: *feature as u32,
                            threshold: *threshold,
                            left: *left as u32,
                            right: *right as u32,
                        },
                        Node::Leaf { rows } => NodeRecord::Leaf { rows: rows.clone() },
                    })
                    .collect()
            })
            .collect(),
        sorted_responses: m.sorted_responses().to_vec(),
        sorted_rows: m.sorted_rows().to_vec(),
    }
}

fn forest_from_record(r: ForestRecord) -> Result<ForestModel> {
    let trees = r
        .trees
        .into_iter()
        .map(|nodes| {
            Tree::new(
                nodes
                    .into_iter()
                    .map(|n| match n {
                        NodeRecord::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => Node::Split {
                            feature: feature as usize,
                            threshold,
                            left: left as usize,
                            right: right as usize,
                        },
                        NodeRecord::Leaf { rows } => Node::Leaf { rows },
                    })
                    .collect(),
            )
        })
        .collect::<pcqr_core::Result<Vec<_>>>()?;
    Ok(ForestModel::from_parts(
        r.n_features as usize,
        trees,
        r.sorted_responses,
        r.sorted_rows,
    )?)
}

fn frame<T: Serialize>(magic: &[u8; 8], payload: &T) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    // Serializing plain owned data into memory cannot fail.
    out.extend(bincode::serialize(payload).expect("in-memory bincode"));
    out
}

fn unframe<'a, T: Deserialize<'a>>(magic: &[u8; 8], bytes: &'a [u8], origin: &Path) -> Result<T> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(Error::format(origin, "not a pcqr model file of the expected kind"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::format(origin, format!("unsupported format version {version}")));
    }
    bincode::deserialize(&bytes[12..]).map_err(|e| Error::format(origin, e.to_string()))
}

/// Encodes one forest.
pub fn encode_model(model: &ForestModel) -> Vec<u8> {
    frame(MODEL_MAGIC, &forest_record(model))
}

/// Decodes one forest.
pub fn decode_model(bytes: &[u8]) -> Result<ForestModel> {
    forest_from_record(unframe(MODEL_MAGIC, bytes, Path::new("<model>"))?)
}

/// Encodes a monitor suite.
pub fn encode_suite(suite: &MonitorSuite) -> Vec<u8> {
    frame(
        SUITE_MAGIC,
        &SuiteRecord {
            models: suite.models().iter().map(forest_record).collect(),
            alphas: suite
                .alphas()
                .iter()
                .map(|a| a.values().iter().map(|v| (v.level, v.overshoot)).collect())
                .collect(),
        },
    )
}

fn decode_suite_at(bytes: &[u8], origin: &Path) -> Result<MonitorSuite> {
    let r: SuiteRecord = unframe(SUITE_MAGIC, bytes, origin)?;
    let models = r
        .models
        .into_iter()
        .map(forest_from_record)
        .collect::<Result<Vec<_>>>()?;
    let alphas = r
        .alphas
        .into_iter()
        .map(|v| {
            CalibrationAlphas::from_values(
                v.into_iter()
                    .map(|(level, overshoot)| CdfValue { level, overshoot })
                    .collect(),
            )
        })
        .collect::<pcqr_core::Result<Vec<_>>>()?;
    Ok(MonitorSuite::from_parts(models, alphas)?)
}

/// Decodes a monitor suite.
pub fn decode_suite(bytes: &[u8]) -> Result<MonitorSuite> {
    decode_suite_at(bytes, Path::new("<suite>"))
}

/// Writes a forest file.
pub fn write_model(path: &Path, model: &ForestModel) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

/// Reads a forest file.
pub fn read_model(path: &Path) -> Result<ForestModel> {
    let bytes = read(path)?;
    forest_from_record(unframe(MODEL_MAGIC, &bytes, path)?)
}

/// Writes a suite file.
pub fn write_suite(path: &Path, suite: &MonitorSuite) -> Result<()> {
    write_atomic(path, &encode_suite(suite))
}

/// Reads a suite file.
pub fn read_suite(path: &Path) -> Result<MonitorSuite> {
    decode_suite_at(&read(path)?, path)
}
