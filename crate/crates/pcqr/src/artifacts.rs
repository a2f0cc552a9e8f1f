//! Small delimited-text artifacts: partition manifests, calibration score
//! exports, monitor traces and alarm logs.

use std::path::Path;

use pcqr_core::conformal::ConformalScores;
use pcqr_core::eval::Partition;
use pcqr_core::inverse::CoverageBounds;
use pcqr_core::monitor::AlarmEvent;

use crate::fsutil::{csv_bytes, fmt_f64, read, write_atomic};
use crate::{Error, Result};

/// Writes `episode_id,role` rows, `role` being `train`, `cal` or `test`.
pub fn write_partition_manifest(path: &Path, p: &Partition) -> Result<()> {
    let rows = [("train", &p.train), ("cal", &p.cal), ("test", &p.test)]
        .into_iter()
        .flat_map(|(role, ids)| ids.iter().map(move |i| vec![i.to_string(), role.to_string()]));
    write_atomic(path, &csv_bytes(&["episode_id", "role"], rows))
}

/// Reads a manifest written by [`write_partition_manifest`].
pub fn read_partition_manifest(path: &Path) -> Result<Partition> {
    let bytes = read(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let mut p = Partition {
        train: Vec::new(),
        cal: Vec::new(),
        test: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let id: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "bad episode_id"))?;
        match record.get(1) {
            Some("train") => p.train.push(id),
            Some("cal") => p.cal.push(id),
            Some("test") => p.test.push(id),
            _ => return Err(Error::format(path, "role must be train, cal or test")),
        }
    }
    Ok(p)
}

/// Writes sorted calibration scores, one per line.
pub fn write_scores(path: &Path, scores: &ConformalScores) -> Result<()> {
    let rows = scores
        .scores()
        .iter()
        .map(|s| vec![fmt_f64(s.value), fmt_f64(s.overshoot)]);
    write_atomic(path, &csv_bytes(&["score", "overshoot"], rows))
}

/// CSV of per-step bounds: `episode_id,t,p_lower,p_upper,rank_lo,rank_hi,n`.
pub fn bounds_csv<'a>(rows: impl IntoIterator<Item = (u64, usize, &'a CoverageBounds)>) -> Vec<u8> {
    csv_bytes(
        &["episode_id", "t", "p_lower", "p_upper", "rank_lo", "rank_hi", "n"],
        rows.into_iter().map(|(id, t, b)| {
            vec![
                id.to_string(),
                t.to_string(),
                fmt_f64(b.p_lower),
                fmt_f64(b.p_upper),
                b.rank_lo.to_string(),
                b.rank_hi.to_string(),
                b.n.to_string(),
            ]
        }),
    )
}

/// Alarm log: `episode_id,t,p_lower,p_upper,threshold`.
pub fn alarms_csv<'a>(events: impl IntoIterator<Item = &'a AlarmEvent>) -> Vec<u8> {
    csv_bytes(
        &["episode_id", "t", "p_lower", "p_upper", "threshold"],
        events.into_iter().map(|a| {
            vec![
                a.episode_id.to_string(),
                a.t.to_string(),
                fmt_f64(a.p_lower),
                fmt_f64(a.p_upper),
                fmt_f64(a.threshold),
            ]
        }),
    )
}
