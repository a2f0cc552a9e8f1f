//! Report directories written by `pcqr evaluate`.
//!
//! | file | columns |
//! |------|---------|
//! | `forward_coverage.csv` | `partition,seed,coverage,target_lo,target_hi,inside_fraction,pooled_ece_lower,pooled_ece_upper` |
//! | `ece_vs_time.csv` | `t,ece_lower_mean,ece_lower_std,ece_upper_mean,ece_upper_std` |
//! | `ece_by_partition.csv` | `partition,t,bound,ece` |
//! | `reliability_bins.csv` | `bin_lo,bin_hi,count,mean_pred,observed_freq` |
//! | `traces.csv` | `partition,episode_id,t,p_lower,p_upper,final_return,inside` |
//! | `mean_coverage_vs_time.csv` | `t,p_lower_mean,p_lower_std,p_upper_mean` |
//! | `summary.txt` | `key=value` summary and the resolved configuration |
//!
//! `summary.txt` carries `schema_version`; it changes whenever a column is
//! added, removed or reinterpreted.

use std::path::Path;

use pcqr_core::eval::CalibrationReport;

use crate::fsutil::{csv_bytes, fmt_f64, write_atomic};
use crate::kv::KeyValues;
use crate::Result;

/// Report schema version.
pub const REPORT_SCHEMA: u32 = 1;

fn f(v: f64) -> String {
    fmt_f64(v)
}

/// Summary entries (without the configuration).
pub fn summary(report: &CalibrationReport) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("schema_version", REPORT_SCHEMA);
    kv.set("domain", &report.domain);
    kv.set("horizon", report.horizon);
    kv.set("n_cal", report.n_cal);
    kv.set("partitions", report.partitions.len());
    let fc = report.forward_coverage();
    kv.set("forward_coverage_mean", f(fc.mean));
    kv.set("forward_coverage_std", f(fc.std));
    let lo = report.pooled_ece_lower();
    let hi = report.pooled_ece_upper();
    kv.set("pooled_ece_lower_mean", f(lo.mean));
    kv.set("pooled_ece_lower_std", f(lo.std));
    kv.set("pooled_ece_upper_mean", f(hi.mean));
    kv.set("pooled_ece_upper_std", f(hi.std));
    kv.set("all_pooled_ece_lower", f(report.pooled_lower.ece()));
    kv.set("all_pooled_ece_upper", f(report.pooled_upper.ece()));
    let worst = (0..report.horizon)
        .map(|t| (report.mean_coverage_at(t).mean - 0.8).abs())
        .fold(0.0, f64::max);
    kv.set("mean_coverage_max_abs_dev_from_0.8", f(worst));
    kv.set("convergence_eligible", report.convergence.eligible);
    kv.set("convergence_converged", report.convergence.converged);
    kv.set("convergence_fraction", f(report.convergence.fraction()));
    kv
}

/// Writes all report tables and `summary.txt` (summary plus `config`
/// entries prefixed with `config.`) into `dir`.
pub fn write_report(dir: &Path, report: &CalibrationReport, config: &KeyValues) -> Result<()> {
    let h = report.horizon;

    let rows = report.partitions.iter().enumerate().map(|(k, p)| {
        vec![
            k.to_string(),
            p.seed.to_string(),
            f(p.forward_coverage),
            f(p.target.y_minus),
            f(p.target.y_plus),
            f(p.inside_fraction),
            f(p.pooled_ece_lower),
            f(p.pooled_ece_upper),
        ]
    });
    write_atomic(
        &dir.join("forward_coverage.csv"),
        &csv_bytes(
            &[
                "partition",
                "seed",
                "coverage",
                "target_lo",
                "target_hi",
                "inside_fraction",
                "pooled_ece_lower",
                "pooled_ece_upper",
            ],
            rows,
        ),
    )?;

    let rows = (0..h).map(|t| {
        let (lo, hi) = report.ece_at(t);
        vec![t.to_string(), f(lo.mean), f(lo.std), f(hi.mean), f(hi.std)]
    });
    write_atomic(
        &dir.join("ece_vs_time.csv"),
        &csv_bytes(
            &["t", "ece_lower_mean", "ece_lower_std", "ece_upper_mean", "ece_upper_std"],
            rows,
        ),
    )?;

    let rows = report.partitions.iter().enumerate().flat_map(|(k, p)| {
        (0..h).flat_map(move |t| {
            [("lower", p.ece_lower[t]), ("upper", p.ece_upper[t])]
                .map(|(bound, e)| vec![k.to_string(), t.to_string(), bound.to_string(), f(e)])
        })
    });
    write_atomic(
        &dir.join("ece_by_partition.csv"),
        &csv_bytes(&["partition", "t", "bound", "ece"], rows),
    )?;

    let rows = report.reliability().into_iter().map(|b| {
        vec![
            f(b.lo),
            f(b.hi),
            b.count.to_string(),
            f(b.mean_pred),
            f(b.observed_freq),
        ]
    });
    write_atomic(
        &dir.join("reliability_bins.csv"),
        &csv_bytes(&["bin_lo", "bin_hi", "count", "mean_pred", "observed_freq"], rows),
    )?;

    let rows = report.traces.iter().flat_map(|tr| {
        (0..tr.p_lower.len()).map(move |t| {
            vec![
                tr.partition.to_string(),
                tr.episode.to_string(),
                t.to_string(),
                f(tr.p_lower[t]),
                f(tr.p_upper[t]),
                f(tr.final_return),
                u8::from(tr.inside).to_string(),
            ]
        })
    });
    write_atomic(
        &dir.join("traces.csv"),
        &csv_bytes(
            &["partition", "episode_id", "t", "p_lower", "p_upper", "final_return", "inside"],
            rows,
        ),
    )?;

    let rows = (0..h).map(|t| {
        let lo = report.mean_coverage_at(t);
        let hi: f64 = report.partitions.iter().map(|p| p.mean_p_upper[t]).sum::<f64>()
            / report.partitions.len() as f64;
        vec![t.to_string(), f(lo.mean), f(lo.std), f(hi)]
    });
    write_atomic(
        &dir.join("mean_coverage_vs_time.csv"),
        &csv_bytes(&["t", "p_lower_mean", "p_lower_std", "p_upper_mean"], rows),
    )?;

    let mut kv = summary(report);
    for (k, v) in config.iter() {
        kv.set(format!("config.{k}"), v);
    }
    write_atomic(&dir.join("summary.txt"), kv.render().as_bytes())
}
