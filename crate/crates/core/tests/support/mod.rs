//! Brute-force reference implementations shared by integration tests.

#![allow(dead_code)]

use pcqr_core::conformal::IntervalKind;
use pcqr_core::forest::{CdfValue, ForestModel, Node};

/// Dense per-row weights by walking every tree by hand.
pub fn weights(model: &ForestModel, x: &[f64]) -> Vec<f64> {
    let n = model.n_rows();
    let trees = model.trees().len() as f64;
    let mut w = vec![0.0; n];
    for tree in model.trees() {
        let mut i = 0;
        let rows = loop {
            match &tree.nodes()[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { rows } => break rows,
            }
        };
        for &p in rows {
            w[model.sorted_rows()[p as usize] as usize] += 1.0 / rows.len() as f64 / trees;
        }
    }
    w
}

/// Distinct positive-weight responses with normalized cumulative weights.
pub fn knots(responses: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = responses
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&v, &w)| (v, w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut acc = 0.0;
    for (v, w) in pairs {
        acc += w;
        match out.last_mut() {
            Some(k) if k.0 == v => k.1 = acc / total,
            _ => out.push((v, acc / total)),
        }
    }
    out
}

/// Interpolated CDF level between knots; 0 below and 1 at or above the top.
pub fn cdf(knots: &[(f64, f64)], y: f64) -> f64 {
    if y < knots[0].0 {
        return 0.0;
    }
    for k in knots.windows(2) {
        if y < k[1].0 {
            return k[0].1 + (k[1].1 - k[0].1) * (y - k[0].0) / (k[1].0 - k[0].0);
        }
    }
    1.0
}

/// `inf { y ≥ v_1 : cdf(y) ≥ α }` solved segment by segment.
pub fn quantile(knots: &[(f64, f64)], alpha: f64) -> f64 {
    if alpha <= knots[0].1 {
        return knots[0].0;
    }
    for k in knots.windows(2) {
        if alpha <= k[1].1 {
            return k[0].0 + (alpha - k[0].1) / (k[1].1 - k[0].1) * (k[1].0 - k[0].0);
        }
    }
    knots[knots.len() - 1].0
}

/// Unclamped 1-based order statistic for `δ = num/den` by scanning every
/// candidate in `1..=n+1` with integer arithmetic, or `None` when the floor
/// is 0.
pub fn interval_index(n: usize, num: u64, den: u64, kind: IntervalKind) -> Option<usize> {
    let target = (den - num) * (n as u64 + 1);
    let ks = 1..=n + 1;
    match kind {
        IntervalKind::Lower => ks.filter(|&k| k as u64 * den <= target).max(),
        IntervalKind::Upper => ks.into_iter().find(|&k| k as u64 * den >= target),
    }
}

/// `(p⁻, p⁺)` by counting calibration values inside `[a_lo, a_hi]`.
pub fn bounds(alphas: &[CdfValue], a_lo: CdfValue, a_hi: CdfValue) -> (f64, f64) {
    let inside = alphas.iter().filter(|&&a| a_lo <= a && a <= a_hi).count() as f64;
    let denom = alphas.len() as f64 + 1.0;
    (
        ((inside - 1.0) / denom).clamp(0.0, 1.0),
        ((inside + 1.0) / denom).clamp(0.0, 1.0),
    )
}
