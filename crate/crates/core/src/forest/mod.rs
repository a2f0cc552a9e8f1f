//! Quantile regression forests.
//!
//! Each tree is grown with CART variance-reduction splits on a bootstrap
//! sample. After growing, every original training row is dropped down the
//! tree so each leaf holds the set of training rows it contains. For a query
//! `x` a training row receives weight `1 / (T · |leaf_t(x)|)` from every tree
//! `t` whose leaf contains it.
//!
//! The weighted empirical CDF is made continuous by linear interpolation
//! between consecutive distinct response values: with knots
//! `v_1 < … < v_m` carrying cumulative weights `W_1 < … < W_m = 1`,
//!
//! ```text
//! F(y) = 0                                        y < v_1
//! F(y) = W_j + (W_{j+1} − W_j)(y − v_j)/(v_{j+1} − v_j)   v_j ≤ y ≤ v_{j+1}
//! F(y) = 1                                        y > v_m
//! ```
//!
//! Outside the support `F` saturates, which would make distinct responses
//! compare equal. [`CdfValue`] therefore also carries the signed distance
//! past the nearest support end (`overshoot`), and values are ordered
//! lexicographically. The pair is strictly increasing in `y` on the whole
//! real line while `level` is exactly the interpolated CDF.

mod grow;

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Result};

pub use grow::fit_forest;

/// Rows of `(features, response)` used to fit a forest.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    features: Vec<f64>,
    n_features: usize,
    responses: Vec<f64>,
}

impl TrainingSet {
    /// Builds a training set from per-row feature vectors.
    pub fn new(rows: &[Vec<f64>], responses: Vec<f64>) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for row in rows {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    actual: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, n_features, responses)
    }

    /// Builds a training set from a row-major feature matrix.
    pub fn from_flat(features: Vec<f64>, n_features: usize, responses: Vec<f64>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Invalid {
                name: "n_features",
                reason: "must be at least 1",
            });
        }
        if features.len() != responses.len() * n_features {
            return Err(Error::LengthMismatch {
                expected: responses.len() * n_features,
                actual: features.len(),
            });
        }
        if responses.len() < 2 {
            return Err(Error::TooFewRows(responses.len()));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if !responses.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("responses"));
        }
        Ok(Self {
            features,
            n_features,
            responses,
        })
    }

    /// Number of rows.
    pub fn n_rows(&self) -> usize {
        self.responses.len()
    }

    /// Feature dimension.
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Feature vector of row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Response of each row.
    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    #[inline]
    pub(crate) fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features + feature]
    }
}

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    /// Number of trees.
    pub tree_count: usize,
    /// Minimum number of (bootstrap) rows in a leaf.
    pub min_leaf_size: usize,
    /// Fraction of features examined at each split, in `(0, 1]`.
    pub feature_subsample: f64,
    /// Grow each tree on a bootstrap resample.
    pub bootstrap: bool,
    /// Base seed; tree `i` uses stream `i` of a ChaCha8 generator.
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            min_leaf_size: 5,
            feature_subsample: 1.0 / 3.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    /// Checks the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::Invalid {
                name: "tree_count",
                reason: "must be at least 1",
            });
        }
        if self.min_leaf_size == 0 {
            return Err(Error::Invalid {
                name: "min_leaf_size",
                reason: "must be at least 1",
            });
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(Error::Invalid {
                name: "feature_subsample",
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }

    /// Number of features examined per split for a `d`-dimensional input.
    pub fn features_per_split(&self, d: usize) -> usize {
        let k = libm::ceil(self.feature_subsample * d as f64) as usize;
        k.clamp(1, d.max(1))
    }
}

/// A tree node. Leaves list the training rows they contain as positions in
/// the model's ascending response order.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Internal node: rows with `x[feature] <= threshold` go left.
    Split {
        /// Feature index.
        feature: usize,
        /// Split threshold.
        threshold: f64,
        /// Index of the left child.
        left: usize,
        /// Index of the right child.
        right: usize,
    },
    /// Terminal node.
    Leaf {
        /// Sorted response positions of the training rows in this leaf.
        rows: Vec<u32>,
    },
}

/// A binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Wraps a node list, checking that child links point forward.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("tree"));
        }
        for (i, node) in nodes.iter().enumerate() {
            match node {
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    if *left <= i || *right <= i || *left >= nodes.len() || *right >= nodes.len() {
                        return Err(Error::Invalid {
                            name: "tree",
                            reason: "child index must point to a later node",
                        });
                    }
                    if !threshold.is_finite() {
                        return Err(Error::NonFinite("split threshold"));
                    }
                }
                Node::Leaf { rows } => {
                    if rows.is_empty() {
                        return Err(Error::Invalid {
                            name: "tree",
                            reason: "leaf holds no training rows",
                        });
                    }
                    if rows.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Invalid {
                            name: "tree",
                            reason: "leaf rows must be strictly ascending",
                        });
                    }
                }
            }
        }
        Ok(Self { nodes })
    }

    /// All nodes, root first.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Rows of the leaf that `x` falls into.
    pub fn leaf(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { rows } => return rows,
            }
        }
    }

    fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { rows } => Some(rows.as_slice()),
            Node::Split { .. } => None,
        })
    }
}

/// Conditional CDF evaluation: the interpolated level plus the signed
/// distance past the support when the level saturates at 0 or 1.
///
/// Ordering is lexicographic on `(level, overshoot)`.
#[derive(Debug, Clone, Copy)]
pub struct CdfValue {
    /// Interpolated weighted CDF, in `[0, 1]`.
    pub level: f64,
    /// `y − v_1` (negative) below the support, `y − v_m` (non-negative)
    /// at or above its top, 0 otherwise.
    pub overshoot: f64,
}

impl CdfValue {
    /// A value strictly inside the support.
    pub fn interior(level: f64) -> Self {
        Self {
            level,
            overshoot: 0.0,
        }
    }

    /// The key for a bare probability level. `0` and `1` map to the far ends
    /// of the saturated tails so they bound every attainable value.
    pub fn from_level(p: f64) -> Self {
        if p <= 0.0 {
            Self {
                level: 0.0,
                overshoot: f64::NEG_INFINITY,
            }
        } else if p >= 1.0 {
            Self {
                level: 1.0,
                overshoot: f64::INFINITY,
            }
        } else {
            Self::interior(p)
        }
    }
}

impl PartialEq for CdfValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CdfValue {}

impl PartialOrd for CdfValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CdfValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.level
            .total_cmp(&other.level)
            .then(self.overshoot.total_cmp(&other.overshoot))
    }
}

/// A fitted quantile regression forest. Immutable after fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    n_features: usize,
    trees: Vec<Tree>,
    sorted_responses: Vec<f64>,
    sorted_rows: Vec<u32>,
}

impl ForestModel {
    /// Reassembles a model from its parts (used by deserialization).
    ///
    /// `sorted_responses` must be ascending and `sorted_rows[p]` is the
    /// original row index of position `p`. Every position must appear in
    /// exactly one leaf of every tree.
    pub fn from_parts(
        n_features: usize,
        trees: Vec<Tree>,
        sorted_responses: Vec<f64>,
        sorted_rows: Vec<u32>,
    ) -> Result<Self> {
        let n = sorted_responses.len();
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        if sorted_rows.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: sorted_rows.len(),
            });
        }
        if n_features == 0 || trees.is_empty() {
            return Err(Error::Invalid {
                name: "model",
                reason: "needs at least one feature and one tree",
            });
        }
        if !sorted_responses.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("responses"));
        }
        if sorted_responses.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid {
                name: "sorted_responses",
                reason: "must be ascending",
            });
        }
        let mut seen = vec![false; n];
        for &r in &sorted_rows {
            let r = r as usize;
            if r >= n || core::mem::replace(&mut seen[r], true) {
                return Err(Error::Invalid {
                    name: "sorted_rows",
                    reason: "must be a permutation of the row indices",
                });
            }
        }
        for tree in &trees {
            let mut count = vec![0u32; n];
            for node in tree.nodes() {
                match node {
                    Node::Split { feature, .. } if *feature >= n_features => {
                        return Err(Error::Invalid {
                            name: "tree",
                            reason: "split feature out of range",
                        });
                    }
                    Node::Leaf { rows } => {
                        for &p in rows {
                            let p = p as usize;
                            if p >= n {
                                return Err(Error::Invalid {
                                    name: "tree",
                                    reason: "leaf row out of range",
                                });
                            }
                            count[p] += 1;
                        }
                    }
                    Node::Split { .. } => {}
                }
            }
            if count.iter().any(|&c| c != 1) {
                return Err(Error::Invalid {
                    name: "tree",
                    reason: "every training row must sit in exactly one leaf",
                });
            }
        }
        Ok(Self {
            n_features,
            trees,
            sorted_responses,
            sorted_rows,
        })
    }

    /// Feature dimension the model was trained on.
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Number of training rows.
    pub fn n_rows(&self) -> usize {
        self.sorted_responses.len()
    }

    /// The trees.
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Training responses in ascending order.
    pub fn sorted_responses(&self) -> &[f64] {
        &self.sorted_responses
    }

    /// Original row index of each position in [`Self::sorted_responses`].
    pub fn sorted_rows(&self) -> &[u32] {
        &self.sorted_rows
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("query features"));
        }
        Ok(())
    }

    fn leaves_for<'a>(&'a self, x: &[f64]) -> Vec<&'a [u32]> {
        self.trees.iter().map(|t| t.leaf(x)).collect()
    }

    /// Weight of each training row (by original index) for query `x`.
    pub fn leaf_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut weights = vec![0.0; self.n_rows()];
        let t = self.trees.len() as f64;
        for leaf in self.leaves_for(x) {
            let w = 1.0 / (t * leaf.len() as f64);
            for &p in leaf {
                weights[self.sorted_rows[p as usize] as usize] += w;
            }
        }
        Ok(weights)
    }

    /// The full interpolated conditional distribution at `x`.
    pub fn conditional(&self, x: &[f64]) -> Result<ConditionalCdf> {
        self.check_dim(x)?;
        let t = self.trees.len() as f64;
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for leaf in self.leaves_for(x) {
            let w = 1.0 / (t * leaf.len() as f64);
            entries.extend(leaf.iter().map(|&p| (p, w)));
        }
        entries.sort_unstable_by_key(|e| e.0);
        let mut values: Vec<f64> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for (p, w) in entries {
            let v = self.sorted_responses[p as usize];
            match values.last() {
                Some(&last) if last == v => *mass.last_mut().unwrap() += w,
                _ => {
                    values.push(v);
                    mass.push(w);
                }
            }
        }
        let total: f64 = mass.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = mass
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(ConditionalCdf { values, cumulative })
    }

    /// Interpolated conditional CDF level `F̂(y | x)`.
    pub fn cdf(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.cdf_value(x, y)?.level)
    }

    /// Conditional CDF at `y` including the overshoot tie-breaker.
    pub fn cdf_value(&self, x: &[f64], y: f64) -> Result<CdfValue> {
        let [v] = self.cdf_values(x, [y])?;
        Ok(v)
    }

    /// Evaluates the conditional CDF at several points with one descent per
    /// tree and without materializing the merged distribution.
    pub fn cdf_values<const K: usize>(&self, x: &[f64], ys: [f64; K]) -> Result<[CdfValue; K]> {
        self.check_dim(x)?;
        if ys.iter().any(|y| y.is_nan()) {
            return Err(Error::NonFinite("cdf argument"));
        }
        let leaves = self.leaves_for(x);
        Ok(ys.map(|y| self.cdf_from_leaves(&leaves, y)))
    }

    fn cdf_from_leaves(&self, leaves: &[&[u32]], y: f64) -> CdfValue {
        let values = &self.sorted_responses;
        // First position whose response exceeds y.
        let cut = values.partition_point(|&v| v <= y) as u32;
        let mut below = 0.0;
        let mut lower: Option<u32> = None;
        let mut upper: Option<u32> = None;
        for leaf in leaves {
            let k = leaf.partition_point(|&p| p < cut);
            below += k as f64 / leaf.len() as f64;
            if k > 0 {
                lower = Some(lower.map_or(leaf[k - 1], |l| l.max(leaf[k - 1])));
            }
            if k < leaf.len() {
                upper = Some(upper.map_or(leaf[k], |u| u.min(leaf[k])));
            }
        }
        let t = leaves.len() as f64;
        match (lower, upper) {
            (None, Some(u)) => CdfValue {
                level: 0.0,
                overshoot: y - values[u as usize],
            },
            (Some(l), None) => CdfValue {
                level: 1.0,
                overshoot: y - values[l as usize],
            },
            (Some(l), Some(u)) => {
                let lo_v = values[l as usize];
                let hi_v = values[u as usize];
                // All positions carrying the value hi_v.
                let start = values.partition_point(|&v| v < hi_v) as u32;
                let end = values.partition_point(|&v| v <= hi_v) as u32;
                let mut mass = 0.0;
                for leaf in leaves {
                    let a = leaf.partition_point(|&p| p < start);
                    let b = leaf.partition_point(|&p| p < end);
                    mass += (b - a) as f64 / leaf.len() as f64;
                }
                let level = (below + mass * (y - lo_v) / (hi_v - lo_v)) / t;
                CdfValue::interior(level.clamp(0.0, 1.0))
            }
            (None, None) => unreachable!("leaves are never empty"),
        }
    }

    /// Conditional quantile `Q̂(α | x)`, the inverse of [`Self::cdf`].
    pub fn quantile(&self, x: &[f64], alpha: f64) -> Result<f64> {
        self.conditional(x)?.quantile(alpha)
    }

    /// Smallest and largest training response.
    pub fn response_range(&self) -> (f64, f64) {
        (
            self.sorted_responses[0],
            *self.sorted_responses.last().unwrap(),
        )
    }

    /// Total number of leaves over all trees.
    pub fn leaf_count(&self) -> usize {
        self.trees.iter().map(|t| t.leaves().count()).sum()
    }
}

/// Piecewise-linear conditional CDF at one query point: distinct response
/// values with positive weight and their cumulative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCdf {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ConditionalCdf {
    /// Knot positions `v_1 < … < v_m`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cumulative weights `W_1 < … < W_m = 1`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `F̂(y)` with overshoot outside the support.
    pub fn cdf_value(&self, y: f64) -> CdfValue {
        let m = self.values.len();
        let j = self.values.partition_point(|&v| v <= y);
        if j == 0 {
            return CdfValue {
                level: 0.0,
                overshoot: y - self.values[0],
            };
        }
        if j == m {
            return CdfValue {
                level: 1.0,
                overshoot: y - self.values[m - 1],
            };
        }
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        let (w0, w1) = (self.cumulative[j - 1], self.cumulative[j]);
        CdfValue::interior(w0 + (w1 - w0) * (y - v0) / (v1 - v0))
    }

    /// Analytic inverse of the interpolated CDF. `α ≤ W_1` maps to `v_1`,
    /// `α = 1` to `v_m`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Invalid {
                name: "alpha",
                reason: "must lie in [0, 1]",
            });
        }
        let m = self.values.len();
        if alpha <= self.cumulative[0] {
            return Ok(self.values[0]);
        }
        // First knot whose cumulative weight reaches alpha.
        let j = self.cumulative.partition_point(|&w| w < alpha);
        if j >= m {
            return Ok(self.values[m - 1]);
        }
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        let (w0, w1) = (self.cumulative[j - 1], self.cumulative[j]);
        let y = v0 + (alpha - w0) / (w1 - w0) * (v1 - v0);
        Ok(y.clamp(v0, v1))
    }
}
