use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ForestConfig, ForestModel, Node, Tree, TrainingSet};
use crate::Result;

/// Fits a quantile regression forest. Deterministic for a fixed
/// `config.seed`; tree `i` draws from ChaCha8 stream `i`.
pub fn fit_forest(data: &TrainingSet, config: &ForestConfig) -> Result<ForestModel> {
    config.validate()?;
    let n = data.n_rows();
    let responses = data.responses();

    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| {
        responses[a as usize]
            .total_cmp(&responses[b as usize])
            .then(a.cmp(&b))
    });
    let mut position = vec![0u32; n];
    for (p, &row) in order.iter().enumerate() {
        position[row as usize] = p as u32;
    }
    let sorted_responses: Vec<f64> = order.iter().map(|&r| responses[r as usize]).collect();

    let grower = Grower {
        data,
        min_leaf: config.min_leaf_size,
        mtry: config.features_per_split(data.n_features()),
    };
    let mut trees = Vec::with_capacity(config.tree_count);
    for i in 0..config.tree_count {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let sample: Vec<u32> = if config.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n as u32)).collect()
        } else {
            (0..n as u32).collect()
        };
        let mut nodes = grower.grow(sample, &mut rng);

        // Drop every original row down the tree.
        for (row, &pos) in position.iter().enumerate() {
            let leaf = descend(&nodes, data.row(row));
            if let Node::Leaf { rows } = &mut nodes[leaf] {
                rows.push(pos);
            }
        }
        for node in &mut nodes {
            if let Node::Leaf { rows } = node {
                rows.sort_unstable();
            }
        }
        trees.push(Tree::new(nodes)?);
    }
    ForestModel::from_parts(data.n_features(), trees, sorted_responses, order)
}

fn descend(nodes: &[Node], x: &[f64]) -> usize {
    let mut i = 0;
    while let Node::Split {
        feature,
        threshold,
        left,
        right,
    } = &nodes[i]
    {
        i = if x[*feature] <= *threshold { *left } else { *right };
    }
    i
}

struct Grower<'a> {
    data: &'a TrainingSet,
    min_leaf: usize,
    mtry: usize,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    /// Grows the tree structure; leaves come back empty.
    fn grow(&self, mut sample: Vec<u32>, rng: &mut ChaCha8Rng) -> Vec<Node> {
        let mut nodes = vec![Node::Leaf { rows: Vec::new() }];
        let mut stack = vec![(0usize, 0usize, sample.len())];
        let mut scratch = Vec::with_capacity(sample.len());
        let mut features: Vec<usize> = (0..self.data.n_features()).collect();
        while let Some((id, start, end)) = stack.pop() {
            let Some(split) = self.best_split(&sample[start..end], &mut features, &mut scratch, rng)
            else {
                continue;
            };
            let part = &mut sample[start..end];
            let mut mid = 0;
            for i in 0..part.len() {
                if self.data.value(part[i] as usize, split.feature) <= split.threshold {
                    part.swap(i, mid);
                    mid += 1;
                }
            }
            let left = nodes.len();
            nodes.push(Node::Leaf { rows: Vec::new() });
            nodes.push(Node::Leaf { rows: Vec::new() });
            nodes[id] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right: left + 1,
            };
            stack.push((left + 1, start + mid, end));
            stack.push((left, start, start + mid));
        }
        nodes
    }

    fn best_split(
        &self,
        rows: &[u32],
        features: &mut [usize],
        scratch: &mut Vec<u32>,
        rng: &mut ChaCha8Rng,
    ) -> Option<Split> {
        let m = rows.len();
        if m < 2 * self.min_leaf {
            return None;
        }
        let y = self.data.responses();
        let mean = rows.iter().map(|&r| y[r as usize]).sum::<f64>() / m as f64;
        let sse: f64 = rows
            .iter()
            .map(|&r| {
                let d = y[r as usize] - mean;
                d * d
            })
            .sum();
        if sse <= 0.0 {
            return None;
        }
        // Ignore gains at the level of rounding noise.
        let min_gain = sse * 1e-10;

        features.shuffle(rng);
        let mut best: Option<Split> = None;
        for (k, &f) in features.iter().enumerate() {
            if k >= self.mtry && best.is_some() {
                break;
            }
            scratch.clear();
            scratch.extend_from_slice(rows);
            scratch.sort_unstable_by(|&a, &b| {
                self.data
                    .value(a as usize, f)
                    .total_cmp(&self.data.value(b as usize, f))
                    .then(a.cmp(&b))
            });
            let first = self.data.value(scratch[0] as usize, f);
            let last = self.data.value(scratch[m - 1] as usize, f);
            if first == last {
                continue;
            }
            // With centred responses the variance reduction of a split after
            // i rows is L² m / (i (m − i)), L the centred left sum.
            let mut left_sum = 0.0;
            for i in 1..m {
                left_sum += y[scratch[i - 1] as usize] - mean;
                if i < self.min_leaf || m - i < self.min_leaf {
                    continue;
                }
                let a = self.data.value(scratch[i - 1] as usize, f);
                let b = self.data.value(scratch[i] as usize, f);
                if a == b {
                    continue;
                }
                let gain = left_sum * left_sum * m as f64 / (i as f64 * (m - i) as f64);
                if gain > min_gain && best.as_ref().is_none_or(|s| gain > s.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}
