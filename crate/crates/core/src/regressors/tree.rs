//! Squared-error CART regression trees built on presorted feature columns.
//!
//! Each feature keeps its own value-sorted list of sample slots; a node owns
//! the same `[start, end)` segment in every list and splitting stably
//! partitions all lists, so a level costs O(features × samples).
//!
//! Candidate splits are scanned feature by feature in ascending index order
//! and threshold by threshold in ascending order, and only a strictly better
//! gain replaces the incumbent. Ties therefore resolve to the lowest feature
//! index and then the lowest threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

/// An improvement smaller than this fraction of the node's raw sum of
/// squares is rounding noise, not a split.
const MIN_REL_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features drawn per split; `None` considers all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    /// Number of samples routed left.
    n_left: usize,
    threshold: f64,
    gain: f64,
}

impl RegressionTree {
    /// Fits a tree on `rows` of `x`; rows may repeat (bootstrap samples).
    pub fn fit(
        x: &FeatureMatrix,
        y: &[f64],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(!rows.is_empty(), "tree fit on an empty sample");
        let d = x.n_cols();
        let targets: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
        let mut columns: Vec<Vec<(f64, u32)>> = (0..d)
            .map(|f| {
                let mut col: Vec<(f64, u32)> = rows
                    .iter()
                    .enumerate()
                    .map(|(slot, &r)| (x.get(r, f), slot as u32))
                    .collect();
                col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                col
            })
            .collect();

        let min_leaf = params.min_leaf.max(1);
        let n_try = params.max_features.unwrap_or(d).clamp(1, d.max(1));
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        let mut goes_left = vec![false; rows.len()];
        let mut buffer: Vec<(f64, u32)> = Vec::with_capacity(rows.len());

        while let Some((node, start, end, depth)) = stack.pop() {
            let n = end - start;
            let (sum, sum_sq) = columns
                .first()
                .map(|c| {
                    c[start..end].iter().fold((0.0, 0.0), |(s, q), &(_, slot)| {
                        let t = targets[slot as usize];
                        (s + t, q + t * t)
                    })
                })
                .unwrap_or((0.0, 0.0));
            let leaf_value = sum / n as f64;

            let depth_ok = params.max_depth.is_none_or(|m| depth < m);
            let best = if depth_ok && n >= 2 * min_leaf && d > 0 {
                let features = pick_features(d, n_try, rng);
                best_split(&columns, &targets, &features, start, end, min_leaf, sum)
            } else {
                None
            };
            let best = best.filter(|b| b.gain - sum * sum / n as f64 > MIN_REL_IMPROVEMENT * sum_sq);

            let Some(best) = best else {
                nodes[node] = Node::Leaf(leaf_value);
                continue;
            };

            for (k, &(_, slot)) in columns[best.feature][start..end].iter().enumerate() {
                goes_left[slot as usize] = k < best.n_left;
            }
            for col in columns.iter_mut() {
                buffer.clear();
                buffer.extend(col[start..end].iter().filter(|e| goes_left[e.1 as usize]));
                buffer.extend(col[start..end].iter().filter(|e| !goes_left[e.1 as usize]));
                col[start..end].copy_from_slice(&buffer);
            }

            let left = nodes.len();
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[node] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right: left + 1,
            };
            let mid = start + best.n_left;
            // right pushed first so the left subtree is built first
            stack.push((left + 1, mid, end, depth + 1));
            stack.push((left, start, mid, depth + 1));
        }
        RegressionTree { nodes }
    }

    /// A single-leaf tree.
    pub fn constant(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf(value)],
        }
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf(v) => v,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Replaces every leaf value with the mean target of `rows` routed to it.
    /// Leaves that receive no rows keep their value.
    pub fn refit_leaves(&mut self, x: &FeatureMatrix, y: &[f64], rows: &[usize]) {
        let mut acc = vec![(0.0f64, 0usize); self.nodes.len()];
        for &r in rows {
            let leaf = self.leaf_index(x.row(r));
            acc[leaf].0 += y[r];
            acc[leaf].1 += 1;
        }
        for (node, (sum, count)) in self.nodes.iter_mut().zip(acc) {
            if let Node::Leaf(v) = node {
                if count > 0 {
                    *v = sum / count as f64;
                }
            }
        }
    }

    /// Multiplies every leaf value by `factor`.
    pub fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf(v) = node {
                *v *= factor;
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// `count` distinct features in ascending order.
fn pick_features(d: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..d).collect();
    if count < d {
        for i in 0..count {
            let j = rng.random_range(i..d);
            all.swap(i, j);
        }
        all.truncate(count);
        all.sort_unstable();
    }
    all
}

fn best_split(
    columns: &[Vec<(f64, u32)>],
    targets: &[f64],
    features: &[usize],
    start: usize,
    end: usize,
    min_leaf: usize,
    total: f64,
) -> Option<BestSplit> {
    let n = end - start;
    let mut best: Option<BestSplit> = None;
    for &f in features {
        let seg = &columns[f][start..end];
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += targets[seg[k].1 as usize];
            let n_left = k + 1;
            if n_left < min_leaf {
                continue;
            }
            if n - n_left < min_leaf {
                break;
            }
            let (a, b) = (seg[k].0, seg[k + 1].0);
            if !(a < b) {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64;
            if best.as_ref().is_none_or(|bs| gain > bs.gain) {
                let mut threshold = 0.5 * (a + b);
                if threshold >= b {
                    threshold = a;
                }
                best = Some(BestSplit {
                    feature: f,
                    n_left,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}
