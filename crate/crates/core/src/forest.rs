//! Random-forest classifier over relation vectors.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means ⌈√d⌉.
    #[serde(default)]
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(seed: u64) -> Self {
        Self { n_trees: 100, max_depth: 12, min_leaf: 3, features_per_split: None, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 || self.features_per_split == Some(0) {
            return Err(invalid("forest parameters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Impurity decrease weighted by the node's sample fraction.
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, v: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if v[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedForest {
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    pub vector_length: usize,
}

/// Trains a forest on labeled vectors.
pub fn train_forest(vectors: &[Vec<f64>], labels: &[bool], config: &ForestConfig) -> Result<TrainedForest> {
    config.validate()?;
    if vectors.len() != labels.len() {
        return Err(invalid("vector and label counts differ"));
    }
    if !labels.iter().any(|l| *l) || labels.iter().all(|l| *l) {
        return Err(Error::SingleClassTraining);
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(invalid("inconsistent vector lengths"));
    }
    let mtry = config.features_per_split.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).min(d);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(t as u64));
            let n = vectors.len();
            let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(vectors, labels, boot, mtry, config, &mut rng)
        })
        .collect();
    Ok(TrainedForest { trees, config: config.clone(), vector_length: d })
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Best {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn grow_tree(x: &[Vec<f64>], y: &[bool], boot: Vec<usize>, mtry: usize, cfg: &ForestConfig, rng: &mut ChaCha8Rng) -> Tree {
    let total = boot.len() as f64;
    let d = x[0].len();
    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, samples, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, boot, 0)];
    nodes.push(Node::Leaf { value: 0.0 });
    while let Some((slot, samples, depth)) = stack.pop() {
        let n = samples.len();
        let pos = samples.iter().filter(|&&i| y[i]).count();
        let leaf = Node::Leaf { value: pos as f64 / n as f64 };
        if depth >= cfg.max_depth || pos == 0 || pos == n || n < 2 * cfg.min_leaf {
            nodes[slot] = leaf;
            continue;
        }
        let parent = gini(pos, n);
        let mut best: Option<Best> = None;
        let mut order = samples.clone();
        for f in sample(rng, d, mtry).into_iter() {
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                if y[order[k]] {
                    left_pos += 1;
                }
                let nl = k + 1;
                let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
                if a == b || nl < cfg.min_leaf || n - nl < cfg.min_leaf {
                    continue;
                }
                let child = (nl as f64 * gini(left_pos, nl) + (n - nl) as f64 * gini(pos - left_pos, n - nl)) / n as f64;
                let decrease = parent - child;
                if decrease > 1e-12 && best.as_ref().is_none_or(|bb| decrease > bb.decrease) {
                    let mid = 0.5 * (a + b);
                    let threshold = if mid < b { mid } else { a };
                    best = Some(Best { feature: f, threshold, decrease });
                }
            }
        }
        let Some(b) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
        let li = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let ri = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[slot] = Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            left: li,
            right: ri,
            gain: b.decrease * n as f64 / total,
        };
        stack.push((ri, r, depth + 1));
        stack.push((li, l, depth + 1));
    }
    Tree { nodes }
}

/// Mean leaf positive fraction over trees.
pub fn predict(forest: &TrainedForest, v: &[f64]) -> Result<f64> {
    if v.len() != forest.vector_length {
        return Err(invalid(format!("vector length {} does not match forest ({})", v.len(), forest.vector_length)));
    }
    Ok(forest.trees.iter().map(|t| t.leaf_value(v)).sum::<f64>() / forest.trees.len() as f64)
}

/// Gini importance per feature, normalized to sum to one when any split exists.
pub fn feature_importance(forest: &TrainedForest) -> Vec<f64> {
    let mut imp = vec![0.0; forest.vector_length];
    for t in &forest.trees {
        for n in &t.nodes {
            if let Node::Split { feature, gain, .. } = n {
                imp[*feature] += gain;
            }
        }
    }
    let total: f64 = imp.iter().sum();
    if total > 0.0 {
        for v in &mut imp {
            *v /= total;
        }
    }
    imp
}
