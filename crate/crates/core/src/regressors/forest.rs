//! Bootstrap-aggregated regression trees with per-split feature sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use super::{check_training_data, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features tried per split; unset means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 300,
            min_leaf: 5,
            max_depth: None,
            max_features: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 {
            return Err(Error::Config("random_forest n_trees and min_leaf must be >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Config("random_forest max_features must be >= 1".into()));
        }
        Ok(())
    }

    pub fn features_per_split(&self, d: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
}

impl ForestModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub const MIN_TRAINING_ROWS: usize = 50;

/// Each tree draws from its own ChaCha stream of `seed`, so the forest is
/// identical however the trees are scheduled.
pub fn fit_random_forest(x: &FeatureMatrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    check_training_data(x, y, MIN_TRAINING_ROWS)?;
    let n = y.len();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        max_features: Some(params.features_per_split(x.n_cols())),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                let mut r: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                r.sort_unstable();
                r
            } else {
                (0..n).collect()
            };
            RegressionTree::fit(x, y, &rows, &tree_params, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees })
}
