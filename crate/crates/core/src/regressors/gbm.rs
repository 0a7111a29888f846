//! Stagewise squared-error gradient boosting of depth-limited trees.
//!
//! Stage 0 predicts the target mean. Every later stage grows a tree on the
//! current residuals of a row subsample, re-estimates its leaf values as the
//! mean residual of all training rows in each leaf, and adds the shrunken
//! tree to the ensemble. Because each leaf moves its rows towards their own
//! mean residual by a factor in (0, 2), the full-sample training loss can
//! never increase from one stage to the next.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use super::{check_training_data, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Fraction of rows drawn without replacement per stage.
    pub subsample: f64,
    pub min_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_depth: 4,
            learning_rate: 0.05,
            subsample: 0.8,
            min_leaf: 5,
        }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("gbm learning_rate {} outside (0, 1]", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("gbm subsample {} outside (0, 1]", self.subsample)));
        }
        if self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::Config("gbm max_depth and min_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Full-sample mean squared training error; entry 0 is the stage-0
    /// (mean) model, entry k follows tree k.
    pub train_loss: Vec<f64>,
}

impl GbmModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let boost: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        self.init + self.learning_rate * boost
    }
}

pub const MIN_TRAINING_ROWS: usize = 50;

pub fn fit_gbm(x: &FeatureMatrix, y: &[f64], params: &GbmParams, seed: u64) -> Result<GbmModel> {
    params.validate()?;
    check_training_data(x, y, MIN_TRAINING_ROWS)?;
    let n = y.len();
    let init = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![init; n];
    let mse = |fitted: &[f64]| y.iter().zip(fitted).map(|(t, f)| (t - f) * (t - f)).sum::<f64>() / n as f64;
    let mut train_loss = vec![mse(&fitted)];
    let mut trees = Vec::with_capacity(params.n_trees);

    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_leaf: params.min_leaf,
        max_features: None,
    };
    let all_rows: Vec<usize> = (0..n).collect();
    let n_sub = ((params.subsample * n as f64).floor() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = all_rows.clone();

    for _ in 0..params.n_trees {
        if train_loss.last() == Some(&0.0) {
            break;
        }
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(t, f)| t - f).collect();
        let rows: Vec<usize> = if n_sub == n {
            all_rows.clone()
        } else {
            for i in 0..n_sub {
                let j = rng.random_range(i..n);
                pool.swap(i, j);
            }
            let mut rows = pool[..n_sub].to_vec();
            rows.sort_unstable();
            rows
        };
        let mut tree = RegressionTree::fit(x, &residuals, &rows, &tree_params, &mut rng);
        tree.refit_leaves(x, &residuals, &all_rows);
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.learning_rate * tree.predict(x.row(i));
        }
        train_loss.push(mse(&fitted));
        trees.push(tree);
    }

    Ok(GbmModel {
        init,
        learning_rate: params.learning_rate,
        trees,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> (FeatureMatrix, Vec<f64>) {
        let mut x = FeatureMatrix::new(1);
        let mut y = Vec::new();
        for i in 0..n {
            let v = 3.0 + 9.0 * i as f64 / (n - 1) as f64;
            x.push_row(&[v]);
            y.push(v * v * v);
        }
        (x, y)
    }

    #[test]
    fn constant_target_gives_constant_model() {
        let (x, _) = grid(80);
        let m = fit_gbm(&x, &[1650.0; 80], &GbmParams::default(), 3).unwrap();
        for v in [0.0, 5.0, 30.0] {
            assert_eq!(m.predict(&[v]), 1650.0);
        }
    }

    #[test]
    fn loss_never_increases() {
        let (x, y) = grid(300);
        let m = fit_gbm(&x, &y, &GbmParams { n_trees: 200, ..Default::default() }, 11).unwrap();
        assert_eq!(m.train_loss.len(), 201);
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
        assert!(m.train_loss[200] < 0.01 * m.train_loss[0]);
    }

    #[test]
    fn too_few_rows() {
        let (x, y) = grid(20);
        assert!(matches!(fit_gbm(&x, &y, &GbmParams::default(), 0), Err(Error::Insufficient(_))));
    }

    #[test]
    fn rejects_non_finite_targets() {
        let (x, mut y) = grid(60);
        y[3] = f64::NAN;
        assert!(fit_gbm(&x, &y, &GbmParams::default(), 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = grid(120);
        let p = GbmParams { n_trees: 50, ..Default::default() };
        let a = fit_gbm(&x, &y, &p, 5).unwrap();
        let b = fit_gbm(&x, &y, &p, 5).unwrap();
        assert_eq!(a, b);
    }
}
