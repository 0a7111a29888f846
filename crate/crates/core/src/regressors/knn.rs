//! k-nearest-neighbour regression on z-scored features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_data, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 10 }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("knn k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    /// Indices of the features that enter the distance.
    pub active: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Standardised training rows over `active`, row-major.
    pub points: Vec<f64>,
    pub targets: Vec<f64>,
}

pub fn fit_knn(x: &FeatureMatrix, y: &[f64], params: &KnnParams) -> Result<KnnModel> {
    params.validate()?;
    check_training_data(x, y, 1)?;
    let n = y.len();
    if params.k > n {
        return Err(Error::Insufficient(format!("knn k = {} exceeds {} training rows", params.k, n)));
    }
    let mut active = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for f in 0..x.n_cols() {
        let col: Vec<f64> = (0..n).map(|i| x.get(i, f)).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var > 0.0 {
            active.push(f);
            means.push(mean);
            stds.push(var.sqrt());
        } else {
            log::warn!("knn: feature {f} has zero variance and is dropped from the distance");
        }
    }
    let mut points = Vec::with_capacity(n * active.len());
    for i in 0..n {
        let row = x.row(i);
        for (j, &f) in active.iter().enumerate() {
            points.push((row[f] - means[j]) / stds[j]);
        }
    }
    Ok(KnnModel {
        k: params.k,
        active,
        means,
        stds,
        points,
        targets: y.to_vec(),
    })
}

impl KnnModel {
    /// Mean target of the k nearest training rows; equal distances are
    /// ordered by training-row index.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let d = self.active.len();
        let q: Vec<f64> = self
            .active
            .iter()
            .enumerate()
            .map(|(j, &f)| (row[f] - self.means[j]) / self.stds[j])
            .collect();
        let mut dist: Vec<(f64, usize)> = (0..self.targets.len())
            .map(|i| {
                let p = &self.points[i * d..(i + 1) * d];
                let s: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                (s, i)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, order);
        }
        let mut nearest: Vec<usize> = dist[..self.k].iter().map(|e| e.1).collect();
        nearest.sort_unstable();
        nearest.iter().map(|&i| self.targets[i]).sum::<f64>() / self.k as f64
    }

    pub fn predict_many(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows()).into_par_iter().map(|i| self.predict(x.row(i))).collect()
    }
}
