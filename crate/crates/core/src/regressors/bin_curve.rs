//! Binned median power curve: per-bin median power placed at the bin
//! centre, linear between centres, constant beyond the outermost centres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::bin_index;
use crate::quantile::quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCurveModel {
    /// Centres of the occupied bins, ascending.
    pub centers: Vec<f64>,
    pub medians: Vec<f64>,
}

pub fn fit_bin_curve(speeds: &[f64], powers: &[f64], bin_width: f64) -> Result<BinCurveModel> {
    if speeds.len() != powers.len() {
        return Err(Error::Insufficient("speed and power lengths differ".into()));
    }
    let mut by_bin: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for (&v, &p) in speeds.iter().zip(powers) {
        by_bin.entry(bin_index(v, bin_width)).or_default().push(p);
    }
    if by_bin.len() < 2 {
        return Err(Error::Insufficient(format!("bin curve needs 2 occupied bins, found {}", by_bin.len())));
    }
    let (centers, medians) = by_bin
        .into_iter()
        .map(|(i, ps)| ((i as f64 + 0.5) * bin_width, quantile(&ps, 0.5).expect("bin is occupied")))
        .unzip();
    Ok(BinCurveModel { centers, medians })
}

impl BinCurveModel {
    pub fn predict(&self, speed: f64) -> f64 {
        let c = &self.centers;
        if speed <= c[0] {
            return self.medians[0];
        }
        if speed >= c[c.len() - 1] {
            return self.medians[c.len() - 1];
        }
        let hi = c.partition_point(|&x| x <= speed);
        let lo = hi - 1;
        let t = (speed - c[lo]) / (c[hi] - c[lo]);
        self.medians[lo] + t * (self.medians[hi] - self.medians[lo])
    }
}
