//! Turbine constants and pipeline tunables.
//!
//! All values can be loaded from a TOML document; absent keys fall back to
//! the defaults below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regressors::forest::ForestParams;
use crate::regressors::gbm::GbmParams;
use crate::regressors::knn::KnnParams;

/// Physical turbine constants plus the detection parameters tied to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbineConfig {
    /// kW.
    pub rated_power: f64,
    /// m/s.
    pub cut_in: f64,
    /// m/s.
    pub cut_out: f64,
    /// Width of the wind-speed bins in m/s.
    pub bin_width: f64,
    pub quantile_lo: f64,
    pub quantile_hi: f64,
    /// Keep-band margin as a fraction of the interquantile distance.
    pub outlier_margin: f64,
    /// Rolling energy window in hours.
    pub horizon: f64,
    pub alert_quantile: f64,
    /// Records removed on each side of a logged warning or error.
    pub exclusion_radius: usize,
    /// Currency per MWh.
    pub energy_price: f64,
}

impl Default for TurbineConfig {
    fn default() -> Self {
        Self {
            rated_power: 3300.0,
            cut_in: 3.0,
            cut_out: 25.0,
            bin_width: 1.0,
            quantile_lo: 0.05,
            quantile_hi: 0.95,
            outlier_margin: 0.5,
            horizon: 24.0,
            alert_quantile: 0.001,
            exclusion_radius: 1,
            energy_price: 50.0,
        }
    }
}

impl TurbineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.rated_power > 0.0) {
            return fail(format!("rated_power must be > 0, got {}", self.rated_power));
        }
        if !(self.cut_in >= 0.0 && self.cut_in < self.cut_out) {
            return fail(format!(
                "need 0 <= cut_in < cut_out, got {} / {}",
                self.cut_in, self.cut_out
            ));
        }
        if !(self.bin_width > 0.0) {
            return fail(format!("bin_width must be > 0, got {}", self.bin_width));
        }
        if !(0.0 < self.quantile_lo && self.quantile_lo < self.quantile_hi && self.quantile_hi < 1.0)
        {
            return fail(format!(
                "need 0 < quantile_lo < quantile_hi < 1, got {} / {}",
                self.quantile_lo, self.quantile_hi
            ));
        }
        if !(self.outlier_margin >= 0.0) {
            return fail(format!("outlier_margin must be >= 0, got {}", self.outlier_margin));
        }
        if !(self.horizon > 0.0) {
            return fail(format!("horizon must be > 0, got {}", self.horizon));
        }
        if !(self.alert_quantile > 0.0 && self.alert_quantile < 0.5) {
            return fail(format!(
                "alert_quantile must lie in (0, 0.5), got {}",
                self.alert_quantile
            ));
        }
        if !(self.energy_price >= 0.0) {
            return fail(format!("energy_price must be >= 0, got {}", self.energy_price));
        }
        Ok(())
    }

    /// Inference clamp applied to every model prediction.
    pub fn prediction_bounds(&self) -> (f64, f64) {
        (-self.rated_power, 1.5 * self.rated_power)
    }
}

/// Model zoo hyperparameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub gbm: GbmParams,
    pub random_forest: ForestParams,
    pub knn: KnnParams,
}

/// Everything a pipeline run needs besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub turbine: TurbineConfig,
    pub models: Hyperparameters,
    /// Fraction of the cleaned corpus used for fitting.
    pub train_ratio: f64,
    /// Alert runs separated by less than this many hours are merged.
    pub merge_gap_hours: f64,
    /// Share of a window's grid steps that must be present for it to count.
    pub min_window_coverage: f64,
    /// Bins with fewer records are never filtered.
    pub min_bin_count: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            turbine: TurbineConfig::default(),
            models: Hyperparameters::default(),
            train_ratio: 0.7,
            merge_gap_hours: 1.0,
            min_window_coverage: 0.9,
            min_bin_count: 10,
        }
    }
}

impl Settings {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let settings: Settings = toml::from_str(text)?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("settings serialize to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.turbine.validate()?;
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!(
                "train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        if !(self.merge_gap_hours >= 0.0) {
            return Err(Error::Config("merge_gap_hours must be >= 0".into()));
        }
        if !(self.min_window_coverage > 0.0 && self.min_window_coverage <= 1.0) {
            return Err(Error::Config("min_window_coverage must lie in (0, 1]".into()));
        }
        self.models.gbm.validate()?;
        self.models.random_forest.validate()?;
        self.models.knn.validate()?;
        Ok(())
    }
}
