//! Power reference models: feature construction, the model zoo, holdout
//! evaluation and lowest-RMSE model selection.
//!
//! Built-in algorithms are gradient boosting, random forest, k-nearest
//! neighbours and a binned median curve. Anything implementing
//! [`ReferenceModel`] can stand in as the reference for monitoring.

pub mod bin_curve;
pub mod forest;
pub mod gbm;
pub mod knn;
pub mod split;
pub mod tree;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Hyperparameters, Settings};
use crate::error::{Error, Result};
use crate::ingest::ScadaRecord;

pub use split::train_test_split;

/// Row-major dense feature matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize) -> Self {
        Self { n_cols, data: Vec::new() }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }
}

pub(crate) fn check_training_data(x: &FeatureMatrix, y: &[f64], min_rows: usize) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::Insufficient(format!("{} feature rows vs {} targets", x.n_rows(), y.len())));
    }
    if y.len() < min_rows {
        return Err(Error::Insufficient(format!("{} training rows, need at least {min_rows}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Insufficient("non-finite training target".into()));
    }
    Ok(())
}

/// Explanatory variable sets, each a superset of the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    /// Wind speed.
    V,
    /// Wind speed and direction.
    VD,
    /// Wind speed, direction and air temperature.
    VDT,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::V, FeatureSet::VD, FeatureSet::VDT];

    pub fn width(self) -> usize {
        match self {
            FeatureSet::V => 1,
            FeatureSet::VD => 3,
            FeatureSet::VDT => 4,
        }
    }

    pub fn column_names(self) -> &'static [&'static str] {
        &["wind_speed", "sin_dir", "cos_dir", "air_temp"][..self.width()]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::V => "V",
            FeatureSet::VD => "VD",
            FeatureSet::VDT => "VDT",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V" => Ok(FeatureSet::V),
            "VD" => Ok(FeatureSet::VD),
            "VDT" => Ok(FeatureSet::VDT),
            other => Err(Error::Config(format!("unknown feature set `{other}`"))),
        }
    }
}

/// Regressor vector of one record. Direction enters as (sin, cos) of the
/// angle so that 359.9° and 0.1° are neighbours.
pub fn build_features(record: &ScadaRecord, set: FeatureSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(set.width());
    out.push(record.wind_speed);
    if set >= FeatureSet::VD {
        let a = record.wind_dir.to_radians();
        out.push(a.sin());
        out.push(a.cos());
    }
    if set == FeatureSet::VDT {
        out.push(record.air_temp);
    }
    out
}

pub fn feature_matrix(records: &[ScadaRecord], set: FeatureSet) -> FeatureMatrix {
    let mut m = FeatureMatrix::new(set.width());
    for r in records {
        m.push_row(&build_features(r, set));
    }
    m
}

pub fn targets(records: &[ScadaRecord]) -> Vec<f64> {
    records.iter().map(|r| r.power).collect()
}

/// Built-in algorithms, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gbm,
    RandomForest,
    Knn,
    BinCurve,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Gbm, Algorithm::RandomForest, Algorithm::Knn, Algorithm::BinCurve];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gbm => "gbm",
            Algorithm::RandomForest => "random_forest",
            Algorithm::Knn => "knn",
            Algorithm::BinCurve => "bin_curve",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    Gbm(gbm::GbmModel),
    RandomForest(forest::ForestModel),
    Knn(knn::KnnModel),
    BinCurve(bin_curve::BinCurveModel),
}

impl ModelState {
    fn predict_raw(&self, row: &[f64]) -> f64 {
        match self {
            ModelState::Gbm(m) => m.predict(row),
            ModelState::RandomForest(m) => m.predict(row),
            ModelState::Knn(m) => m.predict(row),
            ModelState::BinCurve(m) => m.predict(row[0]),
        }
    }
}

/// Anything that maps a record's regressors to an expected power.
pub trait ReferenceModel: Sync {
    fn feature_set(&self) -> FeatureSet;
    /// Expected power in kW for one feature vector.
    fn predict_features(&self, features: &[f64]) -> f64;

    fn predict_record(&self, record: &ScadaRecord) -> f64 {
        self.predict_features(&build_features(record, self.feature_set()))
    }
}

/// A trained model bound to its feature set, with holdout metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub algorithm: Algorithm,
    pub feature_set: FeatureSet,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    /// kW.
    pub train_rmse: f64,
    /// kW.
    pub holdout_rmse: f64,
    /// `None` when the holdout targets have zero variance.
    pub holdout_r2: Option<f64>,
    /// Inclusive output clamp in kW.
    pub bounds: (f64, f64),
    pub state: ModelState,
}

impl ReferenceModel for FittedModel {
    fn feature_set(&self) -> FeatureSet {
        self.feature_set
    }

    fn predict_features(&self, features: &[f64]) -> f64 {
        self.state.predict_raw(features).clamp(self.bounds.0, self.bounds.1)
    }
}

impl FittedModel {
    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows()).into_par_iter().map(|i| self.predict_features(x.row(i))).collect()
    }

    pub fn predict_records(&self, records: &[ScadaRecord]) -> Vec<f64> {
        self.predict_matrix(&feature_matrix(records, self.feature_set))
    }

    pub fn gbm_train_loss(&self) -> Option<&[f64]> {
        match &self.state {
            ModelState::Gbm(m) => Some(&m.train_loss),
            _ => None,
        }
    }
}

/// Fits one algorithm on a feature matrix. Metrics are left at zero; see
/// [`fit_candidate`] for the evaluated variant.
pub fn fit_state(
    algorithm: Algorithm,
    x: &FeatureMatrix,
    y: &[f64],
    params: &Hyperparameters,
    bin_width: f64,
    seed: u64,
) -> Result<ModelState> {
    Ok(match algorithm {
        Algorithm::Gbm => ModelState::Gbm(gbm::fit_gbm(x, y, &params.gbm, seed)?),
        Algorithm::RandomForest => ModelState::RandomForest(forest::fit_random_forest(x, y, &params.random_forest, seed)?),
        Algorithm::Knn => ModelState::Knn(knn::fit_knn(x, y, &params.knn)?),
        Algorithm::BinCurve => {
            let speeds: Vec<f64> = (0..x.n_rows()).map(|i| x.get(i, 0)).collect();
            ModelState::BinCurve(bin_curve::fit_bin_curve(&speeds, y, bin_width)?)
        }
    })
}

/// Holdout accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub rmse: f64,
    pub r2: Option<f64>,
}

pub fn evaluate_predictions(predicted: &[f64], actual: &[f64]) -> Result<Accuracy> {
    if actual.is_empty() || predicted.len() != actual.len() {
        return Err(Error::EmptyInput("evaluation needs a non-empty, aligned test set".into()));
    }
    let n = actual.len() as f64;
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, y)| (p - y) * (p - y)).sum();
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean) * (y - mean)).sum();
    Ok(Accuracy {
        rmse: (ss_res / n).sqrt(),
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
    })
}

pub fn evaluate<M: ReferenceModel + ?Sized>(model: &M, x: &FeatureMatrix, y: &[f64]) -> Result<Accuracy> {
    let predicted: Vec<f64> = (0..x.n_rows()).map(|i| model.predict_features(x.row(i))).collect();
    evaluate_predictions(&predicted, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub algorithm: Algorithm,
    pub feature_set: FeatureSet,
}

impl Candidate {
    /// Every algorithm × feature-set combination.
    pub fn all() -> Vec<Candidate> {
        Algorithm::ALL
            .iter()
            .flat_map(|&algorithm| FeatureSet::ALL.iter().map(move |&feature_set| Candidate { algorithm, feature_set }))
            .collect()
    }
}

/// Fits and evaluates one candidate on a fixed split.
pub fn fit_candidate(
    candidate: Candidate,
    train: &[ScadaRecord],
    test: &[ScadaRecord],
    settings: &Settings,
    seed: u64,
) -> Result<FittedModel> {
    let x_train = feature_matrix(train, candidate.feature_set);
    let y_train = targets(train);
    let state = fit_state(candidate.algorithm, &x_train, &y_train, &settings.models, settings.turbine.bin_width, seed)?;
    let mut model = FittedModel {
        algorithm: candidate.algorithm,
        feature_set: candidate.feature_set,
        hyperparameters: settings.models.clone(),
        seed,
        train_rmse: 0.0,
        holdout_rmse: 0.0,
        holdout_r2: None,
        bounds: settings.turbine.prediction_bounds(),
        state,
    };
    model.train_rmse = evaluate_predictions(&model.predict_matrix(&x_train), &y_train)?.rmse;
    let x_test = feature_matrix(test, candidate.feature_set);
    let acc = evaluate_predictions(&model.predict_matrix(&x_test), &targets(test))?;
    model.holdout_rmse = acc.rmse;
    model.holdout_r2 = acc.r2;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    pub feature_set: FeatureSet,
    pub rmse_kw: f64,
    pub r2: Option<f64>,
}

/// Holdout accuracy table with the chosen reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    /// Ascending RMSE, ties by algorithm order then feature set.
    pub rows: Vec<ReportRow>,
    pub selected: usize,
}

fn row_order(a: &ReportRow, b: &ReportRow) -> std::cmp::Ordering {
    a.rmse_kw
        .total_cmp(&b.rmse_kw)
        .then(a.algorithm.cmp(&b.algorithm))
        .then(a.feature_set.cmp(&b.feature_set))
}

impl ModelReport {
    pub fn from_rows(mut rows: Vec<ReportRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::AllFitsFailed(0));
        }
        rows.sort_by(row_order);
        Ok(ModelReport { rows, selected: 0 })
    }

    pub fn selected_row(&self) -> &ReportRow {
        &self.rows[self.selected]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["algorithm", "feature_set", "rmse_kw", "r2"])?;
        for r in &self.rows {
            w.write_record([
                r.algorithm.as_str().to_string(),
                r.feature_set.as_str().to_string(),
                r.rmse_kw.to_string(),
                r.r2.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()
    }
}

pub struct Selection {
    pub report: ModelReport,
    /// Fitted models aligned with `report.rows`.
    pub models: Vec<FittedModel>,
}

impl Selection {
    pub fn selected_model(&self) -> &FittedModel {
        &self.models[self.report.selected]
    }
}

/// Fits every candidate on the same split and picks the lowest holdout RMSE.
/// Candidates that fail to fit are logged and left out of the report.
pub fn select_model(
    candidates: &[Candidate],
    train: &[ScadaRecord],
    test: &[ScadaRecord],
    settings: &Settings,
    seed: u64,
) -> Result<Selection> {
    let fits: Vec<Result<FittedModel>> = candidates
        .par_iter()
        .map(|&c| fit_candidate(c, train, test, settings, seed))
        .collect();
    let mut models = Vec::new();
    for (c, fit) in candidates.iter().zip(fits) {
        match fit {
            Ok(m) => models.push(m),
            Err(e) => log::warn!("{} / {}: fit failed: {e}", c.algorithm, c.feature_set),
        }
    }
    if models.is_empty() {
        return Err(Error::AllFitsFailed(candidates.len()));
    }
    models.sort_by(|a, b| row_order(&report_row(a), &report_row(b)));
    models.dedup_by(|a, b| a.algorithm == b.algorithm && a.feature_set == b.feature_set);
    let report = ModelReport::from_rows(models.iter().map(report_row).collect())?;
    Ok(Selection { report, models })
}

fn report_row(m: &FittedModel) -> ReportRow {
    ReportRow {
        algorithm: m.algorithm,
        feature_set: m.feature_set,
        rmse_kw: m.holdout_rmse,
        r2: m.holdout_r2,
    }
}

pub const MODEL_FORMAT: &str = "windref-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelBlob {
    format: String,
    version: u32,
    model: FittedModel,
}

#[derive(Serialize)]
struct ModelBlobRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a FittedModel,
}

pub fn model_to_json(model: &FittedModel) -> String {
    serde_json::to_string(&ModelBlobRef {
        format: MODEL_FORMAT,
        version: MODEL_FORMAT_VERSION,
        model,
    })
    .expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let blob: ModelBlob = serde_json::from_str(text)?;
    if blob.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!("unexpected format tag `{}`", blob.format)));
    }
    if blob.version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {} (expected {MODEL_FORMAT_VERSION})",
            blob.version
        )));
    }
    Ok(blob.model)
}

pub fn save_model(path: &Path, model: &FittedModel) -> Result<()> {
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
