//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use chrono::{Datelike, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use windref::ingest::{step, ScadaRecord};
use windref::monitor::{compute_metrics, derive_threshold, detect_events, predict_expected, rolling_energy_residual};
use windref::preprocess::clean;
use windref::regressors::gbm::{fit_gbm, GbmParams};
use windref::regressors::knn::{fit_knn, KnnParams};
use windref::regressors::{
    feature_matrix, select_model, targets, train_test_split, Algorithm, Candidate, FeatureSet, FittedModel, ModelReport,
    ReportRow,
};
use windref::simulator::{generate, ground_truth_power, FaultKind, FaultSpec, PowerCurve, Scenario, WindOverride};
use windref::Settings;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn year(seed: u64) -> Scenario {
    Scenario {
        seed,
        ..Default::default()
    }
}

fn january(records: &[ScadaRecord]) -> Vec<ScadaRecord> {
    records.iter().filter(|r| r.timestamp.month() == 1).cloned().collect()
}

/// Cleans a month and runs model selection over all twelve candidates.
fn train_on_month(records: &[ScadaRecord], settings: &Settings, seed: u64) -> (ModelReport, Vec<FittedModel>) {
    let cleaned = clean(records, settings).expect("clean").clean;
    let (train, test) = train_test_split(&cleaned, settings.train_ratio, seed).expect("split");
    let sel = select_model(&Candidate::all(), &train, &test, settings, seed).expect("select");
    (sel.report, sel.models)
}

// 1. Model accuracy ordering on the default simulated year, trained with the
// default seed.
fn model_accuracy() -> Outcome {
    let sc = Scenario::default();
    let sigma = sc.noise_sd_kw;
    let (records, _) = generate(&sc).unwrap();
    let (report, _) = train_on_month(&january(&records), &Settings::default(), 1);
    let row = |a: Algorithm, f: FeatureSet| {
        report
            .rows
            .iter()
            .find(|r| r.algorithm == a && r.feature_set == f)
            .cloned()
            .expect("row present")
    };
    let best = |a: Algorithm| {
        report
            .rows
            .iter()
            .filter(|r| r.algorithm == a)
            .map(|r| r.rmse_kw)
            .fold(f64::INFINITY, f64::min)
    };
    let gbm = row(Algorithm::Gbm, FeatureSet::VDT);
    let rf = row(Algorithm::RandomForest, FeatureSet::VDT);
    let in_band = |r: &ReportRow| r.rmse_kw >= sigma && r.rmse_kw <= 1.6 * sigma && r.r2.is_some_and(|v| v >= 0.99);
    let best_gbm = best(Algorithm::Gbm);
    let ordered = best(Algorithm::BinCurve) > best_gbm && best(Algorithm::Knn) > best_gbm;
    outcome(
        in_band(&gbm) && in_band(&rf) && ordered,
        format!(
            "gbm/VDT {:.1} kW r2 {:.4}, rf/VDT {:.1} kW r2 {:.4}; best gbm {:.1} < best knn {:.1}, best bin_curve {:.1}",
            gbm.rmse_kw,
            gbm.r2.unwrap_or(f64::NAN),
            rf.rmse_kw,
            rf.r2.unwrap_or(f64::NAN),
            best_gbm,
            best(Algorithm::Knn),
            best(Algorithm::BinCurve)
        ),
    )
}

fn gaussian_bins(n: usize, sigma: f64, outlier_share: f64, seed: u64) -> (Vec<ScadaRecord>, Vec<bool>) {
    let curve = PowerCurve::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let t0 = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
    let mut injected = Vec::with_capacity(n);
    let records = (0..n)
        .map(|i| {
            let v: f64 = rng.random_range(3.0..20.0);
            let level = ground_truth_power(v.floor() + 0.5, &curve);
            let mut power = level + noise.sample(&mut rng);
            let is_outlier = rng.random::<f64>() < outlier_share;
            if is_outlier {
                power += if rng.random::<bool>() { 10.0 * sigma } else { -10.0 * sigma };
            }
            injected.push(is_outlier);
            ScadaRecord {
                timestamp: t0 + step() * i as i32,
                wind_speed: v,
                wind_dir: 180.0,
                air_temp: 10.0,
                power,
                pitch_angle: 1.0,
                hydraulic_pressure: None,
                status_code: 0,
            }
        })
        .collect();
    (records, injected)
}

fn flagged_mask(records: &[ScadaRecord], settings: &Settings) -> Vec<bool> {
    let out = clean(records, settings).unwrap();
    let removed: std::collections::HashSet<_> = out.removed.iter().map(|r| r.timestamp).collect();
    records.iter().map(|r| removed.contains(&r.timestamp)).collect()
}

// 2. Outlier filter calibration.
fn outlier_calibration() -> Outcome {
    let settings = Settings::default();
    let n = 52_560;
    let (clean_data, _) = gaussian_bins(n, 50.0, 0.0, 201);
    let clean_rate = flagged_mask(&clean_data, &settings).iter().filter(|f| **f).count() as f64 / n as f64;

    let (dirty, injected) = gaussian_bins(n, 50.0, 0.05, 202);
    let flags = flagged_mask(&dirty, &settings);
    let (mut hit, mut n_inj, mut false_pos, mut n_clean) = (0usize, 0usize, 0usize, 0usize);
    for (f, inj) in flags.iter().zip(&injected) {
        if *inj {
            n_inj += 1;
            hit += *f as usize;
        } else {
            n_clean += 1;
            false_pos += *f as usize;
        }
    }
    let recall = hit as f64 / n_inj as f64;
    let fp_rate = false_pos as f64 / n_clean as f64;
    outcome(
        clean_rate <= 0.01 && recall >= 0.99 && fp_rate <= 0.01,
        format!(
            "clean data flagged {:.3}%; {} injected, {:.2}% removed, {:.3}% of clean points removed",
            100.0 * clean_rate,
            n_inj,
            100.0 * recall,
            100.0 * fp_rate
        ),
    )
}

// 3. Energy integration.
fn energy_arithmetic() -> Outcome {
    let t0 = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
    let records: Vec<ScadaRecord> = (0..144)
        .map(|i| ScadaRecord {
            timestamp: t0 + step() * i,
            wind_speed: 15.0,
            wind_dir: 0.0,
            air_temp: 0.0,
            power: 3300.0,
            pitch_angle: 0.0,
            hydraulic_pressure: None,
            status_code: 0,
        })
        .collect();
    let series = rolling_energy_residual(&records, &[0.0; 144], 24.0, 1.0).unwrap();
    let got = series.points[143].rolling_residual_mwh.unwrap();
    let rel = (got - 79.2).abs() / 79.2;
    outcome(rel <= 1e-9, format!("24 h at 3300 kW = {got} MWh (relative error {rel:.1e})"))
}

// 4. Metric identities.
fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut worst = 0.0f64;
    let mut broken = 0usize;
    for _ in 0..1_000_000 {
        let p: f64 = rng.random_range(-3300.0..3630.0);
        let mag: f64 = rng.random_range(1.0..4950.0);
        let pe = if rng.random::<bool>() { mag } else { -mag };
        let m = compute_metrics(p, pe, p / 6.0, pe / 6.0);
        let (m3, m4, m5) = (m.m3.unwrap(), m.m4.unwrap(), m.m5.unwrap());
        let err = (m.m2 - m.m1.abs()).abs().max((m4 - m3.abs()).abs()).max((m5 - (m3 + 1.0)).abs());
        worst = worst.max(err);
        broken += (err > 1e-12) as usize;
    }
    outcome(broken == 0, format!("10^6 inputs, max deviation {worst:.2e}"))
}

struct Reference {
    model: FittedModel,
    threshold: f64,
    settings: Settings,
}

fn reference() -> Reference {
    let settings = Settings::default();
    let (records, _) = generate(&year(501)).unwrap();
    let (_, models) = train_on_month(&january(&records), &settings, 11);
    let model = models.into_iter().next().unwrap();
    let expected = predict_expected(&model, &records);
    let series = rolling_energy_residual(&records, &expected, 24.0, settings.min_window_coverage).unwrap();
    let threshold = derive_threshold(&series.valid_residuals(), settings.turbine.alert_quantile).unwrap();
    Reference {
        model,
        threshold,
        settings,
    }
}

// 5. Replicating a 15 h half-power incident.
fn event_replication(r: &Reference) -> Outcome {
    let (h0, h1) = (160.0 * 24.0, 160.0 * 24.0 + 15.0);
    let mut sc = year(502);
    sc.weather_overrides.push(WindOverride {
        start_hour: h0 - 12.0,
        end_hour: h1 + 12.0,
        wind_speed_mps: 9.0,
        jitter_sd: 0.4,
    });
    sc.faults.push(FaultSpec {
        kind: FaultKind::PitchMisalignment,
        start_hour: h0,
        end_hour: h1,
        magnitude: 0.5,
        pitch_offset_deg: 5.0,
        derate: 0.0,
    });
    let (records, truth) = generate(&sc).unwrap();
    let expected = predict_expected(&r.model, &records);
    let series = rolling_energy_residual(&records, &expected, 24.0, r.settings.min_window_coverage).unwrap();
    let events = detect_events(&series, r.threshold, r.settings.merge_gap_hours, 50.0).unwrap();
    let truth_mwh = truth.total_deficit_kwh() / 1000.0;
    let inj_start = sc.start + chrono::Duration::minutes((h0 * 60.0) as i64);
    let inj_end = sc.start + chrono::Duration::minutes((h1 * 60.0) as i64) - step();
    let Some(e) = events.first().filter(|_| events.len() == 1) else {
        return outcome(false, format!("{} events detected, threshold {:.3} MWh", events.len(), r.threshold));
    };
    let start_err = (e.start - inj_start).num_minutes() as f64 / 60.0;
    let end_err = (e.end - inj_end).num_minutes() as f64 / 60.0;
    let energy_err = (e.lost_energy_mwh - truth_mwh) / truth_mwh;
    outcome(
        start_err.abs() <= 2.0 && end_err.abs() <= 2.0 && energy_err.abs() <= 0.15 && e.peak_deficit_mwh > r.threshold,
        format!(
            "1 event, start {start_err:+.2} h, end {end_err:+.2} h, lost {:.2} vs injected {truth_mwh:.2} MWh ({:+.1}%), peak {:.2} vs threshold {:.3} MWh",
            e.lost_energy_mwh,
            100.0 * energy_err,
            e.peak_deficit_mwh,
            r.threshold
        ),
    )
}

// 6. False alarms on a fault-free year.
fn false_alarms(r: &Reference) -> Outcome {
    let (records, _) = generate(&year(503)).unwrap();
    let expected = predict_expected(&r.model, &records);
    let series = rolling_energy_residual(&records, &expected, 24.0, r.settings.min_window_coverage).unwrap();
    let events = detect_events(&series, r.threshold, r.settings.merge_gap_hours, 50.0).unwrap();
    let covered: usize = events
        .iter()
        .map(|e| {
            series
                .points
                .iter()
                .filter(|p| p.timestamp >= e.alert_start && p.timestamp <= e.alert_end && p.rolling_residual_mwh.is_some())
                .count()
        })
        .sum();
    let share = covered as f64 / series.valid_count() as f64;
    outcome(
        share <= 0.005,
        format!("{} events over {covered} of {} valid windows ({:.3}%)", events.len(), series.valid_count(), 100.0 * share),
    )
}

// 7. Training invariants.
fn training_invariants() -> Outcome {
    let (records, _) = generate(&Scenario {
        days: 31.0,
        seed: 701,
        ..Default::default()
    })
    .unwrap();
    let mut failures = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(702);
    let random_x: Vec<[f64; 3]> = (0..800).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let mut random = windref::regressors::FeatureMatrix::new(3);
    for row in &random_x {
        random.push_row(row);
    }
    let random_y: Vec<f64> = random_x
        .iter()
        .map(|r| (6.0 * r[0]).sin() + r[1] * r[2] + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let step_y: Vec<f64> = random_x.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
    let mut datasets = vec![("random", random.clone(), random_y), ("step", random, step_y)];
    for set in FeatureSet::ALL {
        datasets.push((set.as_str(), feature_matrix(&records, set), targets(&records)));
    }
    let mut stages = 0;
    for (name, x, y) in &datasets {
        let model = fit_gbm(x, y, &GbmParams::default(), 3).unwrap();
        stages += model.train_loss.len();
        if model.train_loss.windows(2).any(|w| w[1] > w[0]) {
            failures.push(format!("gbm loss rose on {name}"));
        }
    }

    let x = feature_matrix(&records, FeatureSet::VDT);
    let y = targets(&records);
    let knn = fit_knn(&x, &y, &KnnParams { k: 1 }).unwrap();
    let recalled = (0..x.n_rows()).filter(|&i| knn.predict(x.row(i)) == y[i]).count();
    if recalled != x.n_rows() {
        failures.push(format!("1-NN recalled {recalled}/{}", x.n_rows()));
    }

    let settings = Settings::default();
    let subset: Vec<ScadaRecord> = records.iter().step_by(3).cloned().collect();
    let (train, test) = train_test_split(&subset, 0.7, 5).unwrap();
    let mut candidates = Candidate::all();
    let base = select_model(&candidates, &train, &test, &settings, 5).unwrap().report;
    let argmin = base.rows.iter().map(|r| r.rmse_kw).fold(f64::INFINITY, f64::min);
    if base.selected_row().rmse_kw != argmin {
        failures.push("selected row is not the argmin".into());
    }
    for k in 0..3 {
        if k == 0 {
            candidates.reverse();
        } else {
            candidates.shuffle(&mut rng);
        }
        if select_model(&candidates, &train, &test, &settings, 5).unwrap().report != base {
            failures.push(format!("report changed under permutation {k}"));
        }
    }
    let tied: Vec<ReportRow> = Candidate::all()
        .into_iter()
        .map(|c| ReportRow {
            algorithm: c.algorithm,
            feature_set: c.feature_set,
            rmse_kw: 60.0,
            r2: None,
        })
        .collect();
    let mut shuffled = tied.clone();
    shuffled.shuffle(&mut rng);
    let tie = ModelReport::from_rows(shuffled).unwrap();
    let first = tie.selected_row();
    if (first.algorithm, first.feature_set) != (Algorithm::Gbm, FeatureSet::V) {
        failures.push(format!("tie resolved to {} / {}", first.algorithm, first.feature_set));
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "gbm loss monotone over {stages} stages on {} datasets; 1-NN recalled {recalled} rows; selection stable under 3 permutations, ties resolved to gbm / V",
                datasets.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn collect_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

// 8. End-to-end determinism.
fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    common::pipeline(a.path(), common::FAULT_SCENARIO, "31");
    common::pipeline(b.path(), common::FAULT_SCENARIO, "31");
    let (fa, fb) = (collect_files(a.path()), collect_files(b.path()));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let same_set = fa.keys().eq(fb.keys());
    outcome(
        same_set && differing.is_empty(),
        format!(
            "{} files compared, {} differ{}",
            fa.len(),
            differing.len(),
            if same_set { "" } else { ", file sets differ" }
        ),
    )
}

// 9. Threshold oracle on Gaussian residuals.
fn threshold_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let draws: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let t = derive_threshold(&draws, 0.001).unwrap();
    outcome((t - 3.29).abs() <= 0.15, format!("threshold {t:.4} MWh"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with("--")).collect();
    let wanted = |n: u32| filter.is_empty() || filter.iter().any(|f| f == &n.to_string());
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        if wanted(n) {
            let t = Instant::now();
            let o = f();
            let secs = t.elapsed().as_secs_f64();
            println!("criterion {n} [{}] {name}: {} ({secs:.1} s)", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((n, name, o, secs));
        }
    };
    run(1, "model accuracy", &model_accuracy);
    run(2, "outlier filter calibration", &outlier_calibration);
    run(3, "energy arithmetic", &energy_arithmetic);
    run(4, "metric identities", &metric_identities);
    if wanted(5) || wanted(6) {
        let r = reference();
        run(5, "event replication", &|| event_replication(&r));
        run(6, "false-alarm bound", &|| false_alarms(&r));
    }
    run(7, "training invariants", &training_invariants);
    run(8, "end-to-end determinism", &determinism);
    run(9, "threshold oracle", &threshold_oracle);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
