//! Expected-power estimation, rolling energy residuals, performance
//! metrics, alert thresholds and underperformance events.
//!
//! The residual monitored is the trailing-window sum of actual minus
//! expected step energy. Each 10-minute step contributes `P / 6` kWh.

use std::collections::VecDeque;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, parse_timestamp, step, steps_between, ScadaRecord, STEPS_PER_HOUR};
use crate::quantile::{quantile_sorted, sorted_copy};
use crate::regressors::ReferenceModel;

/// Energy of one 10-minute step at constant power.
pub fn step_energy_kwh(power_kw: f64) -> f64 {
    power_kw / 6.0
}

/// Expected power per record.
pub fn predict_expected<M: ReferenceModel + ?Sized>(model: &M, records: &[ScadaRecord]) -> Vec<f64> {
    records.par_iter().map(|r| model.predict_record(r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub timestamp: DateTime<Utc>,
    pub power_kw: f64,
    pub expected_kw: f64,
    /// `E − E_exp` of this step in kWh.
    pub step_residual_kwh: f64,
    /// False for steps with a logged status; they are excluded from sums.
    pub counted: bool,
    /// Trailing-window residual in MWh; `None` below the coverage floor.
    pub rolling_residual_mwh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub horizon_hours: f64,
    pub window_steps: usize,
    pub points: Vec<ResidualPoint>,
}

impl ResidualSeries {
    pub fn valid_residuals(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.rolling_residual_mwh).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| p.rolling_residual_mwh.is_some()).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["timestamp", "power_kw", "expected_kw", "rolling_residual_mwh", "valid"])?;
        for p in &self.points {
            w.write_record([
                format_timestamp(&p.timestamp),
                p.power_kw.to_string(),
                p.expected_kw.to_string(),
                p.rolling_residual_mwh.map(|v| v.to_string()).unwrap_or_default(),
                p.rolling_residual_mwh.is_some().to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

/// One row of a residual series CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub timestamp: DateTime<Utc>,
    pub power_kw: f64,
    pub expected_kw: f64,
    pub rolling_residual_mwh: Option<f64>,
}

pub fn read_residual_csv(path: &Path) -> Result<Vec<ResidualRow>> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let bad = |line: u64, what: &str| Error::Config(format!("{}:{line}: bad {what}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize, what: &str| row.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(line, what));
        let rolling = match row.get(3) {
            Some("") => None,
            Some(_) => Some(num(3, "rolling_residual_mwh")?),
            None => return Err(bad(line, "row")),
        };
        out.push(ResidualRow {
            timestamp: parse_timestamp(row.get(0).unwrap_or_default()).map_err(|_| bad(line, "timestamp"))?,
            power_kw: num(1, "power_kw")?,
            expected_kw: num(2, "expected_kw")?,
            rolling_residual_mwh: rolling,
        });
    }
    Ok(out)
}

/// Number of grid steps in a horizon; errors below one step.
pub fn window_steps(horizon_hours: f64) -> Result<usize> {
    let steps = (horizon_hours * STEPS_PER_HOUR as f64 + 1e-9).floor();
    if !(steps >= 1.0) {
        return Err(Error::Config(format!("horizon {horizon_hours} h is shorter than one 10-minute step")));
    }
    Ok(steps as usize)
}

/// Trailing-window accumulator over `(t − horizon, t]`, fed one step at a
/// time in timestamp order.
#[derive(Debug, Clone)]
pub struct RollingResidual {
    window_steps: usize,
    min_count: f64,
    entries: VecDeque<(DateTime<Utc>, f64)>,
    last: Option<DateTime<Utc>>,
}

impl RollingResidual {
    pub fn new(horizon_hours: f64, min_coverage: f64) -> Result<Self> {
        let window_steps = window_steps(horizon_hours)?;
        Ok(Self {
            window_steps,
            min_count: min_coverage * window_steps as f64,
            entries: VecDeque::with_capacity(window_steps),
            last: None,
        })
    }

    pub fn window_steps(&self) -> usize {
        self.window_steps
    }

    /// Adds the step at `ts` (`None` when it does not count) and returns the
    /// window sum in kWh if coverage suffices.
    pub fn push(&mut self, ts: DateTime<Utc>, residual_kwh: Option<f64>) -> Option<f64> {
        if let Some(last) = self.last {
            assert!(ts > last, "rolling residual fed out of order");
        }
        self.last = Some(ts);
        if let Some(r) = residual_kwh {
            self.entries.push_back((ts, r));
        }
        let cutoff = ts - step() * self.window_steps as i32;
        while self.entries.front().is_some_and(|(t, _)| *t <= cutoff) {
            self.entries.pop_front();
        }
        (self.entries.len() as f64 >= self.min_count - 1e-9).then(|| self.entries.iter().map(|(_, r)| r).sum())
    }
}

/// Rolling energy residual over aligned actual and expected series.
/// Records with a nonzero status code are excluded from every window.
pub fn rolling_energy_residual(
    records: &[ScadaRecord],
    expected: &[f64],
    horizon_hours: f64,
    min_coverage: f64,
) -> Result<ResidualSeries> {
    if records.len() != expected.len() {
        return Err(Error::Insufficient(format!(
            "{} records vs {} expected values",
            records.len(),
            expected.len()
        )));
    }
    let mut acc = RollingResidual::new(horizon_hours, min_coverage)?;
    let points = records
        .iter()
        .zip(expected)
        .map(|(r, &e)| {
            let step_residual_kwh = step_energy_kwh(r.power) - step_energy_kwh(e);
            let counted = r.status_code == 0;
            let rolling = acc.push(r.timestamp, counted.then_some(step_residual_kwh));
            ResidualPoint {
                timestamp: r.timestamp,
                power_kw: r.power,
                expected_kw: e,
                step_residual_kwh,
                counted,
                rolling_residual_mwh: rolling.map(|kwh| kwh / 1000.0),
            }
        })
        .collect();
    Ok(ResidualSeries {
        horizon_hours,
        window_steps: acc.window_steps(),
        points,
    })
}

/// Denominators below this magnitude (kW or kWh) make ratio metrics invalid.
pub const RATIO_CUTOFF: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    /// `P − P_exp`, kW.
    pub m1: f64,
    /// `|P − P_exp|`, kW.
    pub m2: f64,
    /// `(P − P_exp) / P_exp`.
    pub m3: Option<f64>,
    /// `|(P − P_exp) / P_exp|`.
    pub m4: Option<f64>,
    /// `P / P_exp`.
    pub m5: Option<f64>,
    /// `E / E_exp`.
    pub m6: Option<f64>,
}

pub fn compute_metrics(p: f64, p_exp: f64, e: f64, e_exp: f64) -> MetricVector {
    let m1 = p - p_exp;
    let power_ok = p_exp.abs() >= RATIO_CUTOFF;
    let m3 = power_ok.then(|| m1 / p_exp);
    MetricVector {
        m1,
        m2: m1.abs(),
        m3,
        m4: m3.map(f64::abs),
        m5: power_ok.then(|| p / p_exp),
        m6: (e_exp.abs() >= RATIO_CUTOFF).then(|| e / e_exp),
    }
}

/// Level `1 − alert_quantile` quantile of `|residual|`: the magnitude
/// exceeded by an `alert_quantile` share of the history.
pub fn derive_threshold(residuals: &[f64], alert_quantile: f64) -> Result<f64> {
    if !(alert_quantile > 0.0 && alert_quantile < 0.5) {
        return Err(Error::Config(format!("alert_quantile {alert_quantile} outside (0, 0.5)")));
    }
    let needed = (1.0 / alert_quantile).ceil() as usize;
    if residuals.len() < needed {
        return Err(Error::Insufficient(format!(
            "threshold at quantile {alert_quantile} needs {needed} valid residuals, have {}",
            residuals.len()
        )));
    }
    let magnitudes: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    Ok(quantile_sorted(&sorted_copy(&magnitudes), 1.0 - alert_quantile))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnderperformanceEvent {
    /// First step of the attributed deficit span.
    pub start: DateTime<Utc>,
    /// Last step of the attributed deficit span.
    pub end: DateTime<Utc>,
    /// First step whose rolling residual crossed the threshold.
    pub alert_start: DateTime<Utc>,
    /// Last step of the (merged) alert run.
    pub alert_end: DateTime<Utc>,
    /// Steps inside the alert span at or below the negative threshold.
    pub alert_steps: usize,
    /// Magnitude of the most negative rolling residual, MWh.
    pub peak_deficit_mwh: f64,
    /// Deficit energy over the attributed span, MWh, floored at 0.
    pub lost_energy_mwh: f64,
    pub opportunity_cost: f64,
}

impl UnderperformanceEvent {
    pub fn duration_hours(&self) -> f64 {
        (steps_between(&self.start, &self.end) + 1) as f64 / STEPS_PER_HOUR as f64
    }
}

/// A run of rolling residuals beyond the threshold on either side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceRun {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    /// Indices into the series.
    #[serde(skip)]
    pub first: usize,
    #[serde(skip)]
    pub last: usize,
    pub steps: usize,
    /// Largest magnitude within the run, MWh.
    pub peak_mwh: f64,
}

fn exceedance_runs(series: &ResidualSeries, merge_gap_hours: f64, exceeds: impl Fn(f64) -> bool) -> Vec<ExceedanceRun> {
    let mut runs: Vec<ExceedanceRun> = Vec::new();
    let pts = &series.points;
    for (i, p) in pts.iter().enumerate() {
        let Some(r) = p.rolling_residual_mwh.filter(|r| exceeds(*r)) else {
            continue;
        };
        if let Some(last) = runs.last_mut() {
            let separation = steps_between(&pts[last.last].timestamp, &p.timestamp) - 1;
            let adjacent = separation == 0 && last.last + 1 == i;
            if adjacent || (separation as f64) / (STEPS_PER_HOUR as f64) < merge_gap_hours {
                last.last = i;
                last.end = p.timestamp;
                last.steps += 1;
                last.peak_mwh = last.peak_mwh.max(r.abs());
                continue;
            }
        }
        runs.push(ExceedanceRun {
            start: p.timestamp,
            end: p.timestamp,
            first: i,
            last: i,
            steps: 1,
            peak_mwh: r.abs(),
        });
    }
    runs
}

/// Runs with rolling residual at or above `+threshold`; reported as data
/// quality flags rather than events.
pub fn detect_overperformance(series: &ResidualSeries, threshold_mwh: f64, merge_gap_hours: f64) -> Vec<ExceedanceRun> {
    exceedance_runs(series, merge_gap_hours, |r| r >= threshold_mwh)
}

/// Underperformance events: maximal runs with rolling residual at or below
/// `−threshold`, merged across separations shorter than `merge_gap_hours`.
///
/// The alert run lags the fault by up to one horizon on both ends. The
/// event's `start..end` is therefore attributed separately: among the steps
/// from one horizon before the alert start up to the alert end, it is the
/// contiguous span maximising total deficit minus a per-step allowance of
/// `threshold / window_steps`. Spans never reach back into the previous
/// event, so no step's deficit is counted twice.
pub fn detect_events(
    series: &ResidualSeries,
    threshold_mwh: f64,
    merge_gap_hours: f64,
    energy_price: f64,
) -> Result<Vec<UnderperformanceEvent>> {
    if !(threshold_mwh >= 0.0) {
        return Err(Error::Config(format!("threshold {threshold_mwh} must be >= 0")));
    }
    let pts = &series.points;
    let allowance_kwh = threshold_mwh * 1000.0 / series.window_steps as f64;
    let mut events = Vec::new();
    let mut floor_idx = 0usize;

    for run in exceedance_runs(series, merge_gap_hours, |r| r <= -threshold_mwh) {
        let alert_start = pts[run.first].timestamp;
        let window_open = alert_start - step() * (series.window_steps as i32 - 1);
        let lo = pts[floor_idx..=run.first]
            .iter()
            .position(|p| p.timestamp >= window_open)
            .map(|k| floor_idx + k)
            .unwrap_or(run.first);

        // penalised maximum-deficit subarray (Kadane) over lo..=run.last
        let mut best = (f64::NEG_INFINITY, run.first, run.last);
        let mut cur = 0.0;
        let mut cur_start = lo;
        for (i, p) in pts.iter().enumerate().take(run.last + 1).skip(lo) {
            if !p.counted {
                continue;
            }
            if cur <= 0.0 {
                cur = 0.0;
                cur_start = i;
            }
            cur += -p.step_residual_kwh - allowance_kwh;
            if cur > best.0 {
                best = (cur, cur_start, i);
            }
        }
        let (first, last) = if best.0 > 0.0 { (best.1, best.2) } else { (run.first, run.last) };
        let deficit_kwh: f64 = pts[first..=last]
            .iter()
            .filter(|p| p.counted)
            .map(|p| -p.step_residual_kwh)
            .sum();
        let lost_energy_mwh = (deficit_kwh / 1000.0).max(0.0);
        let alert_steps = pts[run.first..=run.last]
            .iter()
            .filter(|p| p.rolling_residual_mwh.is_some_and(|r| r <= -threshold_mwh))
            .count();
        events.push(UnderperformanceEvent {
            start: pts[first].timestamp,
            end: pts[last].timestamp,
            alert_start,
            alert_end: run.end,
            alert_steps,
            peak_deficit_mwh: run.peak_mwh,
            lost_energy_mwh,
            opportunity_cost: lost_energy_mwh * energy_price,
        });
        floor_idx = last.max(run.last) + 1;
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    /// Quantile over every valid residual of the monitored series.
    AllObserved,
    /// Quantile over a separate reference period.
    Reference,
    /// Supplied by the operator.
    Fixed,
}

/// Event report as written to `events.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub threshold_mwh: f64,
    pub alert_quantile: f64,
    pub threshold_source: ThresholdSource,
    pub horizon_hours: f64,
    pub merge_gap_hours: f64,
    pub energy_price: f64,
    pub valid_windows: usize,
    pub events: Vec<UnderperformanceEvent>,
    pub overperformance: Vec<ExceedanceRun>,
}

impl EventReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("event report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// JSON schema of `events.json`.
pub const EVENT_REPORT_SCHEMA: &str = include_str!("../schemas/events.schema.json");

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn recs(powers: &[f64]) -> Vec<ScadaRecord> {
        powers
            .iter()
            .enumerate()
            .map(|(i, &p)| ScadaRecord {
                timestamp: t0() + step() * i as i32,
                wind_speed: 8.0,
                wind_dir: 0.0,
                air_temp: 0.0,
                power: p,
                pitch_angle: 0.0,
                hydraulic_pressure: None,
                status_code: 0,
            })
            .collect()
    }

    #[test]
    fn step_energy_is_one_sixth() {
        assert_eq!(step_energy_kwh(600.0), 100.0);
        assert_eq!(step_energy_kwh(3300.0), 550.0);
    }

    #[test]
    fn perfect_prediction_zero_residual() {
        let r = recs(&[1000.0; 300]);
        let s = rolling_energy_residual(&r, &[1000.0; 300], 24.0, 0.9).unwrap();
        assert!(s.points.iter().filter_map(|p| p.rolling_residual_mwh).all(|v| v == 0.0));
    }

    #[test]
    fn half_power_full_day() {
        let r = recs(&[1650.0; 144]);
        let s = rolling_energy_residual(&r, &[3300.0; 144], 24.0, 0.9).unwrap();
        let last = s.points[143].rolling_residual_mwh.unwrap();
        assert!((last + 39.6).abs() < 1e-9 * 39.6, "{last}");
    }

    #[test]
    fn coverage_gate() {
        let r = recs(&[0.0; 200]);
        let s = rolling_energy_residual(&r, &[0.0; 200], 24.0, 0.9).unwrap();
        // 0.9 · 144 = 129.6 → index 129 (130th step) is the first valid one
        assert!(s.points[128].rolling_residual_mwh.is_none());
        assert!(s.points[129].rolling_residual_mwh.is_some());
    }

    #[test]
    fn single_step_deficit_persists_one_horizon() {
        let n = 600;
        let mut p = vec![2000.0; n];
        p[300] = 1400.0;
        let s = rolling_energy_residual(&recs(&p), &vec![2000.0; n], 24.0, 0.9).unwrap();
        let hits: Vec<usize> = (0..n)
            .filter(|&i| s.points[i].rolling_residual_mwh.is_some_and(|v| (v + 0.1).abs() < 1e-12))
            .collect();
        // oracle: the deficit is inside (t − 24 h, t] for t = 300 … 443
        assert_eq!(hits, (300..444).collect::<Vec<_>>());
        let zero = (0..n).filter(|&i| s.points[i].rolling_residual_mwh == Some(0.0)).count();
        assert_eq!(zero + hits.len(), s.valid_count());
    }

    #[test]
    fn horizon_shorter_than_step() {
        assert!(rolling_energy_residual(&recs(&[0.0]), &[0.0], 0.1, 0.9).is_err());
        assert_eq!(window_steps(2.0).unwrap(), 12);
        assert_eq!(window_steps(30.0).unwrap(), 180);
    }

    #[test]
    fn logged_status_steps_excluded() {
        let mut r = recs(&[0.0; 12]);
        r[5].status_code = 4;
        let s = rolling_energy_residual(&r, &[600.0; 12], 2.0, 0.9).unwrap();
        // 11 of 12 counted steps: 11/12 >= 0.9
        assert!((s.points[11].rolling_residual_mwh.unwrap() + 1.1).abs() < 1e-12);
        assert!(!s.points[5].counted);
    }

    #[test]
    fn metric_arithmetic() {
        let m = compute_metrics(2000.0, 2500.0, 2000.0 / 6.0, 2500.0 / 6.0);
        assert_eq!((m.m1, m.m2), (-500.0, 500.0));
        assert!((m.m3.unwrap() + 0.2).abs() < 1e-15);
        assert!((m.m4.unwrap() - 0.2).abs() < 1e-15);
        assert!((m.m5.unwrap() - 0.8).abs() < 1e-15);

        let m = compute_metrics(1800.0, 1800.0, 300.0, 300.0);
        assert_eq!((m.m1, m.m5, m.m6), (0.0, Some(1.0), Some(1.0)));

        let m = compute_metrics(-15.0, 50.0, -2.5, 50.0 / 6.0);
        assert!((m.m5.unwrap() + 0.3).abs() < 1e-15);

        let m = compute_metrics(10.0, 0.5, 1.0, 0.2);
        assert!(m.m3.is_none() && m.m4.is_none() && m.m5.is_none() && m.m6.is_none());
        assert_eq!(m.m2, 9.5);
    }

    #[test]
    fn threshold_basics() {
        assert_eq!(derive_threshold(&vec![0.0; 1000], 0.001).unwrap(), 0.0);
        assert!(matches!(derive_threshold(&vec![0.0; 999], 0.001), Err(Error::Insufficient(_))));
        // 1000 magnitudes 1..=1000 mirrored in sign: quantile 0.999 of |r|
        let rs: Vec<f64> = (1..=1000).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) }).collect();
        // h = 999 · 0.999 = 998.001 between sorted values 999 and 1000
        assert!((derive_threshold(&rs, 0.001).unwrap() - 999.001).abs() < 1e-9);
    }

    fn series_from_rolling(values: &[Option<f64>], window_steps: usize) -> ResidualSeries {
        ResidualSeries {
            horizon_hours: window_steps as f64 / 6.0,
            window_steps,
            points: values
                .iter()
                .enumerate()
                .map(|(i, v)| ResidualPoint {
                    timestamp: t0() + step() * i as i32,
                    power_kw: 0.0,
                    expected_kw: 0.0,
                    step_residual_kwh: v.unwrap_or(0.0) * 1000.0,
                    counted: true,
                    rolling_residual_mwh: *v,
                })
                .collect(),
        }
    }

    #[test]
    fn no_exceedance_no_event() {
        let s = series_from_rolling(&vec![Some(-0.5); 100], 1);
        assert!(detect_events(&s, 1.0, 1.0, 50.0).unwrap().is_empty());
    }

    #[test]
    fn ninety_step_run_is_fifteen_hours() {
        let mut v = vec![Some(0.0); 300];
        for x in v.iter_mut().skip(100).take(90) {
            *x = Some(-2.0);
        }
        let s = series_from_rolling(&v, 1);
        let ev = detect_events(&s, 1.0, 1.0, 40.0).unwrap();
        assert_eq!(ev.len(), 1);
        let e = &ev[0];
        assert_eq!(e.duration_hours(), 15.0);
        assert_eq!((e.alert_start, e.alert_end), (e.start, e.end));
        assert_eq!(e.alert_steps, 90);
        assert_eq!(e.peak_deficit_mwh, 2.0);
        assert!((e.lost_energy_mwh - 180.0).abs() < 1e-9);
        assert!((e.opportunity_cost - 180.0 * 40.0).abs() < 1e-6);
    }

    #[test]
    fn short_separations_merge() {
        let mut v = vec![Some(0.0); 300];
        for i in (50..60).chain(64..70).chain(200..210) {
            v[i] = Some(-3.0);
        }
        let s = series_from_rolling(&v, 1);
        let ev = detect_events(&s, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].alert_steps, 16);
        // 4-step (40 min) separation merged, the 130-step one was not
        assert_eq!(ev[0].alert_end, t0() + step() * 69);
        let unmerged = detect_events(&s, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(unmerged.len(), 3);
        for e in &unmerged {
            let i0 = steps_between(&t0(), &e.alert_start) as usize;
            let i1 = steps_between(&t0(), &e.alert_end) as usize;
            assert!((i0..=i1).all(|i| v[i].unwrap() <= -1.0));
        }
    }

    #[test]
    fn deficit_span_tracks_the_fault_not_the_alert() {
        // one day of 600 kW deficit inside three days of perfect production
        let n = 3 * 144;
        let mut p = vec![2000.0; n];
        for x in p.iter_mut().skip(150).take(90) {
            *x = 1400.0;
        }
        let s = rolling_energy_residual(&recs(&p), &vec![2000.0; n], 24.0, 0.9).unwrap();
        let ev = detect_events(&s, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(ev.len(), 1);
        let e = &ev[0];
        assert_eq!(e.start, t0() + step() * 150);
        assert_eq!(e.end, t0() + step() * 239);
        assert!((e.lost_energy_mwh - 9.0).abs() < 1e-9);
        assert!(e.alert_end > e.end);
        assert!((e.peak_deficit_mwh - 9.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_must_be_non_negative() {
        let s = series_from_rolling(&[Some(0.0)], 1);
        assert!(detect_events(&s, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn overperformance_is_separate() {
        let mut v = vec![Some(0.0); 50];
        v[10] = Some(5.0);
        v[30] = Some(-5.0);
        let s = series_from_rolling(&v, 1);
        assert_eq!(detect_overperformance(&s, 1.0, 1.0).len(), 1);
        assert_eq!(detect_events(&s, 1.0, 1.0, 0.0).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn metric_identities(p in -3300.0f64..3630.0, pe in prop_oneof![-3300.0f64..-1.0, 1.0f64..4950.0]) {
            let m = compute_metrics(p, pe, p / 6.0, pe / 6.0);
            prop_assert_eq!(m.m2, m.m1.abs());
            prop_assert_eq!(m.m4.unwrap(), m.m3.unwrap().abs());
            prop_assert!((m.m5.unwrap() - (m.m3.unwrap() + 1.0)).abs() <= 1e-12);
        }

        #[test]
        fn rolling_telescopes(steps in prop::collection::vec(-3000.0f64..3000.0, 20..120), w in 1usize..12) {
            let expected = vec![0.0; steps.len()];
            let s = rolling_energy_residual(&recs(&steps), &expected, w as f64 / 6.0, 1.0).unwrap();
            for t in w..steps.len() {
                let (a, b) = (s.points[t].rolling_residual_mwh.unwrap(), s.points[t - 1].rolling_residual_mwh.unwrap());
                let want = (step_energy_kwh(steps[t]) - step_energy_kwh(steps[t - w])) / 1000.0;
                prop_assert!((a - b - want).abs() < 1e-9);
            }
        }

        #[test]
        fn threshold_monotone_in_quantile(xs in prop::collection::vec(-10.0f64..10.0, 200..400), q1 in 0.005f64..0.4, dq in 0.0f64..0.09) {
            let lo = derive_threshold(&xs, q1).unwrap();
            let hi = derive_threshold(&xs, (q1 + dq).min(0.49)).unwrap();
            prop_assert!(lo >= hi);
        }

        #[test]
        fn appending_quiet_data_keeps_events(tail in 1usize..200) {
            let n = 3 * 144;
            let mut p = vec![2000.0; n];
            for x in p.iter_mut().skip(150).take(90) { *x = 1400.0; }
            let base = rolling_energy_residual(&recs(&p), &vec![2000.0; n], 24.0, 0.9).unwrap();
            p.extend(std::iter::repeat_n(2000.0, tail));
            let longer = rolling_energy_residual(&recs(&p), &vec![2000.0; p.len()], 24.0, 0.9).unwrap();
            prop_assert_eq!(detect_events(&base, 1.0, 1.0, 1.0).unwrap(), detect_events(&longer, 1.0, 1.0, 1.0).unwrap());
        }
    }
}
