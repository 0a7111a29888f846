//! Channel comparison between an event and a reference period.
//!
//! Descriptive only: bins where blades pitch unusually for the wind speed,
//! and channels ranked by how far the event mean sits from the reference.

use std::cmp::Ordering;
use std::fmt;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScadaRecord;
use crate::preprocess::bin_index;
use crate::quantile::{quantile_sorted, sorted_copy};

/// Bins with fewer reference samples than this are left out of the
/// pitch table.
pub const MIN_REFERENCE_BIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    HydraulicPressure,
    PitchAngle,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::HydraulicPressure, Channel::PitchAngle];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::HydraulicPressure => "hydraulic_pressure",
            Channel::PitchAngle => "pitch_angle",
        }
    }

    fn value(self, r: &ScadaRecord) -> Option<f64> {
        match self {
            Channel::HydraulicPressure => r.hydraulic_pressure,
            Channel::PitchAngle => Some(r.pitch_angle),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchBinRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub reference_count: usize,
    pub reference_q05: f64,
    pub reference_median: f64,
    pub reference_q95: f64,
    pub event_count: usize,
    pub event_median: f64,
    /// Event median outside the reference 5–95% band.
    pub flagged: bool,
}

fn pitch_by_bin(records: &[ScadaRecord], bin_width: f64) -> std::collections::BTreeMap<usize, Vec<f64>> {
    let mut bins: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in records {
        bins.entry(bin_index(r.wind_speed, bin_width)).or_default().push(r.pitch_angle);
    }
    bins
}

/// Per wind-speed bin, the reference pitch band against the event median.
/// Bins without event samples, or with too few reference samples, are omitted.
pub fn pitch_vs_speed_comparison(
    event: &[ScadaRecord],
    reference: &[ScadaRecord],
    bin_width: f64,
) -> Result<Vec<PitchBinRow>> {
    if event.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput(format!(
            "pitch comparison needs event and reference records (have {} and {})",
            event.len(),
            reference.len()
        )));
    }
    if !(bin_width > 0.0) {
        return Err(Error::Config(format!("bin_width {bin_width} must be > 0")));
    }
    let reference_bins = pitch_by_bin(reference, bin_width);
    let mut rows = Vec::new();
    for (bin, ev) in pitch_by_bin(event, bin_width) {
        let Some(rf) = reference_bins.get(&bin).filter(|v| v.len() >= MIN_REFERENCE_BIN) else {
            continue;
        };
        let rf = sorted_copy(rf);
        let ev = sorted_copy(&ev);
        let (q05, q95) = (quantile_sorted(&rf, 0.05), quantile_sorted(&rf, 0.95));
        let event_median = quantile_sorted(&ev, 0.5);
        rows.push(PitchBinRow {
            bin_lo: bin as f64 * bin_width,
            bin_hi: (bin + 1) as f64 * bin_width,
            reference_count: rf.len(),
            reference_q05: q05,
            reference_median: quantile_sorted(&rf, 0.5),
            reference_q95: q95,
            event_count: ev.len(),
            event_median,
            flagged: event_median < q05 || event_median > q95,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStat {
    pub channel: Channel,
    pub reference_mean: f64,
    pub reference_std: f64,
    pub event_mean: f64,
    /// `None` when the reference is constant.
    pub z: Option<f64>,
}

fn channel_values(channel: Channel, records: &[ScadaRecord], which: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = records.iter().filter_map(|r| channel.value(r)).collect();
    if values.is_empty() {
        return Err(Error::MissingChannel(format!("{channel} absent from {which} records")));
    }
    // sorted so the statistics depend only on the multiset
    Ok(sorted_copy(&values))
}

fn mean_std(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let std = if sorted.len() < 2 {
        0.0
    } else {
        (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Per-channel z-score of the event mean, ranked by `|z|` descending with
/// ties broken by channel name; undefined scores rank last.
pub fn channel_summary(event: &[ScadaRecord], reference: &[ScadaRecord], channels: &[Channel]) -> Result<Vec<ChannelStat>> {
    let mut stats = Vec::with_capacity(channels.len());
    for &channel in channels {
        let (reference_mean, reference_std) = mean_std(&channel_values(channel, reference, "reference")?);
        let (event_mean, _) = mean_std(&channel_values(channel, event, "event")?);
        let z = (reference_std > 0.0).then(|| (event_mean - reference_mean) / reference_std);
        stats.push(ChannelStat {
            channel,
            reference_mean,
            reference_std,
            event_mean,
            z,
        });
    }
    stats.sort_by(|a, b| match (a.z, b.z) {
        (Some(x), Some(y)) => y.abs().total_cmp(&x.abs()).then(a.channel.as_str().cmp(b.channel.as_str())),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.channel.as_str().cmp(b.channel.as_str()),
    });
    Ok(stats)
}

/// Records with `start <= t <= end`.
pub fn event_records(records: &[ScadaRecord], start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<ScadaRecord> {
    records
        .iter()
        .filter(|r| r.timestamp >= start && r.timestamp <= end)
        .cloned()
        .collect()
}

/// First instant of the calendar month containing `t`, and of the next one.
pub fn month_bounds(t: DateTime<Utc>) -> (DateTime<Utc>, DateTime<Utc>) {
    let start = Utc.with_ymd_and_hms(t.year(), t.month(), 1, 0, 0, 0).unwrap();
    let (y, m) = if t.month() == 12 { (t.year() + 1, 1) } else { (t.year(), t.month() + 1) };
    (start, Utc.with_ymd_and_hms(y, m, 1, 0, 0, 0).unwrap())
}

/// Default reference: the event's calendar month with the event span removed.
pub fn reference_period(records: &[ScadaRecord], start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<ScadaRecord> {
    let (m0, m1) = month_bounds(start);
    records
        .iter()
        .filter(|r| r.timestamp >= m0 && r.timestamp < m1 && !(r.timestamp >= start && r.timestamp <= end))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDiagnosis {
    pub event_start: DateTime<Utc>,
    pub event_end: DateTime<Utc>,
    pub event_records: usize,
    pub reference_start: DateTime<Utc>,
    pub reference_end: DateTime<Utc>,
    pub reference_records: usize,
    pub pitch_table: Vec<PitchBinRow>,
    pub flagged_bins: usize,
    pub channels: Vec<ChannelStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub bin_width: f64,
    pub events: Vec<EventDiagnosis>,
}

impl DiagnosisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnosis serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Diagnoses one event span against its default reference. Only records
/// with status 0 are compared; channels missing from either side are skipped.
pub fn diagnose_event(
    records: &[ScadaRecord],
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    bin_width: f64,
) -> Result<EventDiagnosis> {
    let normal: Vec<ScadaRecord> = records.iter().filter(|r| r.status_code == 0).cloned().collect();
    let event = event_records(&normal, start, end);
    let reference = reference_period(&normal, start, end);
    let pitch_table = pitch_vs_speed_comparison(&event, &reference, bin_width)?;
    let available: Vec<Channel> = Channel::ALL
        .into_iter()
        .filter(|c| event.iter().any(|r| c.value(r).is_some()) && reference.iter().any(|r| c.value(r).is_some()))
        .collect();
    let channels = channel_summary(&event, &reference, &available)?;
    let (reference_start, reference_end) = month_bounds(start);
    Ok(EventDiagnosis {
        event_start: start,
        event_end: end,
        event_records: event.len(),
        reference_start,
        reference_end,
        reference_records: reference.len(),
        flagged_bins: pitch_table.iter().filter(|r| r.flagged).count(),
        pitch_table,
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::step;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rec(i: usize, v: f64, pitch: f64, hyd: Option<f64>) -> ScadaRecord {
        ScadaRecord {
            timestamp: Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap() + step() * i as i32,
            wind_speed: v,
            wind_dir: 0.0,
            air_temp: 0.0,
            power: 0.0,
            pitch_angle: pitch,
            hydraulic_pressure: hyd,
            status_code: 0,
        }
    }

    fn sample(rng: &mut ChaCha8Rng, n: usize, offset: f64, hyd_shift: f64, start: usize) -> Vec<ScadaRecord> {
        let noise = Normal::new(0.0, 0.3).unwrap();
        let hyd = Normal::new(200.0, 2.0).unwrap();
        (0..n)
            .map(|i| {
                let v: f64 = rng.random_range(3.0..20.0);
                let pitch = (2.2 * (v - 12.0)).max(1.0) + noise.sample(rng);
                let off = if (7.0..10.0).contains(&v) { offset } else { 0.0 };
                rec(start + i, v, pitch + off, Some(hyd.sample(rng) + hyd_shift))
            })
            .collect()
    }

    #[test]
    fn resampled_null_rarely_flags() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut flagged = 0;
        let mut total = 0;
        for _ in 0..50 {
            let reference = sample(&mut rng, 4000, 0.0, 0.0, 0);
            let event = sample(&mut rng, 90, 0.0, 0.0, 5000);
            let rows = pitch_vs_speed_comparison(&event, &reference, 1.0).unwrap();
            flagged += rows.iter().filter(|r| r.flagged).count();
            total += rows.len();
            for s in channel_summary(&event, &reference, &Channel::ALL).unwrap() {
                assert!(s.z.unwrap().abs() < 3.0, "{s:?}");
            }
        }
        assert!((flagged as f64) < 0.01 * total as f64, "{flagged}/{total}");
    }

    #[test]
    fn pitch_offset_flags_its_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reference = sample(&mut rng, 4000, 0.0, 0.0, 0);
        let event = sample(&mut rng, 300, 5.0, 0.0, 5000);
        let rows = pitch_vs_speed_comparison(&event, &reference, 1.0).unwrap();
        for r in &rows {
            let inside = r.bin_lo >= 7.0 && r.bin_hi <= 10.0;
            assert_eq!(r.flagged, inside, "{r:?}");
        }
        assert_eq!(rows.iter().filter(|r| r.flagged).count(), 3);
    }

    #[test]
    fn hydraulic_drop_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reference = sample(&mut rng, 4000, 0.0, 0.0, 0);
        let event = sample(&mut rng, 90, 0.0, -10.0, 5000);
        let ranked = channel_summary(&event, &reference, &Channel::ALL).unwrap();
        assert_eq!(ranked[0].channel, Channel::HydraulicPressure);
        assert!(ranked[0].z.unwrap() < -4.0);
    }

    #[test]
    fn empty_event_bins_omitted() {
        let reference: Vec<_> = (0..200).map(|i| rec(i, 3.0 + (i % 10) as f64, 1.0, None)).collect();
        let event: Vec<_> = (0..10).map(|i| rec(300 + i, 5.5, 1.0, None)).collect();
        let rows = pitch_vs_speed_comparison(&event, &reference, 1.0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bin_lo, 5.0);
        assert!(pitch_vs_speed_comparison(&[], &reference, 1.0).is_err());
    }

    #[test]
    fn constant_reference_ranks_last() {
        let reference: Vec<_> = (0..50).map(|i| rec(i, 8.0, (i % 7) as f64, Some(200.0))).collect();
        let event: Vec<_> = (0..10).map(|i| rec(100 + i, 8.0, 0.5, Some(150.0))).collect();
        let ranked = channel_summary(&event, &reference, &Channel::ALL).unwrap();
        assert_eq!(ranked[0].channel, Channel::PitchAngle);
        assert_eq!(ranked[1].channel, Channel::HydraulicPressure);
        assert!(ranked[1].z.is_none());
    }

    #[test]
    fn missing_hydraulic_channel() {
        let reference: Vec<_> = (0..50).map(|i| rec(i, 8.0, 1.0, None)).collect();
        let err = channel_summary(&reference, &reference, &[Channel::HydraulicPressure]).unwrap_err();
        assert!(matches!(err, Error::MissingChannel(_)));
    }

    #[test]
    fn reference_excludes_event_and_other_months() {
        let records: Vec<_> = (0..(40 * 144)).map(|i| rec(i, 8.0, 1.0, None)).collect();
        let start = Utc.with_ymd_and_hms(2023, 3, 10, 0, 0, 0).unwrap();
        let end = start + step() * 89;
        let reference = reference_period(&records, start, end);
        assert_eq!(reference.len(), 31 * 144 - 90);
        assert!(reference.iter().all(|r| r.timestamp.month() == 3));
        assert_eq!(event_records(&records, start, end).len(), 90);
        assert_eq!(month_bounds(Utc.with_ymd_and_hms(2023, 12, 5, 0, 0, 0).unwrap()).1.year(), 2024);
    }

    proptest! {
        #[test]
        fn affine_rescaling_keeps_ranking(seed in 0u64..200, a in 0.1f64..50.0, b in -500.0f64..500.0, neg in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let reference = sample(&mut rng, 300, 0.0, 0.0, 0);
            let event = sample(&mut rng, 40, 1.0, -3.0, 500);
            let a = if neg { -a } else { a };
            let scale = |rs: &[ScadaRecord]| -> Vec<ScadaRecord> {
                rs.iter().cloned().map(|mut r| { r.hydraulic_pressure = r.hydraulic_pressure.map(|h| a * h + b); r }).collect()
            };
            let base = channel_summary(&event, &reference, &Channel::ALL).unwrap();
            let moved = channel_summary(&scale(&event), &scale(&reference), &Channel::ALL).unwrap();
            let gap = (base[0].z.unwrap().abs() - base[1].z.unwrap().abs()).abs();
            prop_assume!(gap > 1e-6);
            let names = |v: &[ChannelStat]| v.iter().map(|s| s.channel).collect::<Vec<_>>();
            prop_assert_eq!(names(&base), names(&moved));
        }

        #[test]
        fn order_independent(seed in 0u64..200, rot in 0usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut reference = sample(&mut rng, 300, 0.0, 0.0, 0);
            let mut event = sample(&mut rng, 60, 2.0, -1.0, 500);
            let t1 = pitch_vs_speed_comparison(&event, &reference, 1.0).unwrap();
            let c1 = channel_summary(&event, &reference, &Channel::ALL).unwrap();
            reference.rotate_left(rot);
            event.reverse();
            prop_assert_eq!(t1, pitch_vs_speed_comparison(&event, &reference, 1.0).unwrap());
            prop_assert_eq!(c1, channel_summary(&event, &reference, &Channel::ALL).unwrap());
        }
    }
}
