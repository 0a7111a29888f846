//! Synthetic SCADA generator with a known power relation and injectable
//! faults.
//!
//! Wind speed is a Weibull marginal driven by an AR(1) Gaussian process
//! through the probability integral transform, so windows of several hours
//! see realistic persistence. Direction is a mean-reverting random walk
//! and temperature follows annual and diurnal cycles plus AR(1) noise.
//!
//! Faults change the generating process but leave `status_code` at 0; only
//! `logged_stops` produce nonzero status codes.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, step, Gap, ScadaRecord, STEPS_PER_HOUR};
use crate::monitor::step_energy_kwh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerCurve {
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
    /// kW.
    pub rated_power: f64,
    /// kW drawn from the grid below cut-in.
    pub consumption_kw: f64,
}

impl Default for PowerCurve {
    fn default() -> Self {
        Self {
            cut_in: 3.0,
            rated_speed: 12.0,
            cut_out: 25.0,
            rated_power: 3300.0,
            consumption_kw: 15.0,
        }
    }
}

/// Noise-free power at wind speed `v`.
pub fn ground_truth_power(v: f64, curve: &PowerCurve) -> f64 {
    if v < curve.cut_in {
        -curve.consumption_kw
    } else if v < curve.rated_speed {
        let c3 = curve.cut_in.powi(3);
        curve.rated_power * (v.powi(3) - c3) / (curve.rated_speed.powi(3) - c3)
    } else if v < curve.cut_out {
        curve.rated_power
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherParams {
    pub weibull_shape: f64,
    /// m/s.
    pub weibull_scale: f64,
    /// Lag-one correlation of the latent Gaussian wind process per step.
    pub autocorrelation: f64,
    /// Degrees.
    pub prevailing_dir: f64,
    /// Fraction of the angular distance to the prevailing direction
    /// recovered per step.
    pub dir_reversion: f64,
    /// Degrees per step.
    pub dir_step_sd: f64,
    /// °C.
    pub temp_mean: f64,
    pub temp_annual_amp: f64,
    pub temp_diurnal_amp: f64,
    pub temp_noise_sd: f64,
    pub temp_noise_autocorrelation: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        Self {
            weibull_shape: 2.0,
            weibull_scale: 7.5,
            autocorrelation: 0.99,
            prevailing_dir: 225.0,
            dir_reversion: 0.01,
            dir_step_sd: 5.0,
            temp_mean: 8.0,
            temp_annual_amp: 8.0,
            temp_diurnal_amp: 3.0,
            temp_noise_sd: 1.5,
            temp_noise_autocorrelation: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitchParams {
    /// Degrees below rated speed.
    pub fine_deg: f64,
    /// Degrees per m/s above rated speed.
    pub slope_deg_per_mps: f64,
    /// Degrees at and above cut-out.
    pub feathered_deg: f64,
    pub noise_sd_deg: f64,
}

impl Default for PitchParams {
    fn default() -> Self {
        Self {
            fine_deg: 1.0,
            slope_deg_per_mps: 2.2,
            feathered_deg: 88.0,
            noise_sd_deg: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydraulicParams {
    /// Leave the channel empty when false.
    pub emit: bool,
    pub nominal_bar: f64,
    pub noise_sd_bar: f64,
}

impl Default for HydraulicParams {
    fn default() -> Self {
        Self {
            emit: true,
            nominal_bar: 200.0,
            noise_sd_bar: 2.0,
        }
    }
}

/// Power multiplier `1 − derate · w(d)` with a raised-cosine weight over the
/// angular distance `d` to `center_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionDerate {
    pub center_deg: f64,
    pub half_width_deg: f64,
    pub derate: f64,
}

impl DirectionDerate {
    pub fn multiplier(&self, dir: f64) -> f64 {
        let d = angular_distance(dir, self.center_deg);
        if d >= self.half_width_deg {
            1.0
        } else {
            let w = 0.5 * (1.0 + (std::f64::consts::PI * d / self.half_width_deg).cos());
            1.0 - self.derate * w
        }
    }
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Gross errors added to a random share of the power readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierInjection {
    pub fraction: f64,
    /// Offset in multiples of `noise_sd_kw`, sign drawn at random.
    pub sigma_multiple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggedStop {
    pub start_hour: f64,
    pub end_hour: f64,
    pub status_code: i64,
}

/// Holds the wind at a fixed speed (plus jitter) over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindOverride {
    pub start_hour: f64,
    pub end_hour: f64,
    pub wind_speed_mps: f64,
    #[serde(default)]
    pub jitter_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// `magnitude` = power derate fraction; `pitch_offset_deg` adds to the
    /// reported pitch.
    PitchMisalignment,
    /// `magnitude` = pressure drop in bar; `derate` optionally cuts power.
    HydraulicDrop,
    /// `magnitude` = m/s added to the measured wind speed.
    AnemometerBias,
    /// Records in the window are not emitted.
    DataGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Hours since scenario start, inclusive.
    pub start_hour: f64,
    /// Hours since scenario start, exclusive.
    pub end_hour: f64,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default)]
    pub pitch_offset_deg: f64,
    #[serde(default)]
    pub derate: f64,
}

impl FaultSpec {
    fn power_derate(&self) -> f64 {
        match self.kind {
            FaultKind::PitchMisalignment => self.magnitude,
            FaultKind::HydraulicDrop => self.derate,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub start: DateTime<Utc>,
    pub days: f64,
    pub seed: u64,
    pub weather: WeatherParams,
    pub power_curve: PowerCurve,
    pub noise_sd_kw: f64,
    pub pitch: PitchParams,
    pub hydraulic: HydraulicParams,
    pub direction_derate: Vec<DirectionDerate>,
    pub outliers: Option<OutlierInjection>,
    pub logged_stops: Vec<LoggedStop>,
    pub weather_overrides: Vec<WindOverride>,
    pub faults: Vec<FaultSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            start: Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(),
            days: 365.0,
            seed: 1,
            weather: WeatherParams::default(),
            power_curve: PowerCurve::default(),
            noise_sd_kw: 50.0,
            pitch: PitchParams::default(),
            hydraulic: HydraulicParams::default(),
            direction_derate: Vec::new(),
            outliers: None,
            logged_stops: Vec::new(),
            weather_overrides: Vec::new(),
            faults: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn n_steps(&self) -> usize {
        (self.days * 24.0 * STEPS_PER_HOUR as f64).round() as usize
    }

    fn hours(&self) -> f64 {
        self.days * 24.0
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Scenario(m));
        let c = &self.power_curve;
        if !(c.cut_in < c.rated_speed && c.rated_speed < c.cut_out) {
            return fail(format!(
                "need cut_in < rated_speed < cut_out, got {} / {} / {}",
                c.cut_in, c.rated_speed, c.cut_out
            ));
        }
        if !(c.rated_power > 0.0) {
            return fail("rated_power must be > 0".into());
        }
        if !(self.noise_sd_kw >= 0.0) {
            return fail(format!("noise_sd_kw must be >= 0, got {}", self.noise_sd_kw));
        }
        if !(self.days > 0.0) || self.n_steps() == 0 {
            return fail("scenario must cover at least one step".into());
        }
        let w = &self.weather;
        if !(w.weibull_shape > 0.0 && w.weibull_scale > 0.0) {
            return fail("Weibull shape and scale must be > 0".into());
        }
        if !(w.autocorrelation.abs() < 1.0 && w.temp_noise_autocorrelation.abs() < 1.0) {
            return fail("autocorrelations must lie in (-1, 1)".into());
        }
        let check_window = |what: &str, s: f64, e: f64| -> Result<()> {
            if !(0.0 <= s && s < e && e <= self.hours()) {
                return Err(Error::Scenario(format!(
                    "{what} window [{s}, {e}) h outside the {} h scenario",
                    self.hours()
                )));
            }
            Ok(())
        };
        for f in &self.faults {
            check_window(&format!("{:?} fault", f.kind), f.start_hour, f.end_hour)?;
            let d = f.power_derate();
            if !(0.0..=1.0).contains(&d) {
                return fail(format!("derate {d} outside [0, 1]"));
            }
        }
        for s in &self.logged_stops {
            check_window("logged stop", s.start_hour, s.end_hour)?;
            if s.status_code == 0 {
                return fail("logged stop needs a nonzero status code".into());
            }
        }
        for o in &self.weather_overrides {
            check_window("wind override", o.start_hour, o.end_hour)?;
            if !(o.wind_speed_mps >= 0.0 && o.jitter_sd >= 0.0) {
                return fail("wind override speed and jitter must be >= 0".into());
            }
        }
        for d in &self.direction_derate {
            if !(d.half_width_deg > 0.0 && (0.0..=1.0).contains(&d.derate)) {
                return fail("direction derate needs half_width_deg > 0 and derate in [0, 1]".into());
            }
        }
        if let Some(o) = &self.outliers {
            if !(0.0..=1.0).contains(&o.fraction) {
                return fail("outlier fraction outside [0, 1]".into());
            }
        }
        Ok(())
    }
}

/// Per-step ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStep {
    pub timestamp: DateTime<Utc>,
    /// Noise-free power without faults, kW.
    pub true_expected_kw: f64,
    /// Noise-free power with faults, kW.
    pub faulted_kw: f64,
    pub injected_deficit_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub kind: FaultKind,
    pub start: DateTime<Utc>,
    /// Last affected step.
    pub end: DateTime<Utc>,
    pub steps: usize,
    /// Summed step deficit inside the window (all concurrent faults).
    pub deficit_kwh: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthLog {
    /// One entry per emitted record.
    pub steps: Vec<TruthStep>,
    pub faults: Vec<FaultInjection>,
    pub gaps: Vec<Gap>,
    /// Timestamps of records that carry an injected gross error.
    pub outliers: Vec<DateTime<Utc>>,
}

impl TruthLog {
    pub fn total_deficit_kwh(&self) -> f64 {
        self.steps.iter().map(|s| s.injected_deficit_kwh).sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["timestamp", "true_expected_kw", "injected_deficit_kwh"])?;
        for s in &self.steps {
            w.write_record([
                format_timestamp(&s.timestamp),
                s.true_expected_kw.to_string(),
                s.injected_deficit_kwh.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

fn in_window(hour: f64, start: f64, end: f64) -> bool {
    start <= hour && hour < end
}

/// `P(Z > z)` for standard normal `Z`.
fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

fn pitch_reference(v: f64, curve: &PowerCurve, p: &PitchParams) -> f64 {
    if v >= curve.cut_out {
        p.feathered_deg
    } else if v >= curve.rated_speed {
        p.fine_deg + p.slope_deg_per_mps * (v - curve.rated_speed)
    } else {
        p.fine_deg
    }
}

type FaultAccumulator = (Option<DateTime<Utc>>, DateTime<Utc>, usize, f64);

/// Generates records and the matching truth log. Bit-reproducible for a
/// fixed scenario.
pub fn generate(scenario: &Scenario) -> Result<(Vec<ScadaRecord>, TruthLog)> {
    scenario.validate()?;
    let n = scenario.n_steps();
    let w = &scenario.weather;
    let curve = &scenario.power_curve;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let innovation = (1.0 - w.autocorrelation * w.autocorrelation).sqrt();
    let temp_innovation = (1.0 - w.temp_noise_autocorrelation.powi(2)).sqrt();
    let mut z = gauss(&mut rng);
    let mut dir = wrap_degrees(w.prevailing_dir + 30.0 * gauss(&mut rng));
    let mut temp_noise = w.temp_noise_sd * gauss(&mut rng);

    let mut records = Vec::with_capacity(n);
    let mut truth = TruthLog::default();
    // per fault: first affected step, last affected step, steps, deficit
    let mut fault_acc: Vec<FaultAccumulator> = vec![(None, scenario.start, 0, 0.0); scenario.faults.len()];
    let mut gap_open: Option<Gap> = None;

    for i in 0..n {
        let ts = scenario.start + step() * i as i32;
        let hour = i as f64 / STEPS_PER_HOUR as f64;

        // draws happen every step in a fixed order so streams never shift
        z = w.autocorrelation * z + innovation * gauss(&mut rng);
        let dir_noise = gauss(&mut rng);
        temp_noise = w.temp_noise_autocorrelation * temp_noise + temp_innovation * w.temp_noise_sd * gauss(&mut rng);
        let power_noise = gauss(&mut rng);
        let pitch_noise = gauss(&mut rng);
        let pressure_noise = gauss(&mut rng);
        let jitter_noise = gauss(&mut rng);
        let outlier_u: f64 = rng.random();
        let outlier_sign: bool = rng.random();

        let tail = normal_sf(z).max(f64::MIN_POSITIVE);
        let mut wind = w.weibull_scale * (-tail.ln()).powf(1.0 / w.weibull_shape);
        if let Some(o) = scenario
            .weather_overrides
            .iter()
            .find(|o| in_window(hour, o.start_hour, o.end_hour))
        {
            wind = (o.wind_speed_mps + o.jitter_sd * jitter_noise).max(0.0);
        }
        let toward = {
            let d = (w.prevailing_dir - dir + 540.0).rem_euclid(360.0) - 180.0;
            w.dir_reversion * d
        };
        dir = wrap_degrees(dir + toward + w.dir_step_sd * dir_noise);
        let day = hour / 24.0;
        let temp = w.temp_mean
            - w.temp_annual_amp * (2.0 * std::f64::consts::PI * (day - 15.0) / 365.25).cos()
            - w.temp_diurnal_amp * (2.0 * std::f64::consts::PI * (hour.rem_euclid(24.0) - 3.0) / 24.0).cos()
            + temp_noise;

        let active: Vec<usize> = scenario
            .faults
            .iter()
            .enumerate()
            .filter(|(_, f)| in_window(hour, f.start_hour, f.end_hour))
            .map(|(k, _)| k)
            .collect();

        let base = ground_truth_power(wind, curve);
        let unfaulted = if base > 0.0 {
            scenario.direction_derate.iter().fold(base, |p, d| p * d.multiplier(dir))
        } else {
            base
        };
        let faulted = if unfaulted > 0.0 {
            active
                .iter()
                .fold(unfaulted, |p, &k| p * (1.0 - scenario.faults[k].power_derate()))
        } else {
            unfaulted
        };
        let deficit_kwh = step_energy_kwh(unfaulted) - step_energy_kwh(faulted);

        let mut measured_wind = wind;
        let mut pitch = pitch_reference(wind, curve, &scenario.pitch) + scenario.pitch.noise_sd_deg * pitch_noise;
        let mut pressure = scenario.hydraulic.nominal_bar + scenario.hydraulic.noise_sd_bar * pressure_noise;
        for &k in &active {
            let f = &scenario.faults[k];
            match f.kind {
                FaultKind::PitchMisalignment => pitch += f.pitch_offset_deg,
                FaultKind::HydraulicDrop => pressure -= f.magnitude,
                FaultKind::AnemometerBias => measured_wind += f.magnitude,
                FaultKind::DataGap => {}
            }
            let acc = &mut fault_acc[k];
            acc.0.get_or_insert(ts);
            acc.1 = ts;
            acc.2 += 1;
            acc.3 += deficit_kwh;
        }

        let is_gap = active.iter().any(|&k| scenario.faults[k].kind == FaultKind::DataGap);
        if is_gap {
            match gap_open.as_mut() {
                Some(g) => g.steps += 1,
                None => gap_open = Some(Gap { start: ts, steps: 1 }),
            }
            continue;
        }
        if let Some(g) = gap_open.take() {
            truth.gaps.push(g);
        }

        let mut power = faulted + scenario.noise_sd_kw * power_noise;
        let mut status_code = 0;
        if let Some(stop) = scenario
            .logged_stops
            .iter()
            .find(|s| in_window(hour, s.start_hour, s.end_hour))
        {
            status_code = stop.status_code;
            power = -curve.consumption_kw + scenario.noise_sd_kw * power_noise;
        } else if let Some(o) = &scenario.outliers {
            if outlier_u < o.fraction {
                let offset = o.sigma_multiple * scenario.noise_sd_kw;
                power += if outlier_sign { offset } else { -offset };
                truth.outliers.push(ts);
            }
        }
        let rated = curve.rated_power;
        power = power.clamp(-rated, 1.1 * rated);

        records.push(ScadaRecord {
            timestamp: ts,
            wind_speed: measured_wind.max(0.0),
            wind_dir: dir,
            air_temp: temp,
            power,
            pitch_angle: pitch,
            hydraulic_pressure: scenario.hydraulic.emit.then_some(pressure),
            status_code,
        });
        truth.steps.push(TruthStep {
            timestamp: ts,
            true_expected_kw: unfaulted,
            faulted_kw: faulted,
            injected_deficit_kwh: deficit_kwh,
        });
    }
    if let Some(g) = gap_open.take() {
        truth.gaps.push(g);
    }

    truth.faults = scenario
        .faults
        .iter()
        .zip(fault_acc)
        .filter_map(|(f, (start, end, steps, deficit))| {
            start.map(|start| FaultInjection {
                kind: f.kind,
                start,
                end,
                steps,
                deficit_kwh: if f.kind == FaultKind::DataGap { 0.0 } else { deficit },
            })
        })
        .collect();
    Ok((records, truth))
}
