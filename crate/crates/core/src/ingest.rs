//! SCADA CSV ingestion, validation and grid alignment.
//!
//! Files follow one fixed schema:
//!
//! ```text
//! timestamp,wind_speed_mps,wind_dir_deg,air_temp_c,power_kw,pitch_angle_deg,hydraulic_pressure_bar,status_code
//! ```
//!
//! Rows that fail validation are collected with a reason instead of being
//! dropped silently; a file where more than half of the rows fail is refused.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::config::TurbineConfig;
use crate::error::{Error, Result};

pub const STEP_MINUTES: i64 = 10;
pub const STEPS_PER_HOUR: usize = 6;
/// Hours covered by one grid step.
pub const STEP_HOURS: f64 = 1.0 / 6.0;

pub const HEADER: [&str; 8] = [
    "timestamp",
    "wind_speed_mps",
    "wind_dir_deg",
    "air_temp_c",
    "power_kw",
    "pitch_angle_deg",
    "hydraulic_pressure_bar",
    "status_code",
];

pub fn step() -> Duration {
    Duration::minutes(STEP_MINUTES)
}

/// One 10-minute averaged telemetry sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScadaRecord {
    pub timestamp: DateTime<Utc>,
    /// m/s.
    pub wind_speed: f64,
    /// Degrees in [0, 360).
    pub wind_dir: f64,
    /// °C.
    pub air_temp: f64,
    /// Net kW; negative below cut-in.
    pub power: f64,
    /// Mean blade pitch in degrees.
    pub pitch_angle: f64,
    /// bar.
    pub hydraulic_pressure: Option<f64>,
    /// 0 = normal, anything else is a logged warning or error.
    pub status_code: i64,
}

impl ScadaRecord {
    /// Checks the record invariants; the error string is the reject reason.
    pub fn check(&self, rated_power: f64) -> std::result::Result<(), String> {
        if !on_grid(&self.timestamp) {
            return Err(format!("timestamp {} is off the 10-minute grid", format_timestamp(&self.timestamp)));
        }
        let finite = [
            ("wind_speed_mps", self.wind_speed),
            ("wind_dir_deg", self.wind_dir),
            ("air_temp_c", self.air_temp),
            ("power_kw", self.power),
            ("pitch_angle_deg", self.pitch_angle),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if let Some(p) = self.hydraulic_pressure {
            if !p.is_finite() {
                return Err("hydraulic_pressure_bar is not finite".into());
            }
        }
        if self.wind_speed < 0.0 {
            return Err(format!("wind_speed_mps {} < 0", self.wind_speed));
        }
        if !(0.0..360.0).contains(&self.wind_dir) {
            return Err(format!("wind_dir_deg {} outside [0, 360)", self.wind_dir));
        }
        if self.power < -rated_power || self.power > 1.1 * rated_power {
            return Err(format!(
                "power_kw {} outside [{}, {}]",
                self.power,
                -rated_power,
                1.1 * rated_power
            ));
        }
        Ok(())
    }
}

pub fn on_grid(ts: &DateTime<Utc>) -> bool {
    ts.minute().is_multiple_of(STEP_MINUTES as u32) && ts.second() == 0 && ts.nanosecond() == 0
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses an ISO-8601 instant; only UTC offsets are accepted.
pub fn parse_timestamp(text: &str) -> std::result::Result<DateTime<Utc>, String> {
    let parsed = DateTime::parse_from_rfc3339(text).map_err(|e| format!("bad timestamp `{text}`: {e}"))?;
    if parsed.offset().local_minus_utc() != 0 {
        return Err(format!("timestamp `{text}` is not UTC"));
    }
    Ok(parsed.with_timezone(&Utc))
}

/// A row that failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct ParsedScada {
    pub records: Vec<ScadaRecord>,
    pub rejects: Vec<Reject>,
}

impl ParsedScada {
    pub fn total_rows(&self) -> usize {
        self.records.len() + self.rejects.len()
    }
}

pub fn parse_scada_csv(path: &Path, config: &TurbineConfig) -> Result<ParsedScada> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_scada_reader(file, path, config)
}

/// Parses from any reader; `source` only labels errors.
pub fn parse_scada_reader<R: Read>(reader: R, source: &Path, config: &TurbineConfig) -> Result<ParsedScada> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: source.to_path_buf(),
        source: e,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(csv_err)?,
        None => {
            return Err(Error::MissingColumn {
                path: source.to_path_buf(),
                column: HEADER[0].into(),
            })
        }
    };
    for (i, want) in HEADER.iter().enumerate() {
        if header.get(i) != Some(*want) {
            return Err(Error::MissingColumn {
                path: source.to_path_buf(),
                column: (*want).into(),
            });
        }
    }
    if header.len() != HEADER.len() {
        return Err(Error::Config(format!(
            "{}: unexpected extra column `{}`",
            source.display(),
            header.get(HEADER.len()).unwrap_or_default()
        )));
    }

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for row in rows {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row).and_then(|r| r.check(config.rated_power).map(|_| r)) {
            Ok(r) => records.push(r),
            Err(reason) => rejects.push(Reject {
                line,
                reason,
                raw: row.iter().collect::<Vec<_>>().join(","),
            }),
        }
    }

    let total = records.len() + rejects.len();
    if rejects.len() * 2 > total {
        return Err(Error::TooManyRejects {
            path: source.to_path_buf(),
            rejected: rejects.len(),
            total,
            first_reason: rejects[0].reason.clone(),
        });
    }
    if !rejects.is_empty() {
        log::warn!("{}: {} of {} rows rejected", source.display(), rejects.len(), total);
    }

    records.sort_by_key(|r| r.timestamp);
    if let Some(w) = records.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
        return Err(Error::DuplicateTimestamp {
            path: source.to_path_buf(),
            timestamp: w[0].timestamp,
        });
    }
    Ok(ParsedScada { records, rejects })
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<ScadaRecord, String> {
    if row.len() != HEADER.len() {
        return Err(format!("expected {} fields, found {}", HEADER.len(), row.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        let text = &row[i];
        text.parse::<f64>()
            .map_err(|_| format!("{}: cannot parse `{text}` as a number", HEADER[i]))
    };
    let hydraulic = if row[6].is_empty() { None } else { Some(num(6)?) };
    let status_code = row[7]
        .parse::<i64>()
        .map_err(|_| format!("status_code: cannot parse `{}` as an integer", &row[7]))?;
    Ok(ScadaRecord {
        timestamp: parse_timestamp(&row[0])?,
        wind_speed: num(1)?,
        wind_dir: num(2)?,
        air_temp: num(3)?,
        power: num(4)?,
        pitch_angle: num(5)?,
        hydraulic_pressure: hydraulic,
        status_code,
    })
}

pub fn write_scada<W: Write>(writer: W, records: &[ScadaRecord]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(HEADER)?;
    for r in records {
        let hydraulic = r.hydraulic_pressure.map(|p| p.to_string()).unwrap_or_default();
        w.write_record([
            format_timestamp(&r.timestamp),
            r.wind_speed.to_string(),
            r.wind_dir.to_string(),
            r.air_temp.to_string(),
            r.power.to_string(),
            r.pitch_angle.to_string(),
            hydraulic,
            r.status_code.to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_scada_csv(path: &Path, records: &[ScadaRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_scada(std::io::BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

/// `data/scada.csv` → `data/scada.rejects.csv`.
pub fn rejects_path(input: &Path) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    input.with_file_name(format!("{stem}.rejects.csv"))
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    let res: std::result::Result<(), csv::Error> = (|| {
        w.write_record(["line", "reason", "raw"])?;
        for r in rejects {
            w.write_record([r.line.to_string(), r.reason.clone(), r.raw.clone()])?;
        }
        Ok(())
    })();
    res.map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.flush().map_err(io)
}

/// A run of missing grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    /// First missing grid instant.
    pub start: DateTime<Utc>,
    /// Number of consecutive missing steps.
    pub steps: usize,
}

/// Missing 10-minute grid points between the first and last record.
pub fn find_gaps(records: &[ScadaRecord]) -> Vec<Gap> {
    records
        .windows(2)
        .filter_map(|w| {
            let missing = steps_between(&w[0].timestamp, &w[1].timestamp) - 1;
            (missing > 0).then(|| Gap {
                start: w[0].timestamp + step(),
                steps: missing as usize,
            })
        })
        .collect()
}

/// Whole grid steps from `a` to `b` (negative when `b` precedes `a`).
pub fn steps_between(a: &DateTime<Utc>, b: &DateTime<Utc>) -> i64 {
    (*b - *a).num_minutes().div_euclid(STEP_MINUTES)
}
