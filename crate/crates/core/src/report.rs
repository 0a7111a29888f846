//! Figure data and SVG rendering.
//!
//! Every figure is a set of named `(x, y)` series. The CSV beside each SVG
//! holds exactly the plotted data as `series,x,y`, so figures can be checked
//! without looking at images.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::diagnose::DiagnosisReport;
use crate::error::{Error, Result};
use crate::ingest::{steps_between, STEPS_PER_HOUR};
use crate::monitor::{EventReport, ResidualRow};
use crate::preprocess::BandRow;
use crate::quantile::{quantile_sorted, sorted_copy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Points,
    Line,
    Bars,
    /// Vertical or horizontal reference rule; drawn as a dashed line.
    Rule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub style: Style,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    fn new(name: &str, style: Style, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_string(),
            style,
            points,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub name: &'static str,
    pub title: String,
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
}

/// Stage outputs a figure set is built from.
#[derive(Debug, Clone)]
pub struct ReportInputs {
    pub rated_power_kw: f64,
    pub bands: Vec<BandRow>,
    pub residuals: Vec<ResidualRow>,
    pub events: EventReport,
    pub diagnosis: Option<DiagnosisReport>,
}

pub const FIGURE_NAMES: [&str; 6] = [
    "power_curve",
    "actual_vs_expected",
    "residual_histogram",
    "residual_timeseries",
    "event_detail",
    "pitch_comparison",
];

const HISTOGRAM_BINS: usize = 50;
const QQ_LEVELS: usize = 99;
/// Context shown on each side of the event in the detail figure, hours.
const EVENT_CONTEXT_HOURS: f64 = 24.0;

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn ys(series: &[Series]) -> impl Iterator<Item = f64> + '_ {
    series.iter().flat_map(|s| s.points.iter().map(|p| p.1))
}

fn xs(series: &[Series]) -> impl Iterator<Item = f64> + '_ {
    series.iter().flat_map(|s| s.points.iter().map(|p| p.0))
}

fn power_curve(inp: &ReportInputs) -> Figure {
    let centre = |b: &BandRow| 0.5 * (b.bin_lo + b.bin_hi);
    let col = |f: fn(&BandRow) -> f64| inp.bands.iter().map(|b| (centre(b), f(b) / 1000.0)).collect();
    let series = vec![
        Series::new("q_lo", Style::Line, col(|b| b.q_lo_kw)),
        Series::new("median", Style::Line, col(|b| b.median_kw)),
        Series::new("q_hi", Style::Line, col(|b| b.q_hi_kw)),
    ];
    let x_hi = inp.bands.iter().map(|b| b.bin_hi).fold(1.0, f64::max);
    Figure {
        name: "power_curve",
        title: "Power quantile bands by wind-speed bin".into(),
        x_label: "wind speed [m/s]",
        y_label: "power [MW]",
        x_range: (0.0, x_hi),
        y_range: span(ys(&series)),
        series,
    }
}

fn actual_vs_expected(inp: &ReportInputs) -> Figure {
    let rated = inp.rated_power_kw / 1000.0;
    let scatter: Vec<(f64, f64)> = inp
        .residuals
        .iter()
        .map(|r| (r.expected_kw / 1000.0, r.power_kw / 1000.0))
        .collect();
    let actual = sorted_copy(&scatter.iter().map(|p| p.1).collect::<Vec<_>>());
    let expected = sorted_copy(&scatter.iter().map(|p| p.0).collect::<Vec<_>>());
    let qq = if scatter.is_empty() {
        Vec::new()
    } else {
        (1..=QQ_LEVELS)
            .map(|i| {
                let q = i as f64 / (QQ_LEVELS + 1) as f64;
                (quantile_sorted(&expected, q), quantile_sorted(&actual, q))
            })
            .collect()
    };
    Figure {
        name: "actual_vs_expected",
        title: "Actual vs expected power with quantile-quantile overlay".into(),
        x_label: "expected power [MW]",
        y_label: "actual power [MW]",
        x_range: (0.0, rated),
        y_range: (0.0, rated),
        series: vec![
            Series::new("scatter", Style::Points, scatter),
            Series::new("qq", Style::Line, qq),
            Series::new("identity", Style::Rule, vec![(0.0, 0.0), (rated, rated)]),
        ],
    }
}

fn residual_histogram(inp: &ReportInputs) -> Figure {
    let values: Vec<f64> = inp.residuals.iter().filter_map(|r| r.rolling_residual_mwh).collect();
    let thr = inp.events.threshold_mwh;
    let (lo, hi) = span(values.iter().copied().chain([-thr, thr]));
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for v in &values {
        counts[(((v - lo) / width).floor() as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let bars: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64))
        .collect();
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64 * 1.05;
    Figure {
        name: "residual_histogram",
        title: format!("Rolling {} h energy residual, threshold ±{thr:.2} MWh", inp.events.horizon_hours),
        x_label: "rolling residual [MWh]",
        y_label: "windows",
        x_range: (lo, hi),
        y_range: (0.0, top),
        series: vec![
            Series::new("count", Style::Bars, bars),
            Series::new("threshold_lo", Style::Rule, vec![(-thr, 0.0), (-thr, top)]),
            Series::new("threshold_hi", Style::Rule, vec![(thr, 0.0), (thr, top)]),
        ],
    }
}

fn hours_since(origin: &chrono::DateTime<chrono::Utc>, t: &chrono::DateTime<chrono::Utc>) -> f64 {
    steps_between(origin, t) as f64 / STEPS_PER_HOUR as f64
}

fn residual_timeseries(inp: &ReportInputs) -> Figure {
    let thr = inp.events.threshold_mwh;
    let origin = inp.residuals.first().map(|r| r.timestamp).unwrap_or_default();
    let line: Vec<(f64, f64)> = inp
        .residuals
        .iter()
        .filter_map(|r| r.rolling_residual_mwh.map(|v| (hours_since(&origin, &r.timestamp) / 24.0, v)))
        .collect();
    let x_range = span(inp.residuals.iter().map(|r| hours_since(&origin, &r.timestamp) / 24.0));
    let mut series = vec![
        Series::new("rolling_residual", Style::Line, line),
        Series::new("threshold_lo", Style::Rule, vec![(x_range.0, -thr), (x_range.1, -thr)]),
        Series::new("threshold_hi", Style::Rule, vec![(x_range.0, thr), (x_range.1, thr)]),
    ];
    let marks: Vec<(f64, f64)> = inp
        .events
        .events
        .iter()
        .map(|e| (hours_since(&origin, &e.start) / 24.0, -e.peak_deficit_mwh))
        .collect();
    series.push(Series::new("event_start", Style::Points, marks));
    Figure {
        name: "residual_timeseries",
        title: format!("Rolling residual, {} event(s)", inp.events.events.len()),
        x_label: "days since start",
        y_label: "rolling residual [MWh]",
        x_range,
        y_range: span(ys(&series)),
        series,
    }
}

fn event_detail(inp: &ReportInputs) -> Figure {
    let largest = inp
        .events
        .events
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.lost_energy_mwh.total_cmp(&b.1.lost_energy_mwh).then(b.0.cmp(&a.0)))
        .map(|(_, e)| e);
    let mut series = Vec::new();
    let title = match largest {
        None => "No underperformance event".to_string(),
        Some(e) => {
            let window: Vec<&ResidualRow> = inp
                .residuals
                .iter()
                .filter(|r| {
                    let h = (r.timestamp - e.start).num_minutes() as f64 / 60.0;
                    let tail = (r.timestamp - e.end).num_minutes() as f64 / 60.0;
                    h >= -EVENT_CONTEXT_HOURS && tail <= EVENT_CONTEXT_HOURS
                })
                .collect();
            let rel = |r: &ResidualRow| (r.timestamp - e.start).num_minutes() as f64 / 60.0;
            series.push(Series::new("actual", Style::Line, window.iter().map(|r| (rel(r), r.power_kw / 1000.0)).collect()));
            series.push(Series::new("expected", Style::Line, window.iter().map(|r| (rel(r), r.expected_kw / 1000.0)).collect()));
            let top = inp.rated_power_kw / 1000.0;
            let dur = (e.end - e.start).num_minutes() as f64 / 60.0;
            series.push(Series::new("event_start", Style::Rule, vec![(0.0, 0.0), (0.0, top)]));
            series.push(Series::new("event_end", Style::Rule, vec![(dur, 0.0), (dur, top)]));
            format!(
                "Event from {}: lost {:.2} MWh, peak deficit {:.2} MWh",
                crate::ingest::format_timestamp(&e.start),
                e.lost_energy_mwh,
                e.peak_deficit_mwh
            )
        }
    };
    Figure {
        name: "event_detail",
        title,
        x_label: "hours from event start",
        y_label: "power [MW]",
        x_range: span(xs(&series)),
        y_range: span(ys(&series)),
        series,
    }
}

fn pitch_comparison(inp: &ReportInputs) -> Figure {
    let table = inp.diagnosis.as_ref().and_then(|d| d.events.first()).map(|e| e.pitch_table.as_slice()).unwrap_or(&[]);
    let col = |f: fn(&crate::diagnose::PitchBinRow) -> f64| -> Vec<(f64, f64)> {
        table.iter().map(|r| (0.5 * (r.bin_lo + r.bin_hi), f(r))).collect()
    };
    let series = vec![
        Series::new("reference_q05", Style::Line, col(|r| r.reference_q05)),
        Series::new("reference_median", Style::Line, col(|r| r.reference_median)),
        Series::new("reference_q95", Style::Line, col(|r| r.reference_q95)),
        Series::new("event_median", Style::Points, col(|r| r.event_median)),
    ];
    Figure {
        name: "pitch_comparison",
        title: if table.is_empty() {
            "No pitch comparison available".into()
        } else {
            "Event pitch median vs reference band".into()
        },
        x_label: "wind speed [m/s]",
        y_label: "pitch angle [deg]",
        x_range: span(xs(&series)),
        y_range: span(ys(&series)),
        series,
    }
}

/// The six figures, in [`FIGURE_NAMES`] order.
pub fn build_figures(inp: &ReportInputs) -> Vec<Figure> {
    vec![
        power_curve(inp),
        actual_vs_expected(inp),
        residual_histogram(inp),
        residual_timeseries(inp),
        event_detail(inp),
        pitch_comparison(inp),
    ]
}

impl Figure {
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["series", "x", "y"])?;
        for s in &self.series {
            for (x, y) in &s.points {
                w.write_record([s.name.as_str(), &x.to_string(), &y.to_string()])?;
            }
        }
        w.flush()
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    pub fn to_svg(&self) -> String {
        const W: f64 = 720.0;
        const H: f64 = 480.0;
        const L: f64 = 70.0;
        const R: f64 = 20.0;
        const T: f64 = 40.0;
        const B: f64 = 55.0;
        const MAX_MARKS: usize = 5000;
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
        let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<defs><clipPath id="plot-area"><rect x="{L}" y="{T}" width="{}" height="{}"/></clipPath></defs>"#,
            W - L - R,
            H - T - B
        );
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - L - R,
            H - T - B
        );
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                H - B + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                L - 6.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (L + W - R) / 2.0, H - 15.0, escape(self.x_label));
        let _ = writeln!(
            s,
            r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (T + H - B) / 2.0,
            escape(self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let _ = writeln!(s, r#"<g id="{}" clip-path="url(#plot-area)">"#, escape(&series.name));
            match series.style {
                Style::Points => {
                    let stride = series.points.len().div_ceil(MAX_MARKS).max(1);
                    for (x, y) in series.points.iter().step_by(stride) {
                        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="1.5" fill="{color}" fill-opacity="0.5"/>"#, sx(*x), sy(*y));
                    }
                }
                Style::Line | Style::Rule => {
                    if series.points.is_empty() {
                        let _ = writeln!(s, "</g>");
                        continue;
                    }
                    let stride = series.points.len().div_ceil(4 * MAX_MARKS).max(1);
                    let path: Vec<String> = series
                        .points
                        .iter()
                        .step_by(stride)
                        .map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y)))
                        .collect();
                    let dash = if series.style == Style::Rule { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"{dash}/>"#, path.join(" "));
                }
                Style::Bars => {
                    let width = if series.points.len() > 1 {
                        (sx(series.points[1].0) - sx(series.points[0].0)).abs()
                    } else {
                        10.0
                    };
                    for (x, y) in &series.points {
                        let top = sy(*y);
                        let _ = writeln!(
                            s,
                            r#"<rect x="{:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.7"/>"#,
                            sx(*x) - width / 2.0,
                            width,
                            sy(y0) - top
                        );
                    }
                }
            }
            let _ = writeln!(s, "</g>");
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
                L + 8.0,
                T + 16.0 + 14.0 * k as f64,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes `<name>.svg` and `<name>.csv` for every figure; returns the paths.
pub fn write_figures(figures: &[Figure], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in figures {
        for (ext, body) in [("svg", f.to_svg()), ("csv", f.csv_string())] {
            let path = dir.join(format!("{}.{ext}", f.name));
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
