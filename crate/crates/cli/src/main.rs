mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use windref::diagnose::{diagnose_event, DiagnosisReport};
use windref::ingest::{parse_scada_csv, rejects_path, write_rejects, write_scada_csv, ScadaRecord};
use windref::monitor::{
    derive_threshold, detect_events, detect_overperformance, predict_expected, read_residual_csv,
    rolling_energy_residual, EventReport, ResidualSeries, ThresholdSource,
};
use windref::preprocess::{clean, read_bands_csv};
use windref::regressors::{load_model, save_model, select_model, train_test_split, Algorithm, Candidate, FeatureSet, FittedModel};
use windref::report::{build_figures, write_figures, ReportInputs};
use windref::simulator::{generate, Scenario};
use windref::Settings;

use manifest::RunManifest;

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "windref", version, about = "Wind turbine power reference estimation and underperformance monitoring")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Settings file (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    rated_power: Option<f64>,
    #[arg(long)]
    bin_width: Option<f64>,
    /// Rolling window length in hours.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    alert_quantile: Option<f64>,
    /// Price per MWh used for opportunity cost.
    #[arg(long)]
    energy_price: Option<f64>,
    #[arg(long)]
    merge_gap_hours: Option<f64>,
    #[arg(long)]
    train_ratio: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic SCADA series and its truth log.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scenario file (TOML); built-in defaults otherwise.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        days: Option<f64>,
        /// Base name of the output files.
        #[arg(long, default_value = "scada")]
        name: String,
    },
    /// Status filter and bin-quantile outlier removal.
    Clean {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit every candidate reference model and keep the best.
    Train {
        #[command(flatten)]
        common: Common,
        /// Cleaned training corpus.
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated subset of gbm, random_forest, knn, bin_curve.
        #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
        algorithms: Option<Vec<Algorithm>>,
        /// Comma-separated subset of V, VD, VDT.
        #[arg(long, value_delimiter = ',', value_parser = parse_feature_set)]
        feature_sets: Option<Vec<FeatureSet>>,
    },
    /// Rolling energy residuals and underperformance events.
    Monitor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Series to monitor.
        #[arg(long)]
        input: PathBuf,
        /// Reference series the alert threshold is derived from.
        #[arg(long, conflicts_with = "threshold")]
        reference: Option<PathBuf>,
        /// Fixed alert threshold in MWh.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compare channels during each event against the rest of its month.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        events: PathBuf,
        /// The monitored series.
        #[arg(long)]
        input: PathBuf,
    },
    /// Emit the figure set as SVG plus CSV data.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory holding bands.csv, residuals.csv, events.json and diagnosis.json.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        bands: Option<PathBuf>,
        #[arg(long)]
        residuals: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        diagnosis: Option<PathBuf>,
    },
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: windref::Error| e.to_string())
}

fn parse_feature_set(s: &str) -> Result<FeatureSet, String> {
    s.parse().map_err(|e: windref::Error| e.to_string())
}

impl Common {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Settings::from_toml_str(&text).with_context(|| format!("config {}", path.display()))?
            }
            None => Settings::default(),
        };
        let t = &mut s.turbine;
        if let Some(v) = self.rated_power {
            t.rated_power = v;
        }
        if let Some(v) = self.bin_width {
            t.bin_width = v;
        }
        if let Some(v) = self.horizon {
            t.horizon = v;
        }
        if let Some(v) = self.alert_quantile {
            t.alert_quantile = v;
        }
        if let Some(v) = self.energy_price {
            t.energy_price = v;
        }
        if let Some(v) = self.merge_gap_hours {
            s.merge_gap_hours = v;
        }
        if let Some(v) = self.train_ratio {
            s.train_ratio = v;
        }
        s.validate().context("effective settings")?;
        Ok(s)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn load_records(path: &Path, settings: &Settings) -> Result<Vec<ScadaRecord>> {
    let parsed = parse_scada_csv(path, &settings.turbine)?;
    if !parsed.rejects.is_empty() {
        log::warn!("{}: {} malformed rows skipped", path.display(), parsed.rejects.len());
    }
    if parsed.records.is_empty() {
        bail!("{}: no valid records", path.display());
    }
    Ok(parsed.records)
}

fn write_json(path: &Path, body: String) -> Result<()> {
    fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_simulate(common: &Common, scenario: Option<&Path>, days: Option<f64>, name: &str) -> Result<()> {
    let settings = common.settings()?;
    let mut sc = match scenario {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Scenario::from_toml_str(&text).with_context(|| format!("scenario {}", path.display()))?
        }
        None => Scenario::default(),
    };
    if let Some(seed) = common.seed {
        sc.seed = seed;
    }
    if let Some(d) = days {
        sc.days = d;
    }
    sc.validate()?;
    let (records, truth) = generate(&sc)?;
    let out = common.out_dir()?;
    let csv = out.join(format!("{name}.csv"));
    let truth_csv = out.join(format!("{name}.truth.csv"));
    write_scada_csv(&csv, &records)?;
    truth.write_csv_file(&truth_csv)?;
    log::info!("{} records, injected deficit {:.3} MWh", records.len(), truth.total_deficit_kwh() / 1000.0);

    let mut m = RunManifest::new("simulate", Some(sc.seed), &settings);
    m.scenario = Some(serde_json::to_value(&sc)?);
    if let Some(path) = scenario {
        m.input(path)?;
    }
    m.output(&csv)?;
    m.output(&truth_csv)?;
    if name == "scada" {
        m.write(out)
    } else {
        m.write_as(out, &format!("manifest-simulate-{name}.json"))
    }
}

fn cmd_clean(common: &Common, input: &Path) -> Result<()> {
    let settings = common.settings()?;
    let parsed = parse_scada_csv(input, &settings.turbine)?;
    if parsed.records.is_empty() {
        bail!("{}: no valid records", input.display());
    }
    let outcome = clean(&parsed.records, &settings).with_context(|| format!("cleaning {}", input.display()))?;
    let out = common.out_dir()?;
    let clean_csv = out.join("clean.csv");
    let bands_csv = out.join("bands.csv");
    let rejects_csv = out.join(rejects_path(input).file_name().expect("input has a file name"));
    write_scada_csv(&clean_csv, &outcome.clean)?;
    outcome.bands.write_csv_file(&bands_csv)?;
    write_rejects(&rejects_csv, &parsed.rejects)?;
    log::info!(
        "{} rows: {} rejected, {} status-filtered, {} outliers, {} kept",
        parsed.total_rows(),
        parsed.rejects.len(),
        outcome.status_removed,
        outcome.removed.len(),
        outcome.clean.len()
    );
    if !outcome.bands.filtering_disabled.is_empty() {
        log::info!("bins below minimum occupancy, not filtered: {:?}", outcome.bands.filtering_disabled);
    }

    let mut m = RunManifest::new("clean", None, &settings);
    m.input(input)?;
    for p in [&clean_csv, &bands_csv, &rejects_csv] {
        m.output(p)?;
    }
    m.write(out)
}

fn cmd_train(
    common: &Common,
    input: &Path,
    algorithms: Option<&[Algorithm]>,
    feature_sets: Option<&[FeatureSet]>,
) -> Result<()> {
    let settings = common.settings()?;
    let seed = common.seed.unwrap_or(DEFAULT_SEED);
    let records = load_records(input, &settings)?;
    let candidates: Vec<Candidate> = Candidate::all()
        .into_iter()
        .filter(|c| algorithms.is_none_or(|a| a.contains(&c.algorithm)))
        .filter(|c| feature_sets.is_none_or(|f| f.contains(&c.feature_set)))
        .collect();
    if candidates.is_empty() {
        bail!("no candidate models selected");
    }
    let (train, test) = train_test_split(&records, settings.train_ratio, seed)?;
    let selection = select_model(&candidates, &train, &test, &settings, seed)?;
    let best = selection.selected_model();
    log::info!("selected {} / {} at {:.2} kW", best.algorithm, best.feature_set, best.holdout_rmse);

    let out = common.out_dir()?;
    let model_json = out.join("model.json");
    let report_csv = out.join("model_report.csv");
    save_model(&model_json, best)?;
    let mut buf = Vec::new();
    selection.report.write_csv(&mut buf)?;
    fs::write(&report_csv, buf).with_context(|| format!("writing {}", report_csv.display()))?;

    let mut m = RunManifest::new("train", Some(seed), &settings);
    m.input(input)?;
    m.output(&model_json)?;
    m.output(&report_csv)?;
    m.write(out)
}

fn residuals_for(model: &FittedModel, path: &Path, settings: &Settings) -> Result<ResidualSeries> {
    let records = load_records(path, settings)?;
    let expected = predict_expected(model, &records);
    Ok(rolling_energy_residual(
        &records,
        &expected,
        settings.turbine.horizon,
        settings.min_window_coverage,
    )?)
}

fn cmd_monitor(
    common: &Common,
    model_path: &Path,
    input: &Path,
    reference: Option<&Path>,
    fixed: Option<f64>,
) -> Result<()> {
    let settings = common.settings()?;
    let cfg = &settings.turbine;
    let model = load_model(model_path)?;
    let series = residuals_for(&model, input, &settings)?;
    let (threshold, source) = match (fixed, reference) {
        (Some(t), _) => (t, ThresholdSource::Fixed),
        (None, Some(path)) => {
            let reference = residuals_for(&model, path, &settings)?;
            let t = derive_threshold(&reference.valid_residuals(), cfg.alert_quantile)
                .with_context(|| format!("threshold from {}", path.display()))?;
            (t, ThresholdSource::Reference)
        }
        (None, None) => (
            derive_threshold(&series.valid_residuals(), cfg.alert_quantile)
                .with_context(|| format!("threshold from {}", input.display()))?,
            ThresholdSource::AllObserved,
        ),
    };
    let events = detect_events(&series, threshold, settings.merge_gap_hours, cfg.energy_price)?;
    let report = EventReport {
        threshold_mwh: threshold,
        alert_quantile: cfg.alert_quantile,
        threshold_source: source,
        horizon_hours: cfg.horizon,
        merge_gap_hours: settings.merge_gap_hours,
        energy_price: cfg.energy_price,
        valid_windows: series.valid_count(),
        overperformance: detect_overperformance(&series, threshold, settings.merge_gap_hours),
        events,
    };
    log::info!("threshold {threshold:.3} MWh, {} event(s)", report.events.len());

    let out = common.out_dir()?;
    let residuals_csv = out.join("residuals.csv");
    let events_json = out.join("events.json");
    series.write_csv_file(&residuals_csv)?;
    write_json(&events_json, report.to_json())?;

    let mut m = RunManifest::new("monitor", None, &settings);
    m.input(model_path)?;
    m.input(input)?;
    if let Some(path) = reference {
        m.input(path)?;
    }
    m.output(&residuals_csv)?;
    m.output(&events_json)?;
    m.write(out)
}

fn read_events(path: &Path) -> Result<EventReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    EventReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_diagnose(common: &Common, events_path: &Path, input: &Path) -> Result<()> {
    let settings = common.settings()?;
    let events = read_events(events_path)?;
    let records = load_records(input, &settings)?;
    let diagnoses = events
        .events
        .iter()
        .map(|e| {
            diagnose_event(&records, e.start, e.end, settings.turbine.bin_width)
                .with_context(|| format!("diagnosing event starting {}", e.start))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = DiagnosisReport {
        bin_width: settings.turbine.bin_width,
        events: diagnoses,
    };
    let out = common.out_dir()?;
    let diagnosis_json = out.join("diagnosis.json");
    write_json(&diagnosis_json, report.to_json())?;

    let mut m = RunManifest::new("diagnose", None, &settings);
    m.input(events_path)?;
    m.input(input)?;
    m.output(&diagnosis_json)?;
    m.write(out)
}

struct ReportPaths {
    bands: PathBuf,
    residuals: PathBuf,
    events: PathBuf,
    diagnosis: Option<PathBuf>,
}

fn resolve_report_paths(
    run: Option<&Path>,
    bands: Option<PathBuf>,
    residuals: Option<PathBuf>,
    events: Option<PathBuf>,
    diagnosis: Option<PathBuf>,
) -> Result<ReportPaths> {
    let pick = |given: Option<PathBuf>, file: &str| -> Result<PathBuf> {
        match (given, run) {
            (Some(p), _) => Ok(p),
            (None, Some(dir)) => Ok(dir.join(file)),
            (None, None) => bail!("--{} or --run is required", file.split('.').next().unwrap_or(file)),
        }
    };
    let diagnosis = diagnosis.or_else(|| run.map(|d| d.join("diagnosis.json")).filter(|p| p.exists()));
    Ok(ReportPaths {
        bands: pick(bands, "bands.csv")?,
        residuals: pick(residuals, "residuals.csv")?,
        events: pick(events, "events.json")?,
        diagnosis,
    })
}

fn cmd_report(common: &Common, paths: ReportPaths) -> Result<()> {
    let settings = common.settings()?;
    let diagnosis = match &paths.diagnosis {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(DiagnosisReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let inputs = ReportInputs {
        rated_power_kw: settings.turbine.rated_power,
        bands: read_bands_csv(&paths.bands)?,
        residuals: read_residual_csv(&paths.residuals)?,
        events: read_events(&paths.events)?,
        diagnosis,
    };
    let out = common.out_dir()?;
    let written = write_figures(&build_figures(&inputs), &out.join("figures"))?;

    let mut m = RunManifest::new("report", None, &settings);
    for p in [&paths.bands, &paths.residuals, &paths.events].into_iter().chain(paths.diagnosis.as_ref()) {
        m.input(p)?;
    }
    for p in &written {
        m.output(p)?;
    }
    m.write(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            scenario,
            days,
            name,
        } => cmd_simulate(&common, scenario.as_deref(), days, &name),
        Command::Clean { common, input } => cmd_clean(&common, &input),
        Command::Train {
            common,
            input,
            algorithms,
            feature_sets,
        } => cmd_train(&common, &input, algorithms.as_deref(), feature_sets.as_deref()),
        Command::Monitor {
            common,
            model,
            input,
            reference,
            threshold,
        } => cmd_monitor(&common, &model, &input, reference.as_deref(), threshold),
        Command::Diagnose { common, events, input } => cmd_diagnose(&common, &events, &input),
        Command::Report {
            common,
            run,
            bands,
            residuals,
            events,
            diagnosis,
        } => {
            let paths = resolve_report_paths(run.as_deref(), bands, residuals, events, diagnosis)?;
            cmd_report(&common, paths)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("windref: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
