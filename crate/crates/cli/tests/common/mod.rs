#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn windref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_windref"))
        .args(args)
        .output()
        .expect("spawn windref")
}

/// Runs a subcommand and panics with its stderr on failure.
pub fn ok(args: &[&str]) -> Output {
    let out = windref(args);
    assert!(
        out.status.success(),
        "windref {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Two-month scenario with one 15 h half-power derate at steady 9 m/s.
pub const FAULT_SCENARIO: &str = r#"
days = 62.0
seed = 21

[[weather_overrides]]
start_hour = 888.0
end_hour = 930.0
wind_speed_mps = 9.0
jitter_sd = 0.4

[[faults]]
kind = "pitch_misalignment"
start_hour = 900.0
end_hour = 915.0
magnitude = 0.5
pitch_offset_deg = 5.0

[[faults]]
kind = "hydraulic_drop"
start_hour = 900.0
end_hour = 915.0
magnitude = 12.0
"#;

/// Fault-free counterpart used for the alert threshold.
pub const REFERENCE_SCENARIO: &str = "days = 62.0\nseed = 22\n";

/// Runs simulate → clean → train → monitor → diagnose → report into `dir`,
/// with the threshold taken from a simulated fault-free reference.
pub fn pipeline(dir: &Path, scenario: &str, seed: &str) {
    let sc = dir.join("scenario.toml");
    let rsc = dir.join("reference.toml");
    std::fs::write(&sc, scenario).unwrap();
    std::fs::write(&rsc, REFERENCE_SCENARIO).unwrap();
    let d = p(dir);
    ok(&["simulate", "--scenario", p(&sc), "--seed", seed, "--out", d]);
    ok(&["simulate", "--scenario", p(&rsc), "--name", "reference", "--out", d]);
    ok(&["clean", "--input", p(&dir.join("scada.csv")), "--out", d]);
    ok(&["train", "--input", p(&dir.join("clean.csv")), "--seed", seed, "--out", d]);
    ok(&[
        "monitor",
        "--model",
        p(&dir.join("model.json")),
        "--input",
        p(&dir.join("scada.csv")),
        "--reference",
        p(&dir.join("reference.csv")),
        "--out",
        d,
    ]);
    ok(&[
        "diagnose",
        "--events",
        p(&dir.join("events.json")),
        "--input",
        p(&dir.join("scada.csv")),
        "--out",
        d,
    ]);
    ok(&["report", "--run", d, "--out", d]);
}
