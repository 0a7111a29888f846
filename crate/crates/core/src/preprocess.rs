//! Training-corpus cleaning: logged-fault exclusion followed by a single
//! wind-speed-bin quantile outlier pass.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Settings, TurbineConfig};
use crate::error::{Error, Result};
use crate::ingest::ScadaRecord;
use crate::quantile::{quantile_sorted, sorted_copy};

/// Removal mask for records with a nonzero status code and the `radius`
/// records on either side of each of them.
pub fn status_exclusion_mask(records: &[ScadaRecord], radius: usize) -> Vec<bool> {
    let n = records.len();
    let mut removed = vec![false; n];
    for (i, r) in records.iter().enumerate() {
        if r.status_code != 0 {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n.saturating_sub(1));
            removed[lo..=hi].iter_mut().for_each(|m| *m = true);
        }
    }
    removed
}

pub fn filter_status(records: &[ScadaRecord], radius: usize) -> Vec<ScadaRecord> {
    let mask = status_exclusion_mask(records, radius);
    records
        .iter()
        .zip(mask)
        .filter(|(_, m)| !m)
        .map(|(r, _)| r.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinLevels {
    pub q_lo: f64,
    pub q_hi: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    /// m/s, inclusive.
    pub lo: f64,
    /// m/s, exclusive.
    pub hi: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub levels: Option<BinLevels>,
}

/// Per-bin power quantile bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinQuantiles {
    pub bin_width: f64,
    /// Contiguous bins from 0 m/s up to the bin holding the fastest record.
    pub bins: Vec<Bin>,
    /// Bins with fewer than the minimum occupancy; never filtered.
    pub filtering_disabled: BTreeSet<usize>,
}

/// Bin index of a wind speed (floor rule).
pub fn bin_index(speed: f64, bin_width: f64) -> usize {
    (speed / bin_width).floor().max(0.0) as usize
}

impl BinQuantiles {
    /// Bin of `speed`; speeds past the last edge land in the last bin.
    pub fn bin_of(&self, speed: f64) -> usize {
        bin_index(speed, self.bin_width).min(self.bins.len() - 1)
    }

    pub fn beyond_last_edge(&self, speed: f64) -> bool {
        bin_index(speed, self.bin_width) >= self.bins.len()
    }

    /// Inclusive keep range of a bin, or `None` when the bin is not filtered.
    pub fn keep_range(&self, bin: usize, margin: f64) -> Option<(f64, f64)> {
        if self.filtering_disabled.contains(&bin) {
            return None;
        }
        let l = self.bins[bin].levels?;
        let spread = margin * (l.q_hi - l.q_lo);
        Some((l.q_lo - spread, l.q_hi + spread))
    }

    pub fn occupied(&self) -> impl Iterator<Item = (&Bin, BinLevels)> {
        self.bins.iter().filter_map(|b| b.levels.map(|l| (b, l)))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["bin_lo", "bin_hi", "q_lo_kw", "q_hi_kw", "median_kw", "count"])?;
        for (b, l) in self.occupied() {
            w.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                l.q_lo.to_string(),
                l.q_hi.to_string(),
                l.median.to_string(),
                b.count.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

/// One row of a bands CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub q_lo_kw: f64,
    pub q_hi_kw: f64,
    pub median_kw: f64,
    pub count: usize,
}

pub fn read_bands_csv(path: &Path) -> Result<Vec<BandRow>> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    rdr.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

/// Per-bin quantiles of power. Bins with fewer than `min_count` records are
/// marked filtering-disabled.
pub fn compute_bin_quantiles(
    records: &[ScadaRecord],
    config: &TurbineConfig,
    min_count: usize,
) -> Result<BinQuantiles> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to compute bin quantiles from".into()));
    }
    let width = config.bin_width;
    let max_speed = records.iter().map(|r| r.wind_speed).fold(0.0, f64::max);
    let n_bins = bin_index(max_speed, width) + 1;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for r in records {
        members[bin_index(r.wind_speed, width)].push(r.power);
    }
    let (q_lo, q_hi) = (config.quantile_lo, config.quantile_hi);
    let bins: Vec<Bin> = members
        .into_par_iter()
        .enumerate()
        .map(|(i, powers)| {
            let levels = (!powers.is_empty()).then(|| {
                let s = sorted_copy(&powers);
                BinLevels {
                    q_lo: quantile_sorted(&s, q_lo),
                    q_hi: quantile_sorted(&s, q_hi),
                    median: quantile_sorted(&s, 0.5),
                }
            });
            Bin {
                lo: i as f64 * width,
                hi: (i + 1) as f64 * width,
                count: powers.len(),
                levels,
            }
        })
        .collect();
    let filtering_disabled = bins
        .iter()
        .enumerate()
        .filter(|(_, b)| b.count < min_count)
        .map(|(i, _)| i)
        .collect();
    Ok(BinQuantiles {
        bin_width: width,
        bins,
        filtering_disabled,
    })
}

/// `true` for records outside their bin's keep band by more than `margin`
/// interquantile distances. Boundary values are kept.
pub fn flag_outliers(records: &[ScadaRecord], bands: &BinQuantiles, margin: f64) -> Vec<bool> {
    records
        .iter()
        .map(|r| match bands.keep_range(bands.bin_of(r.wind_speed), margin) {
            Some((lo, hi)) => r.power < lo || r.power > hi,
            None => false,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CleanOutcome {
    pub clean: Vec<ScadaRecord>,
    /// Records flagged as bin outliers.
    pub removed: Vec<ScadaRecord>,
    /// Records dropped by the status filter.
    pub status_removed: usize,
    pub bands: BinQuantiles,
}

/// Status filter, bin quantiles, outlier flagging and removal.
pub fn clean(records: &[ScadaRecord], settings: &Settings) -> Result<CleanOutcome> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to clean".into()));
    }
    let cfg = &settings.turbine;
    let filtered = filter_status(records, cfg.exclusion_radius);
    let status_removed = records.len() - filtered.len();
    if filtered.is_empty() {
        return Err(Error::EmptyInput(format!(
            "all {} records removed by the status filter",
            records.len()
        )));
    }
    let bands = compute_bin_quantiles(&filtered, cfg, settings.min_bin_count)?;
    let mask = flag_outliers(&filtered, &bands, cfg.outlier_margin);
    let (removed, clean): (Vec<_>, Vec<_>) = filtered
        .into_iter()
        .zip(mask)
        .partition(|(_, flagged)| *flagged);
    Ok(CleanOutcome {
        clean: clean.into_iter().map(|(r, _)| r).collect(),
        removed: removed.into_iter().map(|(r, _)| r).collect(),
        status_removed,
        bands,
    })
}
