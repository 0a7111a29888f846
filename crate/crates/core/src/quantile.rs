//! Empirical quantiles by linear interpolation between order statistics.
//!
//! For a sorted sample `x[0] <= … <= x[n-1]` the level-`q` quantile sits at
//! the zero-based fractional index `h = (n - 1) q` and is interpolated
//! linearly between `x[floor(h)]` and `x[floor(h) + 1]`. Every quantile in
//! the crate goes through this one estimator.

/// Quantile of an already sorted, non-empty sample.
///
/// `q` is clamped to `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return sorted[lo];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Sorts a copy of `values` in the IEEE total order.
pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Quantile of an unsorted sample. Returns `None` for an empty sample.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(quantile_sorted(&sorted_copy(values), q))
}

/// Several quantile levels from one sort.
pub fn quantiles(values: &[f64], levels: &[f64]) -> Option<Vec<f64>> {
    if values.is_empty() {
        return None;
    }
    let sorted = sorted_copy(values);
    Some(levels.iter().map(|&q| quantile_sorted(&sorted, q)).collect())
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n − 1 denominator); `None` below two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}
