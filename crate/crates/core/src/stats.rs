//! Order statistics used for stress scoring.

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("percentile of an empty set")]
pub struct EmptySet;

/// The top-`s`% element: sort descending and take rank
/// `k = max(1, ceil(s/100 * n))` (1-based). `s = 0` gives the maximum.
/// NaN values sort first (treated as largest).
pub fn percentile_top(values: &[f64], s: f64) -> Result<f64, EmptySet> {
    if values.is_empty() {
        return Err(EmptySet);
    }
    let n = values.len();
    let k = ((s / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    let mut v = values.to_vec();
    // k-th largest == (n-k)-th smallest
    let (_, kth, _) = v.select_nth_unstable_by(n - k, nan_max_cmp);
    Ok(*kth)
}

fn nan_max_cmp(a: &f64, b: &f64) -> std::cmp::Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Greater,
        (false, true) => std::cmp::Ordering::Less,
        _ => a.total_cmp(b),
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
