//! Small descriptive-statistics helpers shared by the entropy filter and the
//! surface metrics.

/// Linear-interpolation sample quantile (the `numpy.percentile` default):
/// position `q·(n−1)` in the ascending order, interpolated between neighbours.
///
/// Returns `None` for an empty slice or `q` outside `[0, 1]`.
pub fn quantile_linear(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile_sorted(&sorted, q))
}

/// Same as [`quantile_linear`] for already-sorted input.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let v: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert!((quantile_linear(&v, 0.8).unwrap() - 0.72).abs() < 1e-12);
        assert_eq!(quantile_linear(&[3.0], 0.95), Some(3.0));
        assert_eq!(quantile_linear(&[], 0.5), None);
        assert_eq!(quantile_linear(&[1.0, 3.0], 0.5), Some(2.0));
    }

    #[test]
    fn two_point_stats() {
        assert_eq!(mean_std(&[80.0, 90.0]), Some((85.0, 5.0)));
    }
}
