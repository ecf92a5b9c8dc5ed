//! Sample statistics used by the verdict rules.

/// Sample mean and standard error `s/√n` (with the `n − 1` variance).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Fraction of `true` entries with its binomial standard error.
pub fn proportion_se(flags: &[bool]) -> (f64, f64) {
    let n = flags.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = flags.iter().filter(|&&f| f).count() as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Standard error of the difference of two independent estimates.
pub fn joint_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Mean and standard error of paired differences `a_i − b_i`.
pub fn paired_diff(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_se(&d)
}

/// Batch-means estimate for a correlated series: the series is cut into
/// `n_batches` equal blocks and the block averages are treated as
/// independent.
pub fn batch_means(series: &[f64], n_batches: usize) -> (f64, f64) {
    let len = series.len() / n_batches.max(1);
    if len == 0 {
        return mean_se(series);
    }
    let means: Vec<f64> = series
        .chunks_exact(len)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    mean_se(&means)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_se(&[1.0]).1.is_nan());
    }

    #[test]
    fn proportions() {
        let (p, se) = proportion_se(&[true, false, false, true]);
        assert_eq!(p, 0.5);
        assert_eq!(se, 0.25);
    }

    #[test]
    fn batches() {
        let series: Vec<f64> = (0..100).map(|i| (i % 10) as f64).collect();
        let (m, se) = batch_means(&series, 10);
        assert_eq!(m, 4.5);
        assert_eq!(se, 0.0);
        assert_eq!(paired_diff(&[3.0, 5.0], &[1.0, 2.0]).0, 2.5);
        assert_eq!(joint_se(3.0, 4.0), 5.0);
    }
}
