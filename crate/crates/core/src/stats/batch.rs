//! Batch-means error bars.

/// Mean and batch-means standard error with `⌊√N⌋` contiguous batches.
///
/// For independent values this agrees with the usual `s/√N`; for correlated
/// sequences it absorbs short-range correlation.
pub fn batch_means(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = (n as f64).sqrt().floor() as usize;
    if b < 2 {
        return (mean, 0.0);
    }
    let batch: Vec<f64> = (0..b)
        .map(|i| {
            let (lo, hi) = (i * n / b, (i + 1) * n / b);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let var = batch.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Weighted mean; atoms carry no sampling error.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum
}
