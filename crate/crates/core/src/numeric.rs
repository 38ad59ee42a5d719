//! Order-fixed reductions. Parallel code collects per-particle values in
//! index order and reduces them here, so results never depend on the
//! number of threads.

/// Pairwise (cascade) summation in a fixed tree over the slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `log sum_k exp(x_k)` with max-shift. Returns `-inf` when every term is
/// `-inf` (or the slice is empty).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let shifted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Subtract the log-sum-exp so the weights exponentiate to a probability
/// vector. `None` when every weight is `-inf` or any is NaN.
pub fn normalize_log_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    if log_weights.iter().any(|w| w.is_nan()) {
        return None;
    }
    let total = log_sum_exp(log_weights);
    if !total.is_finite() {
        return None;
    }
    Some(log_weights.iter().map(|w| w - total).collect())
}
