//! One-sample Kolmogorov-Smirnov statistic, used to validate the sampler.

/// `sup |F_n(x) − F(x)|` for the empirical distribution of `samples`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |acc: f64, (i, &x)| {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        acc.max(above).max(below)
    })
}

/// Asymptotic critical value of the statistic at level `alpha`, with
/// Stephens' finite-sample correction.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let k = (-0.5 * (alpha / 2.0).ln()).sqrt();
    k / (sqrt_n + 0.12 + 0.11 / sqrt_n)
}
