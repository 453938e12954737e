//! Small numerical helpers shared by the estimators.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

/// Sample mean and standard error of the mean.
///
/// Accumulates deviations from the first value, so a constant sample returns
/// that value bit-for-bit with standard error zero.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let x0 = xs[0];
    let d_mean = xs.iter().map(|x| x - x0).sum::<f64>() / n as f64;
    let mean = x0 + d_mean;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - x0 - d_mean).powi(2)).sum();
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Two-sided standard-normal critical value at level `alpha`.
pub fn z_critical(alpha: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - alpha / 2.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

/// One-sample Kolmogorov-Smirnov statistic against U[0,1).
pub fn ks_uniform(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `c(alpha)/sqrt(n)`, from the Kolmogorov
/// distribution: c(alpha) = sqrt(-ln(alpha/2)/2).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Central binomial band `[lo, hi]` with coverage at least `coverage`.
pub fn binomial_band(trials: u64, p: f64, coverage: f64) -> (u64, u64) {
    let b = Binomial::new(p, trials).expect("valid binomial");
    let tail = (1.0 - coverage) / 2.0;
    let lo = b.inverse_cdf(tail);
    let mut hi = b.inverse_cdf(1.0 - tail);
    while hi < trials && b.cdf(hi) < 1.0 - tail {
        hi += 1;
    }
    (lo, hi)
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
