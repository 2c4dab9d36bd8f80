//! Small sample-statistics helpers used by the estimators and tests.

/// Sample mean; `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Summary of a replicated scalar estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub replications: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let variance = variance(xs);
        Self {
            mean: mean(xs),
            variance,
            std_error: (variance / xs.len() as f64).sqrt(),
            replications: xs.len(),
        }
    }

    /// Sample variance over squared sample mean; `None` when the mean is 0.
    pub fn relative_variance(&self) -> Option<f64> {
        if self.mean == 0.0 {
            None
        } else {
            Some(self.variance / (self.mean * self.mean))
        }
    }
}

/// Kolmogorov-Smirnov distance between the empirical law of `sorted` and a
/// continuous CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
