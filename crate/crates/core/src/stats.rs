//! Summary statistics shared by the Monte Carlo oracles and the experiment runner.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Mean and standard error of independent samples.
pub fn mean_se(samples: &[f64]) -> MeanEstimate {
    let n = samples.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            samples: 0,
        };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    MeanEstimate {
        mean,
        std_error,
        samples: n,
    }
}

/// Averages of `batches` equal consecutive blocks (a trailing remainder is dropped).
pub fn batch_averages(series: &[f64], batches: usize) -> Vec<f64> {
    let batches = batches.max(1);
    let size = series.len() / batches;
    if size == 0 {
        return series.to_vec();
    }
    series[..size * batches]
        .chunks(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect()
}

/// Mean of a correlated stationary series with a batch-means standard error.
pub fn batch_means(series: &[f64], batches: usize) -> MeanEstimate {
    let batches = batches.max(2).min(series.len().max(2));
    if series.len() < batches {
        return mean_se(series);
    }
    let est = mean_se(&batch_averages(series, batches));
    MeanEstimate {
        mean: series.iter().sum::<f64>() / series.len() as f64,
        std_error: est.std_error,
        samples: series.len(),
    }
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; NaN with fewer than three points.
    pub slope_se: f64,
    pub points: usize,
}

impl LineFit {
    /// 95% normal-approximation interval for the slope.
    pub fn slope_interval(&self) -> (f64, f64) {
        (self.slope - 1.96 * self.slope_se, self.slope + 1.96 * self.slope_se)
    }
}

/// Returns `None` when fewer than two distinct abscissae are available.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
        points: n,
    })
}

/// Least-squares slope of `ln y` against `ln x`. Non-positive values are rejected.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    if xs.iter().chain(ys).any(|v| *v <= 0.0 || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_law_slope() {
        let xs = [2000.0, 8000.0, 32000.0];
        let ys: Vec<f64> = xs.iter().map(|h: &f64| 3.0 * h.sqrt()).collect();
        let fit = log_log_slope(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_point_has_no_slope() {
        assert!(fit_line(&[1.0], &[2.0]).is_none());
        assert!(log_log_slope(&[1.0, 2.0], &[1.0, -1.0]).is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn batch_means_of_constant_series() {
        let est = batch_means(&[2.0; 1000], 20);
        assert_eq!(est.mean, 2.0);
        assert_eq!(est.std_error, 0.0);
    }
}
