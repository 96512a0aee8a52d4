//! One-dimensional Gaussian kernel density estimation with Silverman's
//! bandwidth. Used as the termination predictor for per-region
//! acquisition sampling: regions stop drawing once the estimated chance
//! of beating the best score seen so far is negligible.

use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone)]
pub struct GaussianKde {
    points: Vec<f64>,
    bandwidth: f64,
}

impl GaussianKde {
    /// Fit with Silverman's rule of thumb, h = 1.06 * sigma * m^(-1/5),
    /// where sigma is the sample standard deviation. Degenerate inputs
    /// (a single point, or all points equal) get bandwidth 0 and behave
    /// as point masses.
    pub fn fit(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "KDE needs at least one value");
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let bandwidth = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let sd = var.sqrt();
            // float noise on identical values must not fake a spread
            if sd < 1e-12 * mean.abs().max(1.0) {
                0.0
            } else {
                1.06 * sd * m.powf(-0.2)
            }
        };
        Self { points: values.to_vec(), bandwidth }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Probability that a fresh draw from the fitted density exceeds `x`.
    pub fn prob_exceeds(&self, x: f64) -> f64 {
        let m = self.points.len() as f64;
        if self.bandwidth <= 0.0 {
            return self.points.iter().filter(|&&p| p > x).count() as f64 / m;
        }
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        self.points
            .iter()
            .map(|p| 1.0 - std_normal.cdf((x - p) / self.bandwidth))
            .sum::<f64>()
            / m
    }
}
