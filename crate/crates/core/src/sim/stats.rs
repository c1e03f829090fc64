use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Number of batches for the batch-means interval.
pub const BATCHES: usize = 20;

/// Mean of a latency sample stream with a 95% confidence interval.
///
/// Consecutive latencies from one run are correlated, so the interval comes
/// from non-overlapping batch means with a Student-t quantile rather than from
/// the naive sample variance. `variance` is still the plain sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        if count == 0 {
            return Self {
                count,
                mean: f64::NAN,
                variance: f64::NAN,
                std_error: f64::NAN,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
            };
        }
        let n = count as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = if count > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let (std_error, dof) = if count >= 2 * BATCHES {
            let size = count / BATCHES;
            let means: Vec<f64> = samples
                .chunks_exact(size)
                .take(BATCHES)
                .map(|c| c.iter().sum::<f64>() / size as f64)
                .collect();
            let grand = means.iter().sum::<f64>() / BATCHES as f64;
            let var =
                means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (BATCHES as f64 - 1.0);
            ((var / BATCHES as f64).sqrt(), BATCHES - 1)
        } else if count > 1 {
            ((variance / n).sqrt(), count - 1)
        } else {
            (0.0, 1)
        };
        let half = t_quantile_975(dof) * std_error;
        Self {
            count,
            mean,
            variance,
            std_error,
            ci_low: mean - half,
            ci_high: mean + half,
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::INFINITY)
}
