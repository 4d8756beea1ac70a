//! Summary statistics over replications.

use serde::{Deserialize, Serialize};

/// Sample size from which a normal-approximation interval is reported.
pub const CI_MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub sd: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// Half-width of the 95% interval of the mean, when `n` is large enough.
    pub ci95: Option<f64>,
}

impl Summary {
    /// Summary of `values`; `None` when empty.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            n,
            mean,
            sd,
            min: sorted[0],
            median: median_of_sorted(&sorted),
            max: sorted[n - 1],
            ci95: (n >= CI_MIN_SAMPLES).then(|| 1.96 * sd / (n as f64).sqrt()),
        })
    }
}

/// Median of an ascending, non-empty slice.
pub fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sample() {
        let s = Summary::of(&[3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.ci95, None);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn interval_from_one_hundred_samples() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let s = Summary::of(&v).unwrap();
        let half = s.ci95.unwrap();
        assert!((half - 1.96 * s.sd / 10.0).abs() < 1e-12);
        assert_eq!(s.median, 49.5);
    }
}
