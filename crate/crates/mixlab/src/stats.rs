//! Small estimation helpers: sample means, Wilson intervals, quantiles.
//!
//! Probabilities get Wilson score intervals, means get normal intervals;
//! both are two-sided at a configurable level (default 95%).

/// Two-sided z value for a confidence level. Covers the levels the CLI
/// exposes; anything else falls back to 95%.
pub fn z_for_level(level: f64) -> f64 {
    if (level - 0.90).abs() < 1e-9 {
        1.6448536269514722
    } else if (level - 0.99).abs() < 1e-9 {
        2.5758293035489004
    } else {
        1.959963984540054
    }
}

/// Point estimate of a probability with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbEstimate {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub stderr: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl ProbEstimate {
    pub fn new(successes: u64, trials: u64, level: f64) -> Self {
        assert!(trials > 0, "need at least one trial");
        let n = trials as f64;
        let p = successes as f64 / n;
        let z = z_for_level(level);
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = (z / denom) * ((p * (1.0 - p) / n) + z2 / (4.0 * n * n)).sqrt();
        ProbEstimate {
            successes,
            trials,
            p_hat: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            wilson_low: (center - half).max(0.0),
            wilson_high: (center + half).min(1.0),
        }
    }
}

/// Sample mean with standard error and a normal interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
    pub low: f64,
    pub high: f64,
    /// Largest single observation's share of the total; > 0.5 flags a
    /// heavy-tailed sample whose mean is dominated by one draw.
    pub max_share: f64,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64], level: f64) -> Self {
        assert!(!samples.is_empty(), "need at least one sample");
        let n = samples.len() as f64;
        let sum: f64 = samples.iter().sum();
        let mean = sum / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let stderr = (var / n).sqrt();
        let z = z_for_level(level);
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        MeanEstimate {
            n: samples.len() as u64,
            mean,
            stderr,
            low: mean - z * stderr,
            high: mean + z * stderr,
            max_share: if sum > 0.0 { max / sum } else { 0.0 },
        }
    }

    pub fn heavy_tail_flag(&self) -> bool {
        self.max_share > 0.5
    }
}

/// Empirical quantile with linear interpolation on the sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
