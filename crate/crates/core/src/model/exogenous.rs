use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream, Domain, Label};

/// Exogenous process `η_p(t)`, independent across labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExogenousSpec {
    Zero,
    /// Stationary `dη = −θη dt + σ dW`, started from `N(0, σ²/(2θ))`.
    OrnsteinUhlenbeck { theta: f64, sigma: f64 },
}

impl ExogenousSpec {
    pub fn ornstein_uhlenbeck(theta: f64, sigma: f64) -> Result<Self> {
        if !(theta > 0.0) || !(sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "OU needs θ > 0 and σ ≥ 0, got θ = {theta}, σ = {sigma}"
            )));
        }
        Ok(ExogenousSpec::OrnsteinUhlenbeck { theta, sigma })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ExogenousSpec::Zero)
    }

    /// Values at the `steps + 1` grid times `mT/steps`, flattened
    /// `[steps+1][dim]`, drawn with the exact OU transition.
    pub fn sample_grid(
        &self,
        seed: u64,
        label: Label,
        sample: u64,
        steps: usize,
        horizon: f64,
        dim: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; (steps + 1) * dim];
        let ExogenousSpec::OrnsteinUhlenbeck { theta, sigma } = *self else {
            return out;
        };
        let mut rng = stream(seed, label, sample, Domain::Exogenous);
        let h = horizon / steps as f64;
        let decay = (-theta * h).exp();
        let stationary = sigma / (2.0 * theta).sqrt();
        let step_sd = stationary * (1.0 - decay * decay).sqrt();
        for c in 0..dim {
            out[c] = stationary * rng.sample::<f64, _>(StandardNormal);
        }
        for m in 0..steps {
            for c in 0..dim {
                let xi: f64 = rng.sample(StandardNormal);
                out[(m + 1) * dim + c] = decay * out[m * dim + c] + step_sd * xi;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_process_is_zero() {
        let v = ExogenousSpec::Zero.sample_grid(1, Label::new(1, 2), 0, 10, 1.0, 3);
        assert_eq!(v.len(), 33);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ou_has_zero_mean_and_stationary_variance() {
        let eta = ExogenousSpec::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let draws = 20_000;
        let (mut s0, mut s1, mut q1) = (0.0, 0.0, 0.0);
        for i in 0..draws {
            let path = eta.sample_grid(9, Label::new(1, 3), i, 4, 2.0, 1);
            s0 += path[0];
            s1 += path[4];
            q1 += path[4] * path[4];
        }
        let n = draws as f64;
        let sd = (0.5f64 / n).sqrt();
        assert!((s0 / n).abs() < 4.0 * sd);
        assert!((s1 / n).abs() < 4.0 * sd);
        assert!((q1 / n - 0.5).abs() < 0.03);
    }

    #[test]
    fn ou_lag_correlation() {
        let eta = ExogenousSpec::ornstein_uhlenbeck(2.0, 1.0).unwrap();
        let draws = 20_000;
        let mut cov = 0.0;
        for i in 0..draws {
            let path = eta.sample_grid(3, Label::new(0, 1), i, 2, 1.0, 1);
            cov += path[0] * path[1];
        }
        // Cov(η(0), η(h)) = σ²/(2θ) e^{−θh}, h = 0.5.
        let expected = 0.25 * (-1.0f64).exp();
        assert!((cov / draws as f64 - expected).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ExogenousSpec::ornstein_uhlenbeck(0.0, 1.0).is_err());
        assert!(ExogenousSpec::ornstein_uhlenbeck(1.0, -1.0).is_err());
    }
}
