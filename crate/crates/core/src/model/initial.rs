use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream, Domain, Label};

pub type LabelField = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Law of `z_p(0)` as a function of the label.
#[derive(Clone)]
pub enum InitialLawSpec {
    Deterministic(Vec<f64>),
    DeterministicField { dim: usize, field: LabelField },
    Gaussian {
        dim: usize,
        mean: LabelField,
        /// Lower Cholesky factor of the covariance, row-major.
        chol: Vec<f64>,
    },
}

impl fmt::Debug for InitialLawSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialLawSpec::Deterministic(x) => write!(f, "Deterministic({x:?})"),
            InitialLawSpec::DeterministicField { dim, .. } => write!(f, "DeterministicField(n={dim})"),
            InitialLawSpec::Gaussian { dim, .. } => write!(f, "Gaussian(n={dim})"),
        }
    }
}

impl InitialLawSpec {
    pub fn point(x: Vec<f64>) -> Self {
        InitialLawSpec::Deterministic(x)
    }

    pub fn field<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        InitialLawSpec::DeterministicField {
            dim,
            field: Arc::new(f),
        }
    }

    /// `z_p(0) = p` in every component.
    pub fn label_field(dim: usize) -> Self {
        InitialLawSpec::field(dim, move |p| vec![p; dim])
    }

    pub fn gaussian<F>(dim: usize, mean: F, cov: &[f64]) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        if cov.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "covariance has {} entries for dimension {dim}",
                cov.len()
            )));
        }
        let m = DMatrix::from_row_slice(dim, dim, cov);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::InvalidConfig("covariance is not positive definite".into()))?;
        let l = chol.l();
        let chol = (0..dim)
            .flat_map(|r| (0..dim).map(move |c| (r, c)))
            .map(|(r, c)| l[(r, c)])
            .collect();
        Ok(InitialLawSpec::Gaussian {
            dim,
            mean: Arc::new(mean),
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialLawSpec::Deterministic(x) => x.len(),
            InitialLawSpec::DeterministicField { dim, .. } | InitialLawSpec::Gaussian { dim, .. } => *dim,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, InitialLawSpec::Gaussian { .. })
    }

    /// Mean of `z_p(0)`.
    pub fn mean(&self, p: f64) -> Vec<f64> {
        match self {
            InitialLawSpec::Deterministic(x) => x.clone(),
            InitialLawSpec::DeterministicField { field, .. } => field(p),
            InitialLawSpec::Gaussian { mean, .. } => mean(p),
        }
    }

    /// Draws `z_p(0)` into `out` using the label's initial-state stream.
    pub fn sample_into(&self, seed: u64, label: Label, sample: u64, out: &mut [f64]) {
        let p = label.value();
        match self {
            InitialLawSpec::Deterministic(x) => out.copy_from_slice(x),
            InitialLawSpec::DeterministicField { field, .. } => out.copy_from_slice(&field(p)),
            InitialLawSpec::Gaussian { dim, mean, chol } => {
                let mut rng = stream(seed, label, sample, Domain::Initial);
                let xi: Vec<f64> = (0..*dim).map(|_| rng.sample(StandardNormal)).collect();
                let mu = mean(p);
                for r in 0..*dim {
                    out[r] = mu[r] + (0..=r).map(|c| chol[r * dim + c] * xi[c]).sum::<f64>();
                }
            }
        }
    }

    /// Sample estimate of `E‖z_p(0)‖^{2+υ₀}`.
    pub fn moment_estimate(&self, p: f64, upsilon0: f64, samples: usize, seed: u64) -> f64 {
        let label = Label::new((p * 1e9).round() as u64, 1_000_000_000);
        let mut z = vec![0.0; self.dim()];
        let total: f64 = (0..samples.max(1))
            .map(|s| {
                self.sample_into(seed, label, s as u64, &mut z);
                z.iter().map(|v| v * v).sum::<f64>().sqrt().powf(2.0 + upsilon0)
            })
            .sum();
        total / samples.max(1) as f64
    }
}
