//! Coefficient models: the interaction `F`, self drift `G` and diffusion `H`
//! of a graphon particle system, plus its exogenous process and initial law.
//!
//! All coefficient closures must be pure. The simulator evaluates them
//! concurrently across particles and relies on identical inputs giving
//! identical outputs.

mod costs;
mod exogenous;
mod initial;
pub mod presets;
mod probe;

use std::fmt;
use std::sync::Arc;

pub use costs::{global_minimizer, GainSchedule, QuadraticCostFamily, ScalarFn};
pub use exogenous::ExogenousSpec;
pub use initial::{InitialLawSpec, LabelField};
pub use probe::{probe_assumptions, ProbeReport, ProbeSettings};

use crate::error::{Error, Result};

/// `F(t, p, q, z, y)` written into `out` (length `n`). `z` is the state of
/// the neighbour at label `q`, `y` the state of the particle at label `p`.
pub type InteractionFn = Arc<dyn Fn(f64, f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// `G(t, p, η, y)` written into `out` (length `n`).
pub type DriftFn = Arc<dyn Fn(f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// `H(t, p, η, y)` written into `out` as a row-major `n×n` matrix.
pub type DiffusionFn = Arc<dyn Fn(f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Coefficient closure of a separable interaction, `φ_r(t, p, q, y)` for all
/// `r`, written into `out` of length `terms·n`.
pub type CoeffFn = Arc<dyn Fn(f64, f64, f64, &[f64], &mut [f64]) + Send + Sync>;

/// Feature closure of a separable interaction, `ψ_r(t, q, z)` for all `r`.
pub type FeatureFn = Arc<dyn Fn(f64, f64, &[f64], &mut [f64]) + Send + Sync>;

/// Optional factorization `F(t,p,q,z,y) = Σ_r φ_r(t,p,q,y) ⊙ ψ_r(t,q,z)`.
///
/// When present, mean-field averages `∫F(…, z, y) μ(dz)` reduce to
/// `Σ_r φ_r(y) ⊙ E[ψ_r(z)]`, so the Picard solver only has to average the
/// features once per node and time instead of once per target sample.
#[derive(Clone)]
pub struct SeparableInteraction {
    pub terms: usize,
    pub coeff: CoeffFn,
    pub feature: FeatureFn,
}

#[derive(Clone)]
pub struct CoefficientModel {
    name: String,
    dim: usize,
    interaction: Option<InteractionFn>,
    separable: Option<SeparableInteraction>,
    drift: Option<DriftFn>,
    diffusion: Option<DiffusionFn>,
    exogenous: ExogenousSpec,
    initial: InitialLawSpec,
}

impl fmt::Debug for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("interaction", &self.interaction.is_some())
            .field("separable", &self.separable.is_some())
            .field("drift", &self.drift.is_some())
            .field("diffusion", &self.diffusion.is_some())
            .field("exogenous", &self.exogenous)
            .finish()
    }
}

impl CoefficientModel {
    /// A model with `F = G = H ≡ 0`, zero exogenous process and the given
    /// initial law. Coefficients are attached with the `with_*` builders.
    pub fn new(name: impl Into<String>, dim: usize, initial: InitialLawSpec) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("state dimension must be >= 1".into()));
        }
        if initial.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "initial law has dimension {}, model {dim}",
                initial.dim()
            )));
        }
        Ok(CoefficientModel {
            name: name.into(),
            dim,
            interaction: None,
            separable: None,
            drift: None,
            diffusion: None,
            exogenous: ExogenousSpec::Zero,
            initial,
        })
    }

    pub fn with_interaction<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.interaction = Some(Arc::new(f));
        self.separable = None;
        self
    }

    /// Sets `F` from its separable factorization.
    pub fn with_separable_interaction(mut self, terms: usize, coeff: CoeffFn, feature: FeatureFn) -> Self {
        let n = self.dim;
        let (c, ft) = (coeff.clone(), feature.clone());
        self.interaction = Some(Arc::new(move |t, p, q, z, y, out: &mut [f64]| {
            let mut phi = vec![0.0; terms * n];
            let mut psi = vec![0.0; terms * n];
            c(t, p, q, y, &mut phi);
            ft(t, q, z, &mut psi);
            for (c, o) in out.iter_mut().enumerate() {
                *o = (0..terms).map(|r| phi[r * n + c] * psi[r * n + c]).sum();
            }
        }));
        self.separable = Some(SeparableInteraction {
            terms,
            coeff,
            feature,
        });
        self
    }

    pub fn with_drift<F>(mut self, g: F) -> Self
    where
        F: Fn(f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.drift = Some(Arc::new(g));
        self
    }

    pub fn with_diffusion<F>(mut self, h: F) -> Self
    where
        F: Fn(f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.diffusion = Some(Arc::new(h));
        self
    }

    pub fn with_exogenous(mut self, eta: ExogenousSpec) -> Self {
        self.exogenous = eta;
        self
    }

    pub fn with_initial(mut self, initial: InitialLawSpec) -> Result<Self> {
        if initial.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "initial law has dimension {}, model {}",
                initial.dim(),
                self.dim
            )));
        }
        self.initial = initial;
        Ok(self)
    }

    /// Drops the separable factorization, forcing generic evaluation of `F`.
    pub fn without_separable(mut self) -> Self {
        self.separable = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_interaction(&self) -> bool {
        self.interaction.is_some()
    }

    pub fn has_diffusion(&self) -> bool {
        self.diffusion.is_some()
    }

    pub fn separable(&self) -> Option<&SeparableInteraction> {
        self.separable.as_ref()
    }

    pub fn exogenous(&self) -> &ExogenousSpec {
        &self.exogenous
    }

    pub fn initial(&self) -> &InitialLawSpec {
        &self.initial
    }

    /// Writes `F(t,p,q,z,y)` into `out`; zero when no interaction is set.
    #[inline]
    pub fn interaction_into(&self, t: f64, p: f64, q: f64, z: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.interaction {
            Some(f) => f(t, p, q, z, y, out),
            None => out.fill(0.0),
        }
    }

    #[inline]
    pub fn drift_into(&self, t: f64, p: f64, eta: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.drift {
            Some(g) => g(t, p, eta, y, out),
            None => out.fill(0.0),
        }
    }

    #[inline]
    pub fn diffusion_into(&self, t: f64, p: f64, eta: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Some(h) => h(t, p, eta, y, out),
            None => out.fill(0.0),
        }
    }

    pub fn interaction(&self, t: f64, p: f64, q: f64, z: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.interaction_into(t, p, q, z, y, &mut out);
        out
    }

    pub fn drift(&self, t: f64, p: f64, eta: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(t, p, eta, y, &mut out);
        out
    }

    pub fn diffusion(&self, t: f64, p: f64, eta: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.diffusion_into(t, p, eta, y, &mut out);
        out
    }
}

/// `F = α₁(t)(z−y)`, `G = −α₂(t)∇V(p,y)`, `H = −α₂(t)Σ₁`, `η ≡ 0`.
pub fn sgd_model(
    costs: &QuadraticCostFamily,
    gains: &GainSchedule,
    sigma1: &[f64],
    init: InitialLawSpec,
) -> Result<CoefficientModel> {
    let n = costs.dim();
    if sigma1.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "Σ₁ has {} entries, expected {}",
            sigma1.len(),
            n * n
        )));
    }
    let a1 = gains.alpha1.clone();
    let a1f = gains.alpha1.clone();
    let coeff: CoeffFn = Arc::new(move |t, _p, _q, y: &[f64], out: &mut [f64]| {
        let g = a1(t);
        let n = y.len();
        out[..n].fill(g);
        for c in 0..n {
            out[n + c] = -g * y[c];
        }
    });
    let feature: FeatureFn = Arc::new(move |_t, _q, z: &[f64], out: &mut [f64]| {
        let n = z.len();
        out[..n].copy_from_slice(z);
        out[n..].fill(1.0);
    });
    let a2 = gains.alpha2.clone();
    let a2h = gains.alpha2.clone();
    let costs_g = costs.clone();
    let sigma1 = sigma1.to_vec();
    let zero_noise = sigma1.iter().all(|&s| s == 0.0);
    let mut model = CoefficientModel::new("sgd_quadratic", n, init)?
        .with_separable_interaction(2, coeff, feature)
        .with_drift(move |t, p, _eta, y, out| {
            costs_g.gradient_into(p, y, out);
            let g = a2(t);
            out.iter_mut().for_each(|o| *o *= -g);
        });
    // Replace the generic closure with the direct one; same values, fewer
    // temporaries on the particle hot path.
    model.interaction = Some(Arc::new(move |t, _p, _q, z, y, out: &mut [f64]| {
        let g = a1f(t);
        for c in 0..out.len() {
            out[c] = g * (z[c] - y[c]);
        }
    }));
    if !zero_noise {
        model = model.with_diffusion(move |t, _p, _eta, _y, out| {
            let g = a2h(t);
            for (o, s) in out.iter_mut().zip(&sigma1) {
                *o = -g * s;
            }
        });
    }
    Ok(model)
}
