//! Named models, selectable from experiment configs.

use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use super::{
    sgd_model, CoeffFn, CoefficientModel, ExogenousSpec, FeatureFn, GainSchedule, InitialLawSpec,
    QuadraticCostFamily,
};
use crate::error::{Error, Result};

pub const NAMES: &[&str] = &[
    "sgd_quadratic",
    "consensus_only",
    "kuramoto_like",
    "ou_driven",
    "ou_scalar",
];

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "sgd_quadratic" => {
            "distributed SGD on quadratic costs: F = a1(t)(z-y), G = -a2(t) Q(p)(y-c(p)), H = -a2(t) sigma1 I\n\
             params: dim=1, alpha1=1, alpha2=1, alpha2_decay=false, sigma1=0, target=\"label\"|number, \
             curvature=\"identity\"|\"one_plus_label\", init"
        }
        "consensus_only" => "linear consensus: F = alpha1 (z-y), G = H = 0\nparams: dim=1, alpha1=1, init",
        "kuramoto_like" => {
            "scalar phase oscillators: F = coupling sin(z-y), G = spread (p-1/2), H = sigma\n\
             params: coupling=1, spread=1, sigma=0.1, init"
        }
        "ou_driven" => {
            "OU-forced consensus: F = coupling (z-y), G = -theta y + eta, H = sigma I, eta ~ OU(eta_theta, eta_sigma)\n\
             params: dim=1, theta=1, coupling=1, sigma=0.5, eta_theta=1, eta_sigma=1, init"
        }
        "ou_scalar" => "uncoupled scalar OU: F = 0, G = -theta y, H = sigma\nparams: theta=1, sigma=1, init",
        _ => return None,
    })
}

/// `F(t,p,q,z,y) = α₁(z−y)`, `G = H = 0`.
pub fn consensus_only(alpha1: f64, init: InitialLawSpec) -> Result<CoefficientModel> {
    let n = init.dim();
    Ok(CoefficientModel::new("consensus_only", n, init)?
        .with_separable_interaction(2, linear_coeff(alpha1), linear_feature())
        .with_interaction_direct(move |_t, _p, _q, z, y, out| {
            for c in 0..out.len() {
                out[c] = alpha1 * (z[c] - y[c]);
            }
        }))
}

/// Scalar `F = K sin(z−y)`, `G = ω(p − ½)`, `H = σ`.
pub fn kuramoto_like(coupling: f64, spread: f64, sigma: f64, init: InitialLawSpec) -> Result<CoefficientModel> {
    if init.dim() != 1 {
        return Err(Error::DimensionMismatch("kuramoto_like is scalar".into()));
    }
    let coeff: CoeffFn = Arc::new(move |_t, _p, _q, y: &[f64], out: &mut [f64]| {
        out[0] = coupling * y[0].cos();
        out[1] = -coupling * y[0].sin();
    });
    let feature: FeatureFn = Arc::new(|_t, _q, z: &[f64], out: &mut [f64]| {
        out[0] = z[0].sin();
        out[1] = z[0].cos();
    });
    let mut model = CoefficientModel::new("kuramoto_like", 1, init)?
        .with_separable_interaction(2, coeff, feature)
        .with_interaction_direct(move |_t, _p, _q, z, y, out| {
            out[0] = coupling * (z[0] - y[0]).sin();
        })
        .with_drift(move |_t, p, _eta, _y, out| out[0] = spread * (p - 0.5));
    if sigma != 0.0 {
        model = model.with_diffusion(move |_t, _p, _eta, _y, out| out[0] = sigma);
    }
    Ok(model)
}

/// `F = κ(z−y)`, `G = −θy + η`, `H = σI`, `η` an OU process.
pub fn ou_driven(
    theta: f64,
    coupling: f64,
    sigma: f64,
    eta: ExogenousSpec,
    init: InitialLawSpec,
) -> Result<CoefficientModel> {
    let n = init.dim();
    let mut model = CoefficientModel::new("ou_driven", n, init)?
        .with_separable_interaction(2, linear_coeff(coupling), linear_feature())
        .with_interaction_direct(move |_t, _p, _q, z, y, out| {
            for c in 0..out.len() {
                out[c] = coupling * (z[c] - y[c]);
            }
        })
        .with_drift(move |_t, _p, eta, y, out| {
            for c in 0..out.len() {
                out[c] = -theta * y[c] + eta[c];
            }
        })
        .with_exogenous(eta);
    if sigma != 0.0 {
        model = model.with_diffusion(move |_t, _p, _eta, _y, out| {
            out.fill(0.0);
            for c in 0..n {
                out[c * n + c] = sigma;
            }
        });
    }
    Ok(model)
}

/// Uncoupled `dz = −θz dt + σ dW` (scalar).
pub fn ou_scalar(theta: f64, sigma: f64, init: InitialLawSpec) -> Result<CoefficientModel> {
    if init.dim() != 1 {
        return Err(Error::DimensionMismatch("ou_scalar is scalar".into()));
    }
    let mut model = CoefficientModel::new("ou_scalar", 1, init)?
        .with_drift(move |_t, _p, _eta, y, out| out[0] = -theta * y[0]);
    if sigma != 0.0 {
        model = model.with_diffusion(move |_t, _p, _eta, _y, out| out[0] = sigma);
    }
    Ok(model)
}

fn linear_coeff(gain: f64) -> CoeffFn {
    Arc::new(move |_t, _p, _q, y: &[f64], out: &mut [f64]| {
        let n = y.len();
        out[..n].fill(gain);
        for c in 0..n {
            out[n + c] = -gain * y[c];
        }
    })
}

fn linear_feature() -> FeatureFn {
    Arc::new(|_t, _q, z: &[f64], out: &mut [f64]| {
        let n = z.len();
        out[..n].copy_from_slice(z);
        out[n..].fill(1.0);
    })
}

impl CoefficientModel {
    /// Replaces the evaluation closure of `F` while keeping the separable
    /// factorization. The two must agree; tests check this for every preset.
    fn with_interaction_direct<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.interaction = Some(Arc::new(f));
        self
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitParams {
    /// `z_p(0) = p` in every component.
    Label,
    Point { value: Scalar },
    Gaussian {
        #[serde(default = "label_mean")]
        mean: Scalar,
        std: f64,
    },
}

/// A number, or the string `"label"` meaning `p`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Named(String),
}

fn label_mean() -> Scalar {
    Scalar::Named("label".into())
}

impl Scalar {
    fn field(&self, what: &str) -> Result<Arc<dyn Fn(f64) -> f64 + Send + Sync>> {
        match self {
            Scalar::Number(v) => {
                let v = *v;
                Ok(Arc::new(move |_| v))
            }
            Scalar::Named(s) if s == "label" => Ok(Arc::new(|p| p)),
            Scalar::Named(s) => Err(Error::InvalidConfig(format!("{what}: unknown value {s:?}"))),
        }
    }
}

impl InitParams {
    pub fn build(&self, dim: usize) -> Result<InitialLawSpec> {
        Ok(match self {
            InitParams::Label => InitialLawSpec::label_field(dim),
            InitParams::Point { value } => {
                let f = value.field("init.value")?;
                InitialLawSpec::field(dim, move |p| vec![f(p); dim])
            }
            InitParams::Gaussian { mean, std } => {
                let f = mean.field("init.mean")?;
                let mut cov = vec![0.0; dim * dim];
                for c in 0..dim {
                    cov[c * dim + c] = std * std;
                }
                InitialLawSpec::gaussian(dim, move |p| vec![f(p); dim], &cov)?
            }
        })
    }
}

fn default_init() -> InitParams {
    InitParams::Label
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SgdParams {
    #[serde(default = "one_usize")]
    dim: usize,
    #[serde(default = "one")]
    alpha1: f64,
    #[serde(default = "one")]
    alpha2: f64,
    #[serde(default)]
    alpha2_decay: bool,
    #[serde(default)]
    sigma1: f64,
    #[serde(default = "label_mean")]
    target: Scalar,
    #[serde(default = "identity")]
    curvature: String,
    #[serde(default = "default_init")]
    init: InitParams,
}

fn identity() -> String {
    "identity".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsensusParams {
    #[serde(default = "one_usize")]
    dim: usize,
    #[serde(default = "one")]
    alpha1: f64,
    #[serde(default = "default_init")]
    init: InitParams,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KuramotoParams {
    #[serde(default = "one")]
    coupling: f64,
    #[serde(default = "one")]
    spread: f64,
    #[serde(default = "tenth")]
    sigma: f64,
    #[serde(default = "default_init")]
    init: InitParams,
}

fn tenth() -> f64 {
    0.1
}
fn half() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OuDrivenParams {
    #[serde(default = "one_usize")]
    dim: usize,
    #[serde(default = "one")]
    theta: f64,
    #[serde(default = "one")]
    coupling: f64,
    #[serde(default = "half")]
    sigma: f64,
    #[serde(default = "one")]
    eta_theta: f64,
    #[serde(default = "one")]
    eta_sigma: f64,
    #[serde(default = "default_init")]
    init: InitParams,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OuScalarParams {
    #[serde(default = "one")]
    theta: f64,
    #[serde(default = "one")]
    sigma: f64,
    #[serde(default = "default_init")]
    init: InitParams,
}

fn parse<T: serde::de::DeserializeOwned>(name: &str, params: &Value) -> Result<T> {
    let params = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    serde_json::from_value(params)
        .map_err(|e| Error::InvalidConfig(format!("model {name}: {e}")))
}

/// The quadratic cost family described by `sgd_quadratic` parameters.
pub fn sgd_costs(params: &Value) -> Result<QuadraticCostFamily> {
    let p: SgdParams = parse("sgd_quadratic", params)?;
    costs_from(&p)
}

fn costs_from(p: &SgdParams) -> Result<QuadraticCostFamily> {
    let n = p.dim;
    let target = p.target.field("target")?;
    let curvature: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match p.curvature.as_str() {
        "identity" => Arc::new(|_| 1.0),
        "one_plus_label" => Arc::new(|p| 1.0 + p),
        other => {
            return Err(Error::InvalidConfig(format!("unknown curvature {other:?}")));
        }
    };
    Ok(QuadraticCostFamily::new(
        n,
        move |q| vec![target(q); n],
        move |q| {
            let mut m = vec![0.0; n * n];
            for c in 0..n {
                m[c * n + c] = curvature(q);
            }
            m
        },
    ))
}

/// `(theta, sigma)` of `ou_scalar` parameters.
pub fn ou_scalar_params(params: &Value) -> Result<(f64, f64)> {
    let p: OuScalarParams = parse("ou_scalar", params)?;
    Ok((p.theta, p.sigma))
}

/// Builds a preset from its name and JSON parameters.
pub fn from_params(name: &str, params: &Value) -> Result<CoefficientModel> {
    match name {
        "sgd_quadratic" => {
            let p: SgdParams = parse(name, params)?;
            let costs = costs_from(&p)?;
            let gains = if p.alpha2_decay {
                GainSchedule::decaying(p.alpha1, p.alpha2)
            } else {
                GainSchedule::constant(p.alpha1, p.alpha2)
            };
            let mut sigma1 = vec![0.0; p.dim * p.dim];
            for c in 0..p.dim {
                sigma1[c * p.dim + c] = p.sigma1;
            }
            sgd_model(&costs, &gains, &sigma1, p.init.build(p.dim)?)
        }
        "consensus_only" => {
            let p: ConsensusParams = parse(name, params)?;
            consensus_only(p.alpha1, p.init.build(p.dim)?)
        }
        "kuramoto_like" => {
            let p: KuramotoParams = parse(name, params)?;
            kuramoto_like(p.coupling, p.spread, p.sigma, p.init.build(1)?)
        }
        "ou_driven" => {
            let p: OuDrivenParams = parse(name, params)?;
            let eta = ExogenousSpec::ornstein_uhlenbeck(p.eta_theta, p.eta_sigma)?;
            ou_driven(p.theta, p.coupling, p.sigma, eta, p.init.build(p.dim)?)
        }
        "ou_scalar" => {
            let p: OuScalarParams = parse(name, params)?;
            ou_scalar(p.theta, p.sigma, p.init.build(1)?)
        }
        other => Err(Error::InvalidConfig(format!("unknown model preset {other:?}"))),
    }
}
