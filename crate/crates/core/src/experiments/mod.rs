//! Experiment configs, sweep drivers and CSV artifacts.

mod checks;
mod sweeps;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graphon::Graphon;
use crate::meanfield::MeanFieldConfig;
use crate::model::{presets, CoefficientModel};

pub use checks::{
    exact_ou_path, run_em_order, run_ot_selftest, selftest_counts, SelftestCounts, AXIOM_PAIRS, DIRAC_PAIRS, ORACLE_INSTANCES,
};
pub use sweeps::{run_lln_k_sweep, run_lln_n_sweep, run_sgd_demo};

pub const CSV_HEADER: &str = "experiment,N,k,replication,metric,value,std_error,wall_time_ms,seed_lineage";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LlnNSweep,
    LlnKSweep,
    SgdDemo,
    OtSelftest,
    EmOrder,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::LlnNSweep => "lln_n_sweep",
            ExperimentKind::LlnKSweep => "lln_k_sweep",
            ExperimentKind::SgdDemo => "sgd_demo",
            ExperimentKind::OtSelftest => "ot_selftest",
            ExperimentKind::EmOrder => "em_order",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A preset name with free-form parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Named {
    pub name: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldParams {
    #[serde(rename = "P")]
    pub grid_size: usize,
    #[serde(rename = "M")]
    pub samples: usize,
    pub max_iters: usize,
    #[serde(default)]
    pub tol: Option<f64>,
}

impl From<MeanFieldParams> for MeanFieldConfig {
    fn from(p: MeanFieldParams) -> Self {
        MeanFieldConfig {
            grid_size: p.grid_size,
            samples: p.samples,
            max_iters: p.max_iters,
            tol: p.tol,
        }
    }
}

impl Default for MeanFieldParams {
    fn default() -> Self {
        let d = MeanFieldConfig::default();
        MeanFieldParams {
            grid_size: d.grid_size,
            samples: d.samples,
            max_iters: d.max_iters,
            tol: d.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: Named,
    pub graphon: Named,
    #[serde(rename = "N")]
    pub particles: Vec<usize>,
    pub k: Vec<usize>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    pub meanfield: MeanFieldParams,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Checks list shapes and builds the model and graphon once so that
    /// parameter errors surface before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.particles.is_empty() || self.k.is_empty() {
            return Err(Error::InvalidConfig("N and k lists must be nonempty".into()));
        }
        if self.particles.contains(&0) || self.k.contains(&0) {
            return Err(Error::InvalidConfig("N and k entries must be >= 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfig(format!("T must be positive, got {}", self.horizon)));
        }
        MeanFieldConfig::from(self.meanfield).validate()?;
        self.build_model()?;
        self.build_graphon()?;
        match self.experiment {
            ExperimentKind::LlnKSweep | ExperimentKind::EmOrder => {
                let finest = *self.k.iter().max().unwrap();
                if self.k.iter().any(|k| !finest.is_multiple_of(*k)) {
                    return Err(Error::NonNested(self.k.clone()));
                }
            }
            _ => {}
        }
        match self.experiment {
            ExperimentKind::SgdDemo if self.model.name != "sgd_quadratic" => Err(Error::InvalidConfig(
                "sgd_demo needs the sgd_quadratic model".into(),
            )),
            ExperimentKind::EmOrder if self.model.name != "ou_scalar" => {
                Err(Error::InvalidConfig("em_order needs the ou_scalar model".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build_model(&self) -> Result<CoefficientModel> {
        presets::from_params(&self.model.name, &self.model.params)
    }

    pub fn build_graphon(&self) -> Result<Graphon> {
        graphon_from_config(&self.graphon.name, &self.graphon.params)
    }

    /// Largest entry of the `k` list.
    pub fn finest_k(&self) -> usize {
        *self.k.iter().max().expect("validated nonempty")
    }
}

pub const GRAPHON_NAMES: &[&str] = &["constant", "product", "min", "cosine"];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    c: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

/// `constant{c}`, `product` (pq), `min` (min(p,q)) or `cosine`
/// ((1+cos π|p−q|)/2).
pub fn graphon_from_config(name: &str, params: &Value) -> Result<Graphon> {
    let params = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    let bad = |e: serde_json::Error| Error::InvalidConfig(format!("graphon {name}: {e}"));
    match name {
        "constant" => {
            let p: ConstantParams = serde_json::from_value(params).map_err(bad)?;
            Graphon::constant(p.c)
        }
        "product" | "min" | "cosine" => {
            let _: NoParams = serde_json::from_value(params).map_err(bad)?;
            Ok(match name {
                "product" => Graphon::product(),
                "min" => Graphon::min(),
                _ => Graphon::cosine(),
            })
        }
        other => Err(Error::InvalidConfig(format!("unknown graphon {other:?}"))),
    }
}

/// One CSV row. `None` fields are written empty; a `None` replication is an
/// aggregate over replications and is written as `all`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub experiment: ExperimentKind,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub replication: Option<usize>,
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub wall_time_ms: f64,
    pub seed_lineage: String,
}

/// Metric name of rows recording a failed cell.
pub const DIVERGED: &str = "diverged";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub experiment: ExperimentKind,
    pub rows: Vec<SweepRow>,
    /// Number of cells run and how many of them failed.
    pub cells: usize,
    pub failed_cells: usize,
}

impl SweepResult {
    pub(crate) fn new(experiment: ExperimentKind) -> Self {
        SweepResult {
            experiment,
            rows: Vec::new(),
            cells: 0,
            failed_cells: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(
        &mut self,
        n: Option<usize>,
        k: Option<usize>,
        replication: Option<usize>,
        metric: impl Into<String>,
        value: f64,
        std_error: Option<f64>,
        wall_time_ms: f64,
        seed_lineage: impl Into<String>,
    ) {
        self.rows.push(SweepRow {
            experiment: self.experiment,
            n,
            k,
            replication,
            metric: metric.into(),
            value,
            std_error,
            wall_time_ms,
            seed_lineage: seed_lineage.into(),
        });
    }

    pub fn all_failed(&self) -> bool {
        self.cells > 0 && self.failed_cells == self.cells
    }

    /// First row matching the given cell coordinates and metric.
    pub fn find(&self, n: Option<usize>, k: Option<usize>, replication: Option<usize>, metric: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.k == k && r.replication == replication && r.metric == metric)
    }

    /// Aggregate `(value, std_error)` of a metric for one cell.
    pub fn aggregate(&self, n: Option<usize>, k: Option<usize>, metric: &str) -> Option<(f64, f64)> {
        self.find(n, k, None, metric)
            .map(|r| (r.value, r.std_error.unwrap_or(0.0)))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3},{}",
                r.experiment,
                opt(r.n),
                opt(r.k),
                r.replication.map_or("all".to_string(), |v| v.to_string()),
                r.metric,
                r.value,
                r.std_error.map_or(String::new(), |v| v.to_string()),
                r.wall_time_ms,
                r.seed_lineage
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than two
/// distinct abscissae or a non-positive value.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

pub(crate) fn millis(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs the configured experiment without touching the filesystem.
pub fn run(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::LlnNSweep => run_lln_n_sweep(cfg),
        ExperimentKind::LlnKSweep => run_lln_k_sweep(cfg),
        ExperimentKind::SgdDemo => run_sgd_demo(cfg),
        ExperimentKind::OtSelftest => run_ot_selftest(cfg),
        ExperimentKind::EmOrder => run_em_order(cfg),
    }
}

/// Runs the experiment and writes `result.csv`, `manifest.txt` and any
/// side artifacts into `cfg.out_dir`.
pub fn run_to_dir(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    write_manifest(cfg, std::fs::File::create(cfg.out_dir.join("manifest.txt"))?)?;
    let result = match cfg.experiment {
        ExperimentKind::LlnNSweep => sweeps::lln_n_sweep(cfg, Some(&cfg.out_dir)),
        _ => run(cfg),
    }?;
    let file = std::fs::File::create(cfg.out_dir.join("result.csv"))?;
    result.write_csv(std::io::BufWriter::new(file))?;
    Ok(result)
}

pub fn write_manifest<W: Write>(cfg: &ExperimentConfig, mut out: W) -> Result<()> {
    writeln!(out, "gmf {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(
        out,
        "backend {}",
        if cfg!(feature = "parallel") { "rayon" } else { "sequential" }
    )?;
    writeln!(out, "csv {CSV_HEADER}")?;
    writeln!(out, "config")?;
    writeln!(out, "{}", serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}
