//! Picard iteration for the limiting graphon particle system on a label grid.
//!
//! The law `μ_{t,p}` of each grid node `p_a = (a − ½)/P` is represented by
//! `M` sample paths. Iteration 0 freezes every law at its initial value.
//! Iteration `r+1` re-simulates every node against the frozen laws of
//! iteration `r`, with the mean-field term
//! `∫A(p_a,q)∫F(t,p_a,q,z,y)μ_{t,q}(dz)dq` replaced by the midpoint rule over
//! the nodes and the sample average over each node's paths. All iterations
//! reuse the same initial states, exogenous paths and Brownian increments,
//! so the iteration is a deterministic map and its residuals carry no fresh
//! sampling noise.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graphon::{Graphon, Kernel};
use crate::model::CoefficientModel;
use crate::par;
use crate::rng::{aux_stream, Domain, Label};
use crate::simulator::{BrownianSource, SimConfig, TimeGrid};
use crate::transport::{wasserstein_p, EmpiricalMeasure, EmpiricalPathMeasure, Order};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldConfig {
    /// Number of label nodes `P`.
    pub grid_size: usize,
    /// Sample paths per node `M`.
    pub samples: usize,
    pub max_iters: usize,
    /// Stopping threshold on the largest time-`T` W₂ change between
    /// iterations. `None` selects `1e-3·(1 + spread)` where `spread` is the
    /// range of the initial node means.
    pub tol: Option<f64>,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        MeanFieldConfig {
            grid_size: 32,
            samples: 200,
            max_iters: 12,
            tol: None,
        }
    }
}

impl MeanFieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 {
            return Err(Error::InvalidConfig("label grid size must be >= 1".into()));
        }
        if self.samples < 2 {
            return Err(Error::InvalidConfig("need at least 2 samples per node".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return Err(Error::domain("picard tol", tol, "(0, ∞)"));
            }
        }
        Ok(())
    }
}

/// Node label `p_a` (0-based `a`).
pub fn node_label(a: usize, grid_size: usize) -> Label {
    Label::midpoint(a + 1, grid_size)
}

/// Per-node sample paths of the last Picard iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeanField {
    grid_size: usize,
    samples: usize,
    grid: TimeGrid,
    dim: usize,
    /// `[P][M][k+1][n]`
    paths: Vec<f64>,
    /// Largest node residual after each iteration (index 0 is iteration 1).
    pub residuals: Vec<f64>,
    /// Per-node residual of the final iteration.
    pub node_residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
}

impl GridMeanField {
    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> Vec<f64> {
        (0..self.grid_size).map(|a| node_label(a, self.grid_size).value()).collect()
    }

    fn path_len(&self) -> usize {
        (self.grid.steps + 1) * self.dim
    }

    /// Sample path `s` of node `a`, `[k+1][n]`.
    pub fn path(&self, a: usize, s: usize) -> &[f64] {
        let l = self.path_len();
        let idx = a * self.samples + s;
        &self.paths[idx * l..(idx + 1) * l]
    }

    /// Node `a`'s samples at grid time `m`.
    pub fn node_marginal_at(&self, a: usize, m: usize) -> EmpiricalMeasure {
        let n = self.dim;
        let points = (0..self.samples)
            .flat_map(|s| self.path(a, s)[m * n..(m + 1) * n].iter().copied())
            .collect();
        EmpiricalMeasure::new(n, points).expect("stored paths are finite")
    }

    /// Node `a`'s sample mean path, `[k+1][n]`.
    pub fn node_mean_path(&self, a: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.path_len()];
        for s in 0..self.samples {
            for (acc, v) in mean.iter_mut().zip(self.path(a, s)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= self.samples as f64);
        mean
    }

    /// Nearest node to label `p`, ties toward the smaller label.
    pub fn nearest_node(&self, p: f64) -> usize {
        let x = p * self.grid_size as f64 - 0.5;
        let lo = x.floor();
        let a = if x - lo <= 0.5 { lo } else { lo + 1.0 };
        (a.max(0.0) as usize).min(self.grid_size - 1)
    }

    /// Empirical `μ_{t,p}` at the nearest node. `t` must be a grid time.
    pub fn node_marginal(&self, p: f64, t: f64) -> Result<EmpiricalMeasure> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("p", p, "[0,1]"));
        }
        let m = self.grid.index_of(t)?;
        Ok(self.node_marginal_at(self.nearest_node(p), m))
    }

    /// `count` paths drawn from `∫μ_p dp`: a node uniformly, then one of its
    /// samples uniformly, with replacement.
    pub fn sample_mixture(&self, count: usize, seed: u64) -> Result<EmpiricalPathMeasure> {
        if count == 0 {
            return Err(Error::Empty);
        }
        let mut rng = aux_stream(seed, Domain::Resample, &[0x6d69_7874]);
        let mut paths = Vec::with_capacity(count * self.path_len());
        for _ in 0..count {
            let a = rng.gen_range(0..self.grid_size);
            let s = rng.gen_range(0..self.samples);
            paths.extend_from_slice(self.path(a, s));
        }
        EmpiricalPathMeasure::new(count, self.grid, self.dim, paths)
    }

    /// The stored laws frozen for integrating single paths against them.
    pub fn frozen<'a>(&'a self, model: &'a CoefficientModel) -> Result<FrozenLaw<'a>> {
        if model.dim() != self.dim {
            return Err(Error::DimensionMismatch("model vs mean field".into()));
        }
        Ok(FrozenLaw {
            field: FrozenField::new(model, self.grid, self.grid_size, self.samples, &self.paths),
        })
    }

    /// Path at label `p` of the decoupled equation driven by the frozen
    /// laws stored here. See [`FrozenLaw::tagged_path`].
    pub fn tagged_path(
        &self,
        model: &CoefficientModel,
        graphon: &Graphon,
        p: f64,
        init: &[f64],
        eta: &[f64],
        noise: &[f64],
    ) -> Result<Vec<f64>> {
        self.frozen(model)?.tagged_path(graphon, p, init, eta, noise)
    }

    /// Per-node CSV of time-`T` samples: `node,label,sample,component,value`.
    pub fn write_marginals_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "node,label,sample,component,value")?;
        let labels = self.labels();
        for a in 0..self.grid_size {
            let marginal = self.node_marginal_at(a, self.grid.steps);
            for s in 0..self.samples {
                for (c, v) in marginal.point(s).iter().enumerate() {
                    writeln!(out, "{},{},{},{},{v}", a + 1, labels[a], s + 1, c + 1)?;
                }
            }
        }
        Ok(())
    }

    /// Summary CSV: `node,iterations,residual`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "node,iterations,residual")?;
        for (a, r) in self.node_residuals.iter().enumerate() {
            writeln!(out, "{},{},{r}", a + 1, self.iterations)?;
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<std::io::BufWriter<std::fs::File>> {
            Ok(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
        };
        self.write_marginals_csv(open("meanfield_marginals.csv")?)?;
        self.write_summary_csv(open("meanfield_summary.csv")?)
    }
}

/// Mean-field laws held fixed, ready to drive single paths.
pub struct FrozenLaw<'a> {
    field: FrozenField<'a>,
}

impl FrozenLaw<'_> {
    /// Path at label `p` using the given initial state, exogenous values
    /// (`[k+1][n]`, empty for zero) and Brownian increments (`[k][n]`, empty
    /// when the model has no diffusion).
    pub fn tagged_path(&self, graphon: &Graphon, p: f64, init: &[f64], eta: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        let f = &self.field;
        let len = (f.grid.steps + 1) * f.model.dim();
        let row: Vec<f64> = (0..f.nodes)
            .map(|b| graphon.value(p, node_label(b, f.nodes).value()))
            .collect();
        let mut out = vec![0.0; len];
        let zeros;
        let eta = if eta.is_empty() {
            zeros = vec![0.0; len];
            &zeros[..]
        } else {
            eta
        };
        f.drive(p, &row, init, eta, noise, &mut out)
            .map_err(|step| Error::Diverged { step, particle: 0 })?;
        Ok(out)
    }
}

/// Frozen previous-iteration laws plus everything needed to integrate one
/// path against them.
struct FrozenField<'a> {
    model: &'a CoefficientModel,
    grid: TimeGrid,
    nodes: usize,
    samples: usize,
    /// `[P][M][k+1][n]`
    paths: &'a [f64],
    /// Node-averaged separable features `[k][P][terms·n]`, when available.
    features: Option<Vec<f64>>,
}

impl<'a> FrozenField<'a> {
    fn new(model: &'a CoefficientModel, grid: TimeGrid, nodes: usize, samples: usize, paths: &'a [f64]) -> Self {
        let features = model.separable().filter(|_| model.has_interaction()).map(|sep| {
            let n = model.dim();
            let width = sep.terms * n;
            let path_len = (grid.steps + 1) * n;
            let mut table = vec![0.0; grid.steps * nodes * width];
            par::for_each_chunk(&mut table, nodes * width, |m, slab| {
                let t = grid.time(m);
                let mut psi = vec![0.0; width];
                for b in 0..nodes {
                    let q = node_label(b, nodes).value();
                    let acc = &mut slab[b * width..(b + 1) * width];
                    for s in 0..samples {
                        let idx = b * samples + s;
                        let z = &paths[idx * path_len + m * n..idx * path_len + (m + 1) * n];
                        (sep.feature)(t, q, z, &mut psi);
                        for (a, v) in acc.iter_mut().zip(&psi) {
                            *a += v;
                        }
                    }
                    acc.iter_mut().for_each(|v| *v /= samples as f64);
                }
            });
            table
        });
        FrozenField {
            model,
            grid,
            nodes,
            samples,
            paths,
            features,
        }
    }

    /// `∫A(p,q)∫F(t,p,q,z,y)μ_{t_m,q}(dz)dq` by node quadrature.
    fn mean_field(&self, m: usize, p: f64, row: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.model.dim();
        out.fill(0.0);
        if !self.model.has_interaction() {
            return;
        }
        let t = self.grid.time(m);
        let inv_nodes = 1.0 / self.nodes as f64;
        match (&self.features, self.model.separable()) {
            (Some(table), Some(sep)) => {
                let width = sep.terms * n;
                let mut phi = vec![0.0; width];
                for (b, &a) in row.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let q = node_label(b, self.nodes).value();
                    (sep.coeff)(t, p, q, y, &mut phi);
                    let psi = &table[(m * self.nodes + b) * width..(m * self.nodes + b + 1) * width];
                    for c in 0..n {
                        let v: f64 = (0..sep.terms).map(|r| phi[r * n + c] * psi[r * n + c]).sum();
                        out[c] += a * v;
                    }
                }
            }
            _ => {
                let path_len = (self.grid.steps + 1) * n;
                let inv_samples = 1.0 / self.samples as f64;
                let mut f = vec![0.0; n];
                let mut node_acc = vec![0.0; n];
                for (b, &a) in row.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let q = node_label(b, self.nodes).value();
                    node_acc.fill(0.0);
                    for s in 0..self.samples {
                        let idx = b * self.samples + s;
                        let z = &self.paths[idx * path_len + m * n..idx * path_len + (m + 1) * n];
                        self.model.interaction_into(t, p, q, z, y, &mut f);
                        for c in 0..n {
                            node_acc[c] += f[c];
                        }
                    }
                    for c in 0..n {
                        out[c] += a * (node_acc[c] * inv_samples);
                    }
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= inv_nodes);
    }

    /// Integrates one path; on a non-finite state returns the step index.
    fn drive(
        &self,
        p: f64,
        row: &[f64],
        init: &[f64],
        eta: &[f64],
        noise: &[f64],
        out: &mut [f64],
    ) -> std::result::Result<(), usize> {
        let n = self.model.dim();
        let dt = self.grid.dt();
        let diffuse = self.model.has_diffusion();
        out[..n].copy_from_slice(init);
        let mut mf = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        for m in 0..self.grid.steps {
            let t = self.grid.time(m);
            let (done, rest) = out.split_at_mut((m + 1) * n);
            let y = &done[m * n..];
            let eta_m = &eta[m * n..(m + 1) * n];
            self.mean_field(m, p, row, y, &mut mf);
            self.model.drift_into(t, p, eta_m, y, &mut g);
            let next = &mut rest[..n];
            for c in 0..n {
                next[c] = y[c] + dt * (g[c] + mf[c]);
            }
            if diffuse {
                self.model.diffusion_into(t, p, eta_m, y, &mut h);
                let dw = &noise[m * n..(m + 1) * n];
                for r in 0..n {
                    next[r] += (0..n).map(|c| h[r * n + c] * dw[c]).sum::<f64>();
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(m);
            }
        }
        Ok(())
    }
}

/// Fixed drivers of every `(node, sample)` path, shared by all iterations.
struct NodeDrivers {
    init: Vec<f64>,
    eta: Vec<f64>,
    noise: Vec<f64>,
}

fn node_drivers(model: &CoefficientModel, grid: TimeGrid, nodes: usize, samples: usize, seed: u64) -> NodeDrivers {
    let n = model.dim();
    let brownian = BrownianSource::new(seed, n);
    let per: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = par::map_range(nodes * samples, |idx| {
        let (a, s) = (idx / samples, (idx % samples) as u64);
        let label = node_label(a, nodes);
        let mut z0 = vec![0.0; n];
        model.initial().sample_into(seed, label, s, &mut z0);
        let eta = if model.exogenous().is_zero() {
            vec![0.0; (grid.steps + 1) * n]
        } else {
            model.exogenous().sample_grid(seed, label, s, grid.steps, grid.horizon, n)
        };
        let noise = if model.has_diffusion() {
            brownian.increments(label, s, grid)
        } else {
            Vec::new()
        };
        (z0, eta, noise)
    });
    let mut d = NodeDrivers {
        init: Vec::new(),
        eta: Vec::new(),
        noise: Vec::new(),
    };
    for (z0, eta, noise) in per {
        d.init.extend(z0);
        d.eta.extend(eta);
        d.noise.extend(noise);
    }
    d
}

fn node_w2(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    let mu = EmpiricalMeasure::new(dim, a.to_vec())?;
    let nu = EmpiricalMeasure::new(dim, b.to_vec())?;
    wasserstein_p(&mu, &nu, Order::Two)
}

/// Runs the Picard iteration on `P` label nodes. Uses `sim.horizon`,
/// `sim.steps`, `sim.dim` and `sim.seed`; `sim.particles` is ignored.
pub fn picard_solve(
    mf: &MeanFieldConfig,
    sim: &SimConfig,
    model: &CoefficientModel,
    graphon: &Graphon,
) -> Result<GridMeanField> {
    mf.validate()?;
    let grid = TimeGrid::new(sim.horizon, sim.steps)?;
    let n = model.dim();
    if n != sim.dim {
        return Err(Error::DimensionMismatch(format!(
            "model dimension {n} vs config {}",
            sim.dim
        )));
    }
    let (nodes, samples) = (mf.grid_size, mf.samples);
    let path_len = (grid.steps + 1) * n;
    let drivers = node_drivers(model, grid, nodes, samples, sim.seed);

    let tol = mf.tol.unwrap_or_else(|| {
        let means: Vec<Vec<f64>> = (0..nodes)
            .map(|a| model.initial().mean(node_label(a, nodes).value()))
            .collect();
        let spread = (0..n)
            .map(|c| {
                let lo = means.iter().map(|m| m[c]).fold(f64::INFINITY, f64::min);
                let hi = means.iter().map(|m| m[c]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max);
        1e-3 * (1.0 + spread)
    });

    // Iteration 0: constant-in-time paths at the initial states.
    let mut prev = vec![0.0; nodes * samples * path_len];
    for (idx, path) in prev.chunks_mut(path_len).enumerate() {
        let z0 = &drivers.init[idx * n..(idx + 1) * n];
        for point in path.chunks_mut(n) {
            point.copy_from_slice(z0);
        }
    }

    let rows: Vec<Vec<f64>> = (0..nodes)
        .map(|a| {
            let p = node_label(a, nodes).value();
            (0..nodes).map(|b| graphon.value(p, node_label(b, nodes).value())).collect()
        })
        .collect();

    let mut residuals = Vec::new();
    let mut node_residuals = vec![f64::INFINITY; nodes];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < mf.max_iters {
        iterations += 1;
        let mut next = vec![0.0; prev.len()];
        {
            let field = FrozenField::new(model, grid, nodes, samples, &prev);
            par::for_each_chunk(&mut next, path_len, |idx, out| {
                let a = idx / samples;
                let p = node_label(a, nodes).value();
                let noise = if drivers.noise.is_empty() {
                    &[][..]
                } else {
                    &drivers.noise[idx * grid.steps * n..(idx + 1) * grid.steps * n]
                };
                let eta = &drivers.eta[idx * path_len..(idx + 1) * path_len];
                let init = &drivers.init[idx * n..(idx + 1) * n];
                if field.drive(p, &rows[a], init, eta, noise, out).is_err() {
                    out.fill(f64::NAN);
                }
            });
        }
        if let Some(pos) = next.iter().position(|v| !v.is_finite()) {
            let path = pos / path_len;
            let step = (pos % path_len) / n;
            return Err(Error::Diverged {
                step: step.saturating_sub(1),
                particle: path,
            });
        }
        let last = grid.steps * n;
        let terminal = |buf: &[f64], a: usize| -> Vec<f64> {
            (0..samples)
                .flat_map(|s| {
                    let idx = a * samples + s;
                    buf[idx * path_len + last..idx * path_len + last + n].to_vec()
                })
                .collect()
        };
        node_residuals = (0..nodes)
            .map(|a| node_w2(&terminal(&next, a), &terminal(&prev, a), n))
            .collect::<Result<Vec<f64>>>()?;
        let worst = node_residuals.iter().copied().fold(0.0, f64::max);
        residuals.push(worst);
        prev = next;
        if worst <= tol {
            converged = true;
            break;
        }
    }

    Ok(GridMeanField {
        grid_size: nodes,
        samples,
        grid,
        dim: n,
        paths: prev,
        residuals,
        node_residuals,
        iterations,
        converged,
        tol,
    })
}
