//! Euler-Maruyama integration of the N-particle system on a step graphon.
//!
//! Particle `i` (1-based) carries label `i/N`; its initial state, exogenous
//! path and Brownian increments are read from streams keyed by that label
//! (see [`crate::rng`]), so systems of different size share noise wherever
//! labels coincide.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graphon::{cell_index, discretize, Graphon, StepGraphon};
use crate::model::CoefficientModel;
use crate::par;
use crate::rng::{stream, Domain, Label};
use crate::transport::EmpiricalPathMeasure;

/// Uniform grid `t_m = mT/k`, `m = 0..=k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::domain("horizon", horizon, "(0, ∞)"));
        }
        if steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        self.horizon * m as f64 / self.steps as f64
    }

    /// Grid index of `t`, if `t` is a grid time (to 1e-9 relative to `dt`).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt();
        let m = x.round();
        if (x - m).abs() > 1e-9 || m < 0.0 || m > self.steps as f64 {
            return Err(Error::OffGrid(t));
        }
        Ok(m as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub steps: usize,
    pub particles: usize,
    pub dim: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<TimeGrid> {
        if self.particles == 0 {
            return Err(Error::InvalidConfig("particles must be >= 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            horizon: self.horizon,
            steps: self.steps,
        }
    }
}

/// Label `i/N` of 0-based particle `i`.
pub fn particle_label(i: usize, particles: usize) -> Label {
    Label::right_endpoint(i + 1, particles)
}

/// Brownian increments read from label-keyed streams.
#[derive(Debug, Clone, Copy)]
pub struct BrownianSource {
    pub seed: u64,
    pub dim: usize,
}

impl BrownianSource {
    pub fn new(seed: u64, dim: usize) -> Self {
        BrownianSource { seed, dim }
    }

    /// Increments `w(t_{m+1}) − w(t_m)` on `grid`, flattened `[steps][dim]`.
    pub fn increments(&self, label: Label, sample: u64, grid: TimeGrid) -> Vec<f64> {
        let mut rng = stream(self.seed, label, sample, Domain::Brownian);
        let sd = grid.dt().sqrt();
        (0..grid.steps * self.dim)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Sums consecutive groups of `factor` increments.
    ///
    /// For power-of-two factors the sums are formed by repeated pairwise
    /// halving, so coarsening by 2 twice gives bitwise the same result as
    /// coarsening by 4, and every level equals the pairwise sum of the level
    /// below it.
    pub fn coarsen(fine: &[f64], dim: usize, factor: usize) -> Result<Vec<f64>> {
        let steps = fine.len() / dim;
        if factor == 0 || !steps.is_multiple_of(factor) || !fine.len().is_multiple_of(dim) {
            return Err(Error::InvalidConfig(format!(
                "cannot coarsen {steps} steps by {factor}"
            )));
        }
        if factor.is_power_of_two() {
            let mut level = fine.to_vec();
            let mut f = factor;
            while f > 1 {
                let half = level.len() / dim / 2;
                let mut next = vec![0.0; half * dim];
                for m in 0..half {
                    for c in 0..dim {
                        next[m * dim + c] = level[2 * m * dim + c] + level[(2 * m + 1) * dim + c];
                    }
                }
                level = next;
                f /= 2;
            }
            return Ok(level);
        }
        let coarse = steps / factor;
        let mut out = vec![0.0; coarse * dim];
        for m in 0..coarse {
            for s in 0..factor {
                for c in 0..dim {
                    out[m * dim + c] += fine[(m * factor + s) * dim + c];
                }
            }
        }
        Ok(out)
    }
}

/// Trajectories of all particles, `states[m][i][c]` flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub config: SimConfig,
    states: Vec<f64>,
    eta: Option<Vec<f64>>,
}

impl ParticleEnsemble {
    pub fn from_states(config: SimConfig, states: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if states.len() != (config.steps + 1) * config.particles * config.dim {
            return Err(Error::DimensionMismatch("state array does not match config".into()));
        }
        Ok(ParticleEnsemble {
            config,
            states,
            eta: None,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.config.grid()
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Exogenous values at grid times, when the model has a non-zero `η`.
    pub fn eta_trace(&self) -> Option<&[f64]> {
        self.eta.as_deref()
    }

    /// All particle states at grid time `m`, `[N][n]`.
    pub fn at(&self, m: usize) -> &[f64] {
        let w = self.config.particles * self.config.dim;
        &self.states[m * w..(m + 1) * w]
    }

    pub fn state(&self, m: usize, i: usize) -> &[f64] {
        let n = self.config.dim;
        &self.at(m)[i * n..(i + 1) * n]
    }

    /// Path of particle `i`, `[k+1][n]`.
    pub fn path(&self, i: usize) -> Vec<f64> {
        (0..=self.config.steps)
            .flat_map(|m| self.state(m, i).iter().copied())
            .collect()
    }

    /// Uniform empirical measure over the particle paths.
    pub fn path_measure(&self) -> EmpiricalPathMeasure {
        let paths = (0..self.config.particles).flat_map(|i| self.path(i)).collect();
        EmpiricalPathMeasure::new(self.config.particles, self.grid(), self.config.dim, paths)
            .expect("ensemble paths are consistent")
    }

    /// Particle mean at grid time `m`.
    pub fn mean(&self, m: usize) -> Vec<f64> {
        let (big_n, n) = (self.config.particles, self.config.dim);
        let mut mean = vec![0.0; n];
        for i in 0..big_n {
            for (c, v) in self.state(m, i).iter().enumerate() {
                mean[c] += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= big_n as f64);
        mean
    }

    /// `(Σ_i ‖z_i − z̄‖²)^{1/2}` at grid time `m`.
    pub fn disagreement(&self, m: usize) -> f64 {
        let mean = self.mean(m);
        (0..self.config.particles)
            .map(|i| {
                self.state(m, i)
                    .iter()
                    .zip(&mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `ẑ_p(t)`: particle `⌈Np⌉`, linear in time between grid values.
    pub fn interpolate(&self, t: f64, p: f64) -> Result<Vec<f64>> {
        let grid = self.grid();
        if !(0.0..=grid.horizon).contains(&t) {
            return Err(Error::domain("t", t, "[0, T]"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("p", p, "[0,1]"));
        }
        let i = cell_index(p, self.config.particles) - 1;
        let x = t / grid.dt();
        let m = (x.floor() as usize).min(grid.steps);
        if m == grid.steps {
            return Ok(self.state(m, i).to_vec());
        }
        let frac = x - m as f64;
        Ok(self
            .state(m, i)
            .iter()
            .zip(self.state(m + 1, i))
            .map(|(a, b)| a + frac * (b - a))
            .collect())
    }

    /// CSV with columns `t,particle,component,value` (1-based indices).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,particle,component,value")?;
        let grid = self.grid();
        for m in 0..=grid.steps {
            let t = grid.time(m);
            for i in 0..self.config.particles {
                for (c, v) in self.state(m, i).iter().enumerate() {
                    writeln!(out, "{t},{},{},{v}", i + 1, c + 1)?;
                }
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Binary snapshot: 32-byte header (`GMFSNAP1`, N, k, n as u32, a zero
    /// u32, T as f64), then the states as little-endian f64.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        for v in [self.config.particles, self.config.steps, self.config.dim, 0] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        out.write_all(&self.config.horizon.to_le_bytes())?;
        for v in &self.states {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a snapshot. The seed is not stored and comes back as 0.
    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 32];
        input.read_exact(&mut header)?;
        if &header[..8] != SNAPSHOT_MAGIC {
            return Err(Error::InvalidConfig("not a snapshot file".into()));
        }
        let word = |k: usize| u32::from_le_bytes(header[8 + 4 * k..12 + 4 * k].try_into().unwrap()) as usize;
        let horizon = f64::from_le_bytes(header[24..32].try_into().unwrap());
        let config = SimConfig {
            horizon,
            steps: word(1),
            particles: word(0),
            dim: word(2),
            seed: 0,
        };
        let len = (config.steps + 1) * config.particles * config.dim;
        let mut bytes = vec![0u8; len * 8];
        input.read_exact(&mut bytes)?;
        let states = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        ParticleEnsemble::from_states(config, states)
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"GMFSNAP1";

/// One explicit Euler-Maruyama step for all particles.
///
/// `states`, `noise` and `eta` are `[N][n]`. Every coefficient is evaluated
/// at `t` and the current states:
/// `z_i + dt·[G(t, i/N, η_i, z_i) + (1/N)Σ_j a_ij F(t, i/N, j/N, z_j, z_i)] + H(t, i/N, η_i, z_i)Δw_i`.
#[allow(clippy::too_many_arguments)]
pub fn em_step(
    step: usize,
    t: f64,
    dt: f64,
    states: &[f64],
    model: &CoefficientModel,
    weights: &StepGraphon,
    noise: &[f64],
    eta: &[f64],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; states.len()];
    em_step_into(step, t, dt, states, model, weights, noise, eta, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn em_step_into(
    step: usize,
    t: f64,
    dt: f64,
    states: &[f64],
    model: &CoefficientModel,
    weights: &StepGraphon,
    noise: &[f64],
    eta: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let n = model.dim();
    let big_n = weights.n_blocks();
    if !(dt > 0.0) {
        return Err(Error::domain("dt", dt, "(0, ∞)"));
    }
    if states.len() != big_n * n || noise.len() != states.len() || eta.len() != states.len() {
        return Err(Error::DimensionMismatch(format!(
            "step inputs for {big_n} particles of dimension {n}"
        )));
    }
    let inv_n = 1.0 / big_n as f64;
    let coupled = model.has_interaction();
    let diffuse = model.has_diffusion();
    par::for_each_chunk(out, n, |i, next| {
        let p = (i + 1) as f64 * inv_n;
        let y = &states[i * n..(i + 1) * n];
        let eta_i = &eta[i * n..(i + 1) * n];
        let mut acc = vec![0.0; n];
        if coupled {
            let mut f = vec![0.0; n];
            for (j, &a) in weights.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let q = (j + 1) as f64 * inv_n;
                model.interaction_into(t, p, q, &states[j * n..(j + 1) * n], y, &mut f);
                for c in 0..n {
                    acc[c] += a * f[c];
                }
            }
        }
        let mut g = vec![0.0; n];
        model.drift_into(t, p, eta_i, y, &mut g);
        for c in 0..n {
            next[c] = y[c] + dt * (g[c] + acc[c] * inv_n);
        }
        if diffuse {
            let mut h = vec![0.0; n * n];
            model.diffusion_into(t, p, eta_i, y, &mut h);
            let dw = &noise[i * n..(i + 1) * n];
            for r in 0..n {
                next[r] += (0..n).map(|c| h[r * n + c] * dw[c]).sum::<f64>();
            }
        }
    });
    if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            step,
            particle: pos / n,
        });
    }
    Ok(())
}

/// Initial states, Brownian increments and exogenous values of a run.
struct Drivers {
    init: Vec<f64>,
    /// `[k][N][n]`
    noise: Vec<f64>,
    /// `[k+1][N][n]`, `None` for the zero process.
    eta: Option<Vec<f64>>,
}

/// Per-particle drivers on the finest grid, `[N][…]`.
struct FineDrivers {
    init: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
}

/// Initial state, Brownian increments (`[k][n]`, empty without diffusion)
/// and exogenous values (`[k+1][n]`, empty for the zero process) of one
/// particle. Keyed only by `seed` and the particle's label, so a particle at
/// the same label sees the same drivers in every system it appears in.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleDrivers {
    pub init: Vec<f64>,
    pub noise: Vec<f64>,
    pub eta: Vec<f64>,
}

pub fn particle_drivers(seed: u64, model: &CoefficientModel, label: Label, grid: TimeGrid) -> ParticleDrivers {
    let n = model.dim();
    let mut init = vec![0.0; n];
    model.initial().sample_into(seed, label, 0, &mut init);
    let noise = if model.has_diffusion() {
        BrownianSource::new(seed, n).increments(label, 0, grid)
    } else {
        Vec::new()
    };
    let eta = if model.exogenous().is_zero() {
        Vec::new()
    } else {
        model.exogenous().sample_grid(seed, label, 0, grid.steps, grid.horizon, n)
    };
    ParticleDrivers { init, noise, eta }
}

fn fine_drivers(seed: u64, model: &CoefficientModel, particles: usize, fine: TimeGrid) -> FineDrivers {
    let per: Vec<ParticleDrivers> =
        par::map_range(particles, |i| particle_drivers(seed, model, particle_label(i, particles), fine));
    let mut out = FineDrivers {
        init: Vec::with_capacity(particles),
        noise: Vec::with_capacity(particles),
        eta: Vec::with_capacity(particles),
    };
    for d in per {
        out.init.push(d.init);
        out.noise.push(d.noise);
        out.eta.push(d.eta);
    }
    out
}

fn coarse_drivers(fine: &FineDrivers, n: usize, steps: usize, factor: usize) -> Result<Drivers> {
    let particles = fine.init.len();
    let init = fine.init.concat();
    let mut noise = vec![0.0; steps * particles * n];
    for (i, w) in fine.noise.iter().enumerate() {
        if w.is_empty() {
            break;
        }
        let coarse = BrownianSource::coarsen(w, n, factor)?;
        for m in 0..steps {
            noise[(m * particles + i) * n..(m * particles + i + 1) * n]
                .copy_from_slice(&coarse[m * n..(m + 1) * n]);
        }
    }
    let eta = if fine.eta.first().is_none_or(|e| e.is_empty()) {
        None
    } else {
        let mut eta = vec![0.0; (steps + 1) * particles * n];
        for (i, e) in fine.eta.iter().enumerate() {
            for m in 0..=steps {
                let src = m * factor;
                eta[(m * particles + i) * n..(m * particles + i + 1) * n]
                    .copy_from_slice(&e[src * n..(src + 1) * n]);
            }
        }
        Some(eta)
    };
    Ok(Drivers { init, noise, eta })
}

fn integrate(
    config: SimConfig,
    model: &CoefficientModel,
    weights: &StepGraphon,
    drivers: Drivers,
) -> Result<ParticleEnsemble> {
    let grid = config.grid();
    let (big_n, n) = (config.particles, config.dim);
    let width = big_n * n;
    let mut states = vec![0.0; (grid.steps + 1) * width];
    states[..width].copy_from_slice(&drivers.init);
    let zeros = vec![0.0; width];
    let dt = grid.dt();
    for m in 0..grid.steps {
        let (done, rest) = states.split_at_mut((m + 1) * width);
        let current = &done[m * width..];
        let noise = if model.has_diffusion() {
            &drivers.noise[m * width..(m + 1) * width]
        } else {
            &zeros[..]
        };
        let eta = match &drivers.eta {
            Some(e) => &e[m * width..(m + 1) * width],
            None => &zeros[..],
        };
        em_step_into(m, grid.time(m), dt, current, model, weights, noise, eta, &mut rest[..width])?;
    }
    Ok(ParticleEnsemble {
        config,
        states,
        eta: drivers.eta,
    })
}

fn check_model(config: &SimConfig, model: &CoefficientModel) -> Result<TimeGrid> {
    let grid = config.validate()?;
    if model.dim() != config.dim {
        return Err(Error::DimensionMismatch(format!(
            "model dimension {} vs config {}",
            model.dim(),
            config.dim
        )));
    }
    Ok(grid)
}

/// Simulates the N-particle system on `discretize(graphon, N)`.
pub fn simulate(config: &SimConfig, model: &CoefficientModel, graphon: &Graphon) -> Result<ParticleEnsemble> {
    check_model(config, model)?;
    let weights = discretize(graphon, config.particles)?;
    simulate_on(config, model, &weights)
}

/// Simulates on an explicit step graphon with `N` blocks.
pub fn simulate_on(config: &SimConfig, model: &CoefficientModel, weights: &StepGraphon) -> Result<ParticleEnsemble> {
    let grid = check_model(config, model)?;
    if weights.n_blocks() != config.particles {
        return Err(Error::DimensionMismatch(format!(
            "{} blocks for {} particles",
            weights.n_blocks(),
            config.particles
        )));
    }
    let fine = fine_drivers(config.seed, model, config.particles, grid);
    let drivers = coarse_drivers(&fine, config.dim, grid.steps, 1)?;
    integrate(*config, model, weights, drivers)
}

/// Simulates the same system at every step count in `k_list`, driven by one
/// set of Brownian paths drawn at the finest resolution. Returned in the
/// order of `k_list`; `config.steps` is ignored.
pub fn refine_coupled(
    config: &SimConfig,
    model: &CoefficientModel,
    graphon: &Graphon,
    k_list: &[usize],
) -> Result<Vec<ParticleEnsemble>> {
    let finest = *k_list.iter().max().ok_or_else(|| Error::NonNested(vec![]))?;
    if k_list.iter().any(|&k| k == 0 || finest % k != 0) {
        return Err(Error::NonNested(k_list.to_vec()));
    }
    let fine_config = SimConfig {
        steps: finest,
        ..*config
    };
    let grid = check_model(&fine_config, model)?;
    let weights = discretize(graphon, config.particles)?;
    let fine = fine_drivers(config.seed, model, config.particles, grid);
    k_list
        .iter()
        .map(|&k| {
            let drivers = coarse_drivers(&fine, config.dim, k, finest / k)?;
            integrate(SimConfig { steps: k, ..*config }, model, &weights, drivers)
        })
        .collect()
}
