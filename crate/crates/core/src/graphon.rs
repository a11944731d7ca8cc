//! Graphons, step graphons and the ∞→1 discrepancy between them.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{aux_stream, Domain};

/// Anything that can be evaluated as a coupling kernel on `[0,1]²`.
pub trait Kernel: Send + Sync {
    fn value(&self, p: f64, q: f64) -> f64;

    /// Number of blocks if the kernel is piecewise constant on a uniform grid.
    fn blocks(&self) -> Option<usize> {
        None
    }
}

type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A symmetric measurable kernel `[0,1]² → [0,1]`.
#[derive(Clone)]
pub struct Graphon {
    name: String,
    kernel: KernelFn,
}

impl fmt::Debug for Graphon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graphon").field("name", &self.name).finish()
    }
}

impl Graphon {
    pub fn from_fn<F>(name: impl Into<String>, kernel: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Graphon {
            name: name.into(),
            kernel: Arc::new(kernel),
        }
    }

    /// `A ≡ c`.
    pub fn constant(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::domain("constant graphon value", c, "[0,1]"));
        }
        Ok(Graphon::from_fn(format!("constant({c})"), move |_, _| c))
    }

    /// `A(p,q) = pq`.
    pub fn product() -> Self {
        Graphon::from_fn("product", |p, q| p * q)
    }

    /// `A(p,q) = min(p,q)`.
    pub fn min() -> Self {
        Graphon::from_fn("min", f64::min)
    }

    /// `A(p,q) = (1 + cos(π(p−q)))/2`.
    pub fn cosine() -> Self {
        Graphon::from_fn("cosine", |p, q| {
            0.5 * (1.0 + (std::f64::consts::PI * (p - q).abs()).cos())
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Probes symmetry (to 1e-12) and the `[0,1]` range on random points.
    pub fn check(&self, probes: usize, seed: u64) -> Result<()> {
        let mut rng = aux_stream(seed, Domain::Probe, &[0x6772]);
        for _ in 0..probes {
            let (p, q): (f64, f64) = (rng.gen(), rng.gen());
            let (a, b) = (self.value(p, q), self.value(q, p));
            if (a - b).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "graphon {} is not symmetric at ({p}, {q})",
                    self.name
                )));
            }
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::domain("graphon value", a, "[0,1]"));
            }
        }
        Ok(())
    }
}

impl Kernel for Graphon {
    fn value(&self, p: f64, q: f64) -> f64 {
        (self.kernel)(p, q)
    }
}

/// Piecewise-constant graphon on the cells `((i−1)/N, i/N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGraphon {
    n_blocks: usize,
    weights: Vec<f64>,
    /// Value at `(0,0)`; defaults to the first block.
    origin: f64,
}

/// 1-based cell index `⌈Np⌉` of a label, with `p = 0` mapped to cell 1.
///
/// The small offset keeps grid labels such as `3/10` (which round to
/// `3.0000000000000004` after scaling) in their own cell.
pub fn cell_index(p: f64, n: usize) -> usize {
    let scaled = p * n as f64;
    ((scaled - 1e-9).ceil() as usize).clamp(1, n)
}

impl StepGraphon {
    /// Builds a step graphon from a row-major `N×N` weight matrix.
    pub fn from_matrix(n_blocks: usize, weights: Vec<f64>) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::InvalidConfig("step graphon needs N >= 1".into()));
        }
        if weights.len() != n_blocks * n_blocks {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {n_blocks} blocks",
                weights.len()
            )));
        }
        for i in 0..n_blocks {
            for j in 0..n_blocks {
                let w = weights[i * n_blocks + j];
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::domain("step weight", w, "[0,1]"));
                }
                if w != weights[j * n_blocks + i] {
                    return Err(Error::InvalidConfig(format!(
                        "weights not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let origin = weights[0];
        Ok(StepGraphon {
            n_blocks,
            weights,
            origin,
        })
    }

    /// Constant-weight step graphon, used when the coupling is inactive.
    pub fn uniform(n_blocks: usize, w: f64) -> Result<Self> {
        StepGraphon::from_matrix(n_blocks, vec![w; n_blocks * n_blocks])
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// `a_{N,ij}` with 0-based indices.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_blocks + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_blocks..(i + 1) * self.n_blocks]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn evaluate(&self, p: f64, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("p", p, "[0,1]"));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain("q", q, "[0,1]"));
        }
        Ok(self.lookup(p, q))
    }

    fn lookup(&self, p: f64, q: f64) -> f64 {
        if p == 0.0 && q == 0.0 {
            return self.origin;
        }
        let n = self.n_blocks;
        self.weight(cell_index(p, n) - 1, cell_index(q, n) - 1)
    }

    /// The step graphon viewed as an ordinary graphon.
    pub fn to_graphon(&self) -> Graphon {
        let me = self.clone();
        Graphon::from_fn(format!("step({})", self.n_blocks), move |p, q| {
            me.lookup(p.clamp(0.0, 1.0), q.clamp(0.0, 1.0))
        })
    }

    /// Writes `i,j,weight` rows (1-based, row-major).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,weight")?;
        for i in 0..self.n_blocks {
            for j in 0..self.n_blocks {
                writeln!(out, "{},{},{}", i + 1, j + 1, self.weight(i, j))?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }
}

impl Kernel for StepGraphon {
    fn value(&self, p: f64, q: f64) -> f64 {
        self.lookup(p.clamp(0.0, 1.0), q.clamp(0.0, 1.0))
    }

    fn blocks(&self) -> Option<usize> {
        Some(self.n_blocks)
    }
}

/// `a_{N,ij} = A(i/N, j/N)`, with `A^N(0,0) = A(0,0)`.
pub fn discretize(graphon: &Graphon, n_blocks: usize) -> Result<StepGraphon> {
    if n_blocks == 0 {
        return Err(Error::InvalidConfig("n_blocks must be >= 1".into()));
    }
    let n = n_blocks;
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        let p = (i + 1) as f64 / n as f64;
        for j in i..n {
            let q = (j + 1) as f64 / n as f64;
            let w = graphon.value(p, q);
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
    }
    let mut step = StepGraphon::from_matrix(n, weights)?;
    step.origin = graphon.value(0.0, 0.0);
    Ok(step)
}

/// Largest grid size for which the ±1 maximization is done by enumeration.
const EXACT_LIMIT: usize = 16;

/// Estimate of `‖a − b‖_{∞→1}` on a `g×g` midpoint grid.
///
/// The grid-sampled difference `B` (scaled by the cell area `1/g²`) is
/// maximized over `yᵀBx` with `x, y ∈ {±1}^g`. Up to [`EXACT_LIMIT`] the
/// maximum is found by enumerating `x`; above it, alternating sign updates
/// from `restarts` starting points (the all-ones vector, then random ones)
/// give a lower bound.
pub fn infty_to_one_diff(
    a: &dyn Kernel,
    b: &dyn Kernel,
    grid_resolution: usize,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    let g = grid_resolution;
    let needed = a.blocks().unwrap_or(1).max(b.blocks().unwrap_or(1));
    if g < needed || g == 0 {
        return Err(Error::InvalidConfig(format!(
            "grid resolution {g} below block count {needed}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be >= 1".into()));
    }
    let area = 1.0 / (g * g) as f64;
    let mid = |u: usize| (u as f64 + 0.5) / g as f64;
    let mut diff = vec![0.0; g * g];
    for u in 0..g {
        for v in 0..g {
            diff[u * g + v] = (a.value(mid(u), mid(v)) - b.value(mid(u), mid(v))) * area;
        }
    }
    let best = if g <= EXACT_LIMIT {
        enumerate_signs(&diff, g)
    } else {
        alternate_signs(&diff, g, restarts, seed)
    };
    Ok(best.max(0.0))
}

/// `yᵀBx` for sign vectors.
pub fn bilinear(diff: &[f64], g: usize, x: &[f64], y: &[f64]) -> f64 {
    (0..g)
        .map(|u| y[u] * (0..g).map(|v| diff[u * g + v] * x[v]).sum::<f64>())
        .sum()
}

fn row_products(diff: &[f64], g: usize, x: &[f64]) -> Vec<f64> {
    (0..g)
        .map(|u| (0..g).map(|v| diff[u * g + v] * x[v]).sum())
        .collect()
}

fn enumerate_signs(diff: &[f64], g: usize) -> f64 {
    // x and −x give the same value, so fix x[0] = +1.
    let mut best = 0.0f64;
    let mut x = vec![1.0; g];
    for mask in 0u32..(1u32 << (g - 1)) {
        for (v, xv) in x.iter_mut().enumerate().skip(1) {
            *xv = if mask >> (v - 1) & 1 == 1 { -1.0 } else { 1.0 };
        }
        let value: f64 = row_products(diff, g, &x).iter().map(|r| r.abs()).sum();
        best = best.max(value);
    }
    best
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn alternate_signs(diff: &[f64], g: usize, restarts: usize, seed: u64) -> f64 {
    let mut rng = aux_stream(seed, Domain::Probe, &[0x3131, g as u64]);
    let mut best = f64::NEG_INFINITY;
    for r in 0..restarts {
        let mut x: Vec<f64> = if r == 0 {
            vec![1.0; g]
        } else {
            (0..g).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
        };
        let mut value = f64::NEG_INFINITY;
        for _ in 0..100 {
            let y: Vec<f64> = row_products(diff, g, &x).into_iter().map(sign).collect();
            x = (0..g)
                .map(|v| sign((0..g).map(|u| diff[u * g + v] * y[u]).sum()))
                .collect();
            let next = bilinear(diff, g, &x, &y);
            if next <= value {
                break;
            }
            value = next;
        }
        best = best.max(value);
    }
    best
}
