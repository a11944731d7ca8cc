//! Transport oracle harness and Euler–Maruyama order check.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::sweeps::push_slopes;
use super::{millis, ExperimentConfig, ExperimentKind, SweepResult, DIVERGED};
use crate::error::{Error, Result};
use crate::graphon::Graphon;
use crate::model::presets;
use crate::par;
use crate::rng::{aux_stream, replication_seed, stream, Domain};
use crate::simulator::{particle_drivers, particle_label, refine_coupled, SimConfig, TimeGrid};
use crate::transport::{
    brute_force_ot, brute_force_path, mean_and_se, sup_norm_dist, wasserstein_p, wasserstein_p_assignment,
    wasserstein_path, EmpiricalMeasure, EmpiricalPathMeasure, Order,
};

pub const ORACLE_INSTANCES: usize = 200;
pub const AXIOM_PAIRS: usize = 100;
pub const DIRAC_PAIRS: usize = 50;

/// Outcome of the transport self-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestCounts {
    pub oracle_matches: usize,
    pub oracle_instances: usize,
    pub oracle_max_diff: f64,
    pub symmetry_max_diff: f64,
    pub triangle_passes: usize,
    pub lyapunov_passes: usize,
    pub dirac_passes: usize,
}

impl SelftestCounts {
    pub fn failures(&self) -> usize {
        (self.oracle_instances - self.oracle_matches)
            + usize::from(self.symmetry_max_diff != 0.0)
            + (AXIOM_PAIRS - self.triangle_passes)
            + (AXIOM_PAIRS - self.lyapunov_passes)
            + (DIRAC_PAIRS - self.dirac_passes)
    }
}

fn gaussians(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_measure(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> EmpiricalMeasure {
    EmpiricalMeasure::new(dim, gaussians(rng, m * dim)).expect("finite")
}

/// Random-walk paths so that the sup over times is attained at varying
/// grid points.
fn random_paths(rng: &mut ChaCha8Rng, m: usize, grid: TimeGrid, dim: usize) -> EmpiricalPathMeasure {
    let len = (grid.steps + 1) * dim;
    let mut paths = Vec::with_capacity(m * len);
    for _ in 0..m {
        let mut x = gaussians(rng, dim);
        paths.extend_from_slice(&x);
        for _ in 0..grid.steps {
            for v in x.iter_mut() {
                *v += rng.sample::<f64, _>(StandardNormal);
            }
            paths.extend_from_slice(&x);
        }
    }
    EmpiricalPathMeasure::new(m, grid, dim, paths).expect("consistent")
}

fn order_of(i: usize) -> Order {
    if i.is_multiple_of(2) {
        Order::One
    } else {
        Order::Two
    }
}

/// Runs the oracle-equivalence and metric-axiom checks on instances drawn
/// from `seed`.
pub fn selftest_counts(seed: u64) -> Result<SelftestCounts> {
    let mut out = SelftestCounts {
        oracle_matches: 0,
        oracle_instances: ORACLE_INSTANCES,
        oracle_max_diff: 0.0,
        symmetry_max_diff: 0.0,
        triangle_passes: 0,
        lyapunov_passes: 0,
        dirac_passes: 0,
    };
    for inst in 0..ORACLE_INSTANCES {
        let mut rng = aux_stream(seed, Domain::Probe, &[1, inst as u64]);
        let m = rng.gen_range(1..=5);
        let dim = rng.gen_range(1..=3);
        let order = order_of(inst / 2);
        let gap = if inst % 2 == 0 {
            let mu = random_measure(&mut rng, m, dim);
            let nu = random_measure(&mut rng, m, dim);
            let brute = brute_force_ot(m, |i, j| {
                let d: f64 = mu.point(i).iter().zip(nu.point(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if order == Order::One {
                    d
                } else {
                    d * d
                }
            })?;
            let brute = if order == Order::One { brute } else { brute.sqrt() };
            let fast = wasserstein_p(&mu, &nu, order)?;
            let general = wasserstein_p_assignment(&mu, &nu, order)?;
            (fast - brute).abs().max((general - brute).abs())
        } else {
            let grid = TimeGrid::new(1.0, rng.gen_range(1..=4))?;
            let cut = grid.time(rng.gen_range(0..=grid.steps));
            let mu = random_paths(&mut rng, m, grid, dim);
            let nu = random_paths(&mut rng, m, grid, dim);
            (wasserstein_path(&mu, &nu, order, cut)? - brute_force_path(&mu, &nu, order, cut)?).abs()
        };
        out.oracle_max_diff = out.oracle_max_diff.max(gap);
        if gap <= 1e-12 {
            out.oracle_matches += 1;
        }
    }
    for pair in 0..AXIOM_PAIRS {
        let mut rng = aux_stream(seed, Domain::Probe, &[2, pair as u64]);
        let m = rng.gen_range(1..=8);
        let dim = rng.gen_range(1..=3);
        let mu = random_measure(&mut rng, m, dim);
        let nu = random_measure(&mut rng, m, dim);
        let rho = random_measure(&mut rng, m, dim);
        for order in [Order::One, Order::Two] {
            let d = wasserstein_p(&mu, &nu, order)? - wasserstein_p(&nu, &mu, order)?;
            out.symmetry_max_diff = out.symmetry_max_diff.max(d.abs());
        }
        let w = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| wasserstein_p(a, b, Order::Two);
        if w(&mu, &rho)? <= w(&mu, &nu)? + w(&nu, &rho)? + 1e-9 {
            out.triangle_passes += 1;
        }
        if wasserstein_p(&mu, &nu, Order::One)? <= w(&mu, &nu)? + 1e-12 {
            out.lyapunov_passes += 1;
        }
    }
    for pair in 0..DIRAC_PAIRS {
        let mut rng = aux_stream(seed, Domain::Probe, &[3, pair as u64]);
        let grid = TimeGrid::new(1.0, rng.gen_range(1..=16))?;
        let dim = rng.gen_range(1..=3);
        let x = random_paths(&mut rng, 1, grid, dim);
        let y = random_paths(&mut rng, 1, grid, dim);
        if wasserstein_path(&x, &y, Order::Two, grid.horizon)? == sup_norm_dist(x.path(0), y.path(0), dim)? {
            out.dirac_passes += 1;
        }
    }
    Ok(out)
}

/// Transport self-test as CSV rows. Uses only the config's seed.
pub fn run_ot_selftest(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let start = Instant::now();
    let c = selftest_counts(cfg.seed)?;
    let wall = millis(start);
    let mut result = SweepResult::new(ExperimentKind::OtSelftest);
    result.cells = 1;
    let lin = format!("master={}/probe", cfg.seed);
    for (name, value) in [
        ("oracle_matches", c.oracle_matches as f64),
        ("oracle_instances", c.oracle_instances as f64),
        ("oracle_max_abs_diff", c.oracle_max_diff),
        ("symmetry_max_abs_diff", c.symmetry_max_diff),
        ("triangle_passes", c.triangle_passes as f64),
        ("lyapunov_passes", c.lyapunov_passes as f64),
        ("dirac_passes", c.dirac_passes as f64),
        ("failures", c.failures() as f64),
    ] {
        result.push(None, None, None, name, value, None, wall, &lin);
    }
    Ok(result)
}

/// Moments of `(ΔW, I)` over one step `h`, where
/// `I = ∫ e^{−θ(h−s)} dW(s)`: `(Var ΔW, Var I, Cov)`.
fn ou_step_moments(theta: f64, h: f64) -> (f64, f64, f64) {
    if theta.abs() < 1e-12 {
        return (h, h, h);
    }
    let var_i = -(-2.0 * theta * h).exp_m1() / (2.0 * theta);
    let cov = -(-theta * h).exp_m1() / theta;
    (h, var_i, cov)
}

/// Exact scalar OU path on `grid` driven by the Brownian increments `dw`,
/// with the stochastic-integral residual drawn from `rng`.
pub fn exact_ou_path(theta: f64, sigma: f64, z0: f64, grid: TimeGrid, dw: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let h = grid.dt();
    let (var_w, var_i, cov) = ou_step_moments(theta, h);
    let beta = cov / var_w;
    let resid = (var_i - cov * cov / var_w).max(0.0).sqrt();
    let decay = (-theta * h).exp();
    let mut z = Vec::with_capacity(grid.steps + 1);
    z.push(z0);
    for j in 0..grid.steps {
        let w = dw.get(j).copied().unwrap_or(0.0);
        let xi: f64 = rng.sample(StandardNormal);
        let integral = beta * w + resid * xi;
        z.push(decay * z[j] + sigma * integral);
    }
    z
}

/// Strong error of Euler–Maruyama for scalar OU against the exact solution
/// driven by the same Brownian path. `N[0]` paths per replication; the
/// error is the root mean over paths of the squared sup gap on each coarse
/// grid.
pub fn run_em_order(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let model = cfg.build_model()?;
    let (theta, sigma) = presets::ou_scalar_params(&cfg.model.params)?;
    let paths = cfg.particles[0];
    let mut ks = cfg.k.clone();
    ks.sort_unstable();
    ks.dedup();
    let finest = *ks.last().expect("validated nonempty");
    let fine = TimeGrid::new(cfg.horizon, finest)?;
    let none = Graphon::constant(0.0)?;
    let reps = cfg.replications;
    let mut result = SweepResult::new(ExperimentKind::EmOrder);

    let outcomes: Vec<Result<(Vec<f64>, f64)>> = par::map_range(reps, |r| {
        let t0 = Instant::now();
        let seed = replication_seed(cfg.seed, r as u64);
        let sim = SimConfig {
            horizon: cfg.horizon,
            steps: finest,
            particles: paths,
            dim: 1,
            seed,
        };
        let runs = refine_coupled(&sim, &model, &none, &ks)?;
        let exact: Vec<Vec<f64>> = (0..paths)
            .map(|i| {
                let label = particle_label(i, paths);
                let d = particle_drivers(seed, &model, label, fine);
                let mut rng = stream(seed, label, 0, Domain::Probe);
                exact_ou_path(theta, sigma, d.init[0], fine, &d.noise, &mut rng)
            })
            .collect();
        let errors = runs
            .iter()
            .map(|run| {
                let steps = run.grid().steps;
                let factor = finest / steps;
                let total: f64 = (0..paths)
                    .map(|i| {
                        (0..=steps)
                            .map(|m| {
                                let d = run.state(m, i)[0] - exact[i][m * factor];
                                d * d
                            })
                            .fold(0.0, f64::max)
                    })
                    .sum();
                (total / paths as f64).sqrt()
            })
            .collect();
        Ok((errors, millis(t0)))
    });

    let mut per_k: Vec<Vec<f64>> = vec![Vec::new(); ks.len()];
    let mut wall_total = 0.0;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        result.cells += 1;
        let lin = format!(
            "master={}/rep={r}/sub={:#018x}/fine_k={finest}",
            cfg.seed,
            replication_seed(cfg.seed, r as u64)
        );
        match outcome {
            Ok((errors, wall)) => {
                wall_total += wall;
                for (j, &k) in ks.iter().enumerate() {
                    result.push(Some(paths), Some(k), Some(r), "strong_error", errors[j], None, wall, &lin);
                    per_k[j].push(errors[j]);
                }
            }
            Err(Error::Diverged { .. }) => {
                result.failed_cells += 1;
                result.push(Some(paths), None, Some(r), DIVERGED, f64::NAN, None, 0.0, &lin);
            }
            Err(e) => return Err(e),
        }
    }
    if per_k[0].is_empty() {
        return Ok(result);
    }
    let agg = format!("master={}/reps=0..{reps}/fine_k={finest}", cfg.seed);
    let mut dts = Vec::new();
    let mut means = Vec::new();
    for (j, &k) in ks.iter().enumerate() {
        let (m, se) = mean_and_se(&per_k[j]);
        result.push(Some(paths), Some(k), None, "strong_error", m, Some(se), wall_total, &agg);
        dts.push(cfg.horizon / k as f64);
        means.push(m);
    }
    push_slopes(&mut result, Some(paths), &dts, &[("strong_order_slope", &means)], wall_total, &agg);
    Ok(result)
}
