//! Spatial and temporal law-of-large-numbers sweeps and the SGD demo.

use std::path::Path;
use std::time::Instant;

use super::{loglog_slope, millis, ExperimentConfig, ExperimentKind, SweepResult, DIVERGED};
use crate::error::{Error, Result};
use crate::graphon::discretize;
use crate::meanfield::{picard_solve, MeanFieldConfig};
use crate::model::{global_minimizer, presets};
use crate::par;
use crate::rng::{replication_seed, Label};
use crate::simulator::{particle_drivers, particle_label, refine_coupled, simulate, SimConfig};
use crate::transport::{matched_reference, mean_and_se, wasserstein_path, Order};

/// Replication id reserved for the mean-field reference.
const REFERENCE_ID: u64 = u64::MAX;

fn lineage(seed: u64, r: usize) -> String {
    format!("master={seed}/rep={r}/sub={:#018x}", replication_seed(seed, r as u64))
}

fn squared_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct NCell {
    w1: f64,
    mean_square: f64,
    wall: f64,
}

pub fn run_lln_n_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    lln_n_sweep(cfg, None)
}

/// N-sweep at the finest `k`: `W_{1,T}` against a mixture sampled from the
/// mean-field reference, and the mean-square sup gap between each particle
/// and the limit path at its own label driven by the same noise.
pub(crate) fn lln_n_sweep(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<SweepResult> {
    let model = cfg.build_model()?;
    let graphon = cfg.build_graphon()?;
    let k = cfg.finest_k();
    let n = model.dim();
    let mut result = SweepResult::new(ExperimentKind::LlnNSweep);
    let start = Instant::now();
    let ref_seed = replication_seed(cfg.seed, REFERENCE_ID);
    let ref_lineage = format!("master={}/reference/sub={ref_seed:#018x}", cfg.seed);
    let ref_config = SimConfig {
        horizon: cfg.horizon,
        steps: k,
        particles: 1,
        dim: n,
        seed: ref_seed,
    };
    let mf_config = MeanFieldConfig::from(cfg.meanfield);
    let reference = match picard_solve(&mf_config, &ref_config, &model, &graphon) {
        Ok(mf) => mf,
        Err(Error::Diverged { .. }) => {
            result.cells = 1;
            result.failed_cells = 1;
            result.push(None, Some(k), None, DIVERGED, f64::NAN, None, millis(start), ref_lineage);
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    if let Some(dir) = out_dir {
        reference.save(dir)?;
    }
    let ref_wall = millis(start);
    result.push(None, Some(k), None, "reference_iterations", reference.iterations as f64, None, ref_wall, &ref_lineage);
    result.push(
        None,
        Some(k),
        None,
        "reference_residual",
        reference.residuals.last().copied().unwrap_or(f64::NAN),
        None,
        ref_wall,
        &ref_lineage,
    );
    let largest = *cfg.particles.iter().max().expect("validated nonempty");
    let mixture = reference.sample_mixture(4 * largest, ref_seed)?;
    let frozen = reference.frozen(&model)?;

    let reps = cfg.replications;
    let cells: Vec<(usize, usize)> = cfg
        .particles
        .iter()
        .flat_map(|&big_n| (0..reps).map(move |r| (big_n, r)))
        .collect();
    let outcomes: Vec<Result<NCell>> = par::map_range(cells.len(), |c| {
        let (big_n, r) = cells[c];
        let t0 = Instant::now();
        let seed = replication_seed(cfg.seed, r as u64);
        let sim = SimConfig {
            horizon: cfg.horizon,
            steps: k,
            particles: big_n,
            dim: n,
            seed,
        };
        let ens = simulate(&sim, &model, &graphon)?;
        let matched = matched_reference(&mixture, big_n, ref_seed, r as u64)?;
        let w1 = wasserstein_path(&ens.path_measure(), &matched, Order::One, cfg.horizon)?;
        let grid = sim.grid();
        let mut total = 0.0;
        for i in 0..big_n {
            let label = particle_label(i, big_n);
            let d = particle_drivers(seed, &model, label, grid);
            let tagged = frozen.tagged_path(&graphon, label.value(), &d.init, &d.eta, &d.noise)?;
            let path = ens.path(i);
            let worst = (0..=k)
                .map(|m| squared_gap(&path[m * n..(m + 1) * n], &tagged[m * n..(m + 1) * n]))
                .fold(0.0, f64::max);
            total += worst;
        }
        Ok(NCell {
            w1,
            mean_square: total / big_n as f64,
            wall: millis(t0),
        })
    });

    let mut per_n: Vec<(Vec<f64>, Vec<f64>, f64)> = vec![(Vec::new(), Vec::new(), 0.0); cfg.particles.len()];
    for (c, outcome) in outcomes.into_iter().enumerate() {
        let (big_n, r) = cells[c];
        let slot = &mut per_n[c / reps];
        result.cells += 1;
        match outcome {
            Ok(cell) => {
                result.push(Some(big_n), Some(k), Some(r), "w1_T", cell.w1, None, cell.wall, lineage(cfg.seed, r));
                result.push(
                    Some(big_n),
                    Some(k),
                    Some(r),
                    "ms_sup",
                    cell.mean_square,
                    None,
                    cell.wall,
                    lineage(cfg.seed, r),
                );
                slot.0.push(cell.w1);
                slot.1.push(cell.mean_square);
                slot.2 += cell.wall;
            }
            Err(Error::Diverged { .. }) => {
                result.failed_cells += 1;
                result.push(Some(big_n), Some(k), Some(r), DIVERGED, f64::NAN, None, 0.0, lineage(cfg.seed, r));
            }
            Err(e) => return Err(e),
        }
    }
    for (idx, &big_n) in cfg.particles.iter().enumerate() {
        let (w1, ms, wall) = &per_n[idx];
        if w1.is_empty() {
            continue;
        }
        let agg = format!("master={}/reps=0..{reps}", cfg.seed);
        let (m, se) = mean_and_se(w1);
        result.push(Some(big_n), Some(k), None, "w1_T", m, Some(se), *wall, &agg);
        let (m, se) = mean_and_se(ms);
        result.push(Some(big_n), Some(k), None, "ms_sup", m, Some(se), *wall, &agg);
        if let Some(dir) = out_dir {
            discretize(&graphon, big_n)?.save_csv(dir.join(format!("graphon_N{big_n}.csv")))?;
        }
    }
    Ok(result)
}

/// Temporal sweep at `N = N[0]` with coupled refinement; the finest `k` is
/// the reference. Reports the mean-square sup gap on the coarse grid and
/// log-log slopes of its mean and root mean against `dt`.
pub fn run_lln_k_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let model = cfg.build_model()?;
    let graphon = cfg.build_graphon()?;
    let n = model.dim();
    let big_n = cfg.particles[0];
    let mut ks = cfg.k.clone();
    ks.sort_unstable();
    ks.dedup();
    let finest = *ks.last().expect("validated nonempty");
    let mut result = SweepResult::new(ExperimentKind::LlnKSweep);
    let reps = cfg.replications;

    let outcomes: Vec<Result<(Vec<f64>, f64)>> = par::map_range(reps, |r| {
        let t0 = Instant::now();
        let sim = SimConfig {
            horizon: cfg.horizon,
            steps: finest,
            particles: big_n,
            dim: n,
            seed: replication_seed(cfg.seed, r as u64),
        };
        let runs = refine_coupled(&sim, &model, &graphon, &ks)?;
        let reference = runs.last().expect("nonempty");
        let metrics = runs
            .iter()
            .map(|run| {
                let steps = run.grid().steps;
                let factor = finest / steps;
                let total: f64 = (0..big_n)
                    .map(|i| {
                        (0..=steps)
                            .map(|m| squared_gap(run.state(m, i), reference.state(m * factor, i)))
                            .fold(0.0, f64::max)
                    })
                    .sum();
                total / big_n as f64
            })
            .collect();
        Ok((metrics, millis(t0)))
    });

    let mut per_k: Vec<Vec<f64>> = vec![Vec::new(); ks.len()];
    let mut wall_total = 0.0;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        result.cells += 1;
        let lin = format!("{}/fine_k={finest}", lineage(cfg.seed, r));
        match outcome {
            Ok((metrics, wall)) => {
                wall_total += wall;
                for (j, &k) in ks.iter().enumerate() {
                    result.push(Some(big_n), Some(k), Some(r), "ms_sup", metrics[j], None, wall, &lin);
                    per_k[j].push(metrics[j]);
                }
            }
            Err(Error::Diverged { .. }) => {
                result.failed_cells += 1;
                result.push(Some(big_n), None, Some(r), DIVERGED, f64::NAN, None, 0.0, &lin);
            }
            Err(e) => return Err(e),
        }
    }
    if per_k[0].is_empty() {
        return Ok(result);
    }
    let agg = format!("master={}/reps=0..{reps}/fine_k={finest}", cfg.seed);
    let mut dts = Vec::new();
    let (mut ms_means, mut rms) = (Vec::new(), Vec::new());
    for (j, &k) in ks.iter().enumerate() {
        let (m, se) = mean_and_se(&per_k[j]);
        result.push(Some(big_n), Some(k), None, "ms_sup", m, Some(se), wall_total, &agg);
        let root = m.sqrt();
        let root_se = if root > 0.0 { se / (2.0 * root) } else { 0.0 };
        result.push(Some(big_n), Some(k), None, "rms_sup", root, Some(root_se), wall_total, &agg);
        if k < finest {
            dts.push(cfg.horizon / k as f64);
            ms_means.push(m);
            rms.push(root);
        }
    }
    push_slopes(&mut result, Some(big_n), &dts, &[("ms_slope", &ms_means), ("rms_slope", &rms)], wall_total, &agg);
    Ok(result)
}

pub(crate) fn push_slopes(
    result: &mut SweepResult,
    n: Option<usize>,
    dts: &[f64],
    series: &[(&str, &[f64])],
    wall: f64,
    lineage: &str,
) {
    let mut any = false;
    for (name, values) in series {
        if let Some(s) = loglog_slope(dts, values) {
            result.push(n, None, None, *name, s, None, wall, lineage);
            any = true;
        }
    }
    if !any {
        result.push(n, None, None, "slope_unavailable", f64::NAN, None, wall, lineage);
    }
}

/// Distributed SGD runs: distance of the particle mean to the minimizer of
/// the averaged cost and the inter-particle disagreement at ten checkpoints.
pub fn run_sgd_demo(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let model = cfg.build_model()?;
    let graphon = cfg.build_graphon()?;
    let costs = presets::sgd_costs(&cfg.model.params)?;
    let n = model.dim();
    let labels: Vec<f64> = (1..=1024).map(|a| Label::midpoint(a, 1024).value()).collect();
    let z_star = global_minimizer(&costs, &labels)?;
    let mut result = SweepResult::new(ExperimentKind::SgdDemo);
    for (c, v) in z_star.iter().enumerate() {
        result.push(None, None, None, format!("z_star_c{}", c + 1), *v, None, 0.0, "grid=1024");
    }

    let reps = cfg.replications;
    let cells: Vec<(usize, usize, usize)> = cfg
        .particles
        .iter()
        .flat_map(|&big_n| cfg.k.iter().flat_map(move |&k| (0..reps).map(move |r| (big_n, k, r))))
        .collect();
    let outcomes: Vec<Result<(crate::simulator::ParticleEnsemble, f64)>> = par::map_range(cells.len(), |c| {
        let (big_n, k, r) = cells[c];
        let t0 = Instant::now();
        let sim = SimConfig {
            horizon: cfg.horizon,
            steps: k,
            particles: big_n,
            dim: n,
            seed: replication_seed(cfg.seed, r as u64),
        };
        let ens = simulate(&sim, &model, &graphon)?;
        Ok((ens, millis(t0)))
    });

    let distance = |mean: &[f64]| squared_gap(mean, &z_star).sqrt();
    let mut names = vec!["final_mean_distance".to_string(), "final_disagreement".to_string()];
    names.extend((0..n).map(|c| format!("final_mean_c{}", c + 1)));
    let mut finals: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut walls = Vec::new();
    for (c, outcome) in outcomes.into_iter().enumerate() {
        let (big_n, k, r) = cells[c];
        if r == 0 {
            finals.push(Vec::new());
            walls.push(0.0);
        }
        result.cells += 1;
        let lin = lineage(cfg.seed, r);
        match outcome {
            Ok((ens, wall)) => {
                *walls.last_mut().unwrap() += wall;
                let mut checkpoints: Vec<usize> = (1..=10).map(|j| (k * j + 5) / 10).filter(|&m| m > 0).collect();
                checkpoints.dedup();
                for m in checkpoints {
                    let t = ens.grid().time(m);
                    let mean = ens.mean(m);
                    result.push(Some(big_n), Some(k), Some(r), format!("mean_distance@t={t}"), distance(&mean), None, wall, &lin);
                    result.push(Some(big_n), Some(k), Some(r), format!("disagreement@t={t}"), ens.disagreement(m), None, wall, &lin);
                }
                let mean = ens.mean(k);
                let mut row = vec![distance(&mean), ens.disagreement(k)];
                row.extend(&mean);
                for (name, v) in names.iter().zip(&row) {
                    result.push(Some(big_n), Some(k), Some(r), name.clone(), *v, None, wall, &lin);
                }
                finals.last_mut().unwrap().push(row);
            }
            Err(Error::Diverged { .. }) => {
                result.failed_cells += 1;
                result.push(Some(big_n), Some(k), Some(r), DIVERGED, f64::NAN, None, 0.0, &lin);
            }
            Err(e) => return Err(e),
        }
    }
    for (cell, rows) in finals.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let (big_n, k, _) = cells[cell * reps];
        let agg = format!("master={}/reps=0..{reps}", cfg.seed);
        for (j, name) in names.iter().enumerate() {
            let values: Vec<f64> = rows.iter().map(|row| row[j]).collect();
            let (m, se) = mean_and_se(&values);
            result.push(Some(big_n), Some(k), None, name.clone(), m, Some(se), walls[cell], &agg);
        }
    }
    Ok(result)
}
