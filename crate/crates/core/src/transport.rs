//! Exact Wasserstein distances between uniform empirical measures with equal
//! sample counts, on `ℝⁿ` and on discretized path space under the sup norm.
//!
//! Equal counts make optimal transport an assignment problem, solved here
//! exactly by a shortest-augmenting-path Hungarian method. `n = 1` point
//! clouds use sorted matching, which is optimal for convex costs.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::{aux_stream, Domain};
use crate::simulator::TimeGrid;

/// Largest count accepted by the assignment solver.
pub const MAX_ASSIGNMENT: usize = 2000;
/// Largest count accepted by the permutation oracle.
pub const MAX_BRUTE_FORCE: usize = 7;

/// Uniform empirical measure on `ℝⁿ`, points flattened `[m][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dimension {dim}",
                points.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::Empty);
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite point".into()));
        }
        Ok(EmpiricalMeasure { dim, points })
    }

    /// One-dimensional measure from scalars.
    pub fn scalar(points: Vec<f64>) -> Result<Self> {
        EmpiricalMeasure::new(1, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (c, v) in self.point(i).iter().enumerate() {
                mean[c] += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= self.len() as f64);
        mean
    }
}

/// Uniform empirical measure on paths sharing one time grid, `[m][k+1][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPathMeasure {
    count: usize,
    grid: TimeGrid,
    dim: usize,
    paths: Vec<f64>,
}

impl EmpiricalPathMeasure {
    pub fn new(count: usize, grid: TimeGrid, dim: usize, paths: Vec<f64>) -> Result<Self> {
        if count == 0 {
            return Err(Error::Empty);
        }
        if paths.len() != count * (grid.steps + 1) * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {count} paths of {} points in dimension {dim}",
                paths.len(),
                grid.steps + 1
            )));
        }
        if paths.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite path value".into()));
        }
        Ok(EmpiricalPathMeasure {
            count,
            grid,
            dim,
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn path_len(&self) -> usize {
        (self.grid.steps + 1) * self.dim
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let l = self.path_len();
        &self.paths[i * l..(i + 1) * l]
    }

    /// Time-`t_m` marginal.
    pub fn marginal(&self, m: usize) -> EmpiricalMeasure {
        let points = (0..self.count)
            .flat_map(|i| self.path(i)[m * self.dim..(m + 1) * self.dim].iter().copied())
            .collect();
        EmpiricalMeasure::new(self.dim, points).expect("paths are finite")
    }

    /// Paths with the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let paths = indices.iter().flat_map(|&i| self.path(i).iter().copied()).collect();
        EmpiricalPathMeasure::new(indices.len(), self.grid, self.dim, paths)
    }

    /// Every path shifted by the constant vector `v`.
    pub fn shifted(&self, v: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, x) in out.paths.iter_mut().enumerate() {
            *x += v[k % self.dim];
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sup_m ‖x(t_m) − y(t_m)‖` over all grid times of two flattened paths.
pub fn sup_norm_dist(x: &[f64], y: &[f64], dim: usize) -> Result<f64> {
    if x.len() != y.len() || dim == 0 || !x.len().is_multiple_of(dim) {
        return Err(Error::GridMismatch);
    }
    Ok(sup_norm_upto(x, y, dim, x.len() / dim - 1))
}

/// Sup-norm distance restricted to grid indices `0..=last`.
pub fn sup_norm_upto(x: &[f64], y: &[f64], dim: usize, last: usize) -> f64 {
    (0..=last)
        .map(|m| sq_dist(&x[m * dim..(m + 1) * dim], &y[m * dim..(m + 1) * dim]))
        .fold(0.0, f64::max)
        .sqrt()
}

/// Order of a Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    One,
    Two,
}

impl Order {
    pub fn from_int(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Order::One),
            2 => Ok(Order::Two),
            other => Err(Error::InvalidConfig(format!("unsupported order {other}"))),
        }
    }

    #[inline]
    fn cost(self, d: f64) -> f64 {
        match self {
            Order::One => d,
            Order::Two => d * d,
        }
    }

    fn root(self, c: f64) -> f64 {
        match self {
            Order::One => c,
            Order::Two => c.sqrt(),
        }
    }
}

/// Solution of a square assignment problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `columns[i]` is the column matched to row `i`.
    pub columns: Vec<usize>,
    /// Sum of the matched costs.
    pub total: f64,
}

/// Sum of matched costs in ascending order. The order only depends on the
/// multiset of matched costs, so a problem and its transpose give bitwise
/// equal totals.
fn canonical_total(mut matched: Vec<f64>) -> f64 {
    matched.sort_by(f64::total_cmp);
    matched.iter().sum()
}

/// Minimum-cost perfect matching of a row-major `m×m` cost matrix.
pub fn solve_assignment(cost: &[f64], m: usize) -> Result<Assignment> {
    if m == 0 {
        return Err(Error::Empty);
    }
    if m > MAX_ASSIGNMENT {
        return Err(Error::TooLarge {
            size: m,
            limit: MAX_ASSIGNMENT,
        });
    }
    if cost.len() != m * m {
        return Err(Error::DimensionMismatch(format!("{} costs for {m}×{m}", cost.len())));
    }
    // Potentials and matching are 1-based with a virtual column 0.
    let mut u = vec![0.0f64; m + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=m {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            let row = &cost[(i0 - 1) * m..i0 * m];
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut columns = vec![0usize; m];
    for j in 1..=m {
        columns[row_of[j] - 1] = j - 1;
    }
    let total = canonical_total((0..m).map(|i| cost[i * m + columns[i]]).collect());
    Ok(Assignment { columns, total })
}

/// Minimum over all `m!` permutations of `(1/m) Σ_i cost(i, π(i))`.
pub fn brute_force_ot<C: Fn(usize, usize) -> f64>(m: usize, cost: C) -> Result<f64> {
    if m == 0 {
        return Err(Error::Empty);
    }
    if m > MAX_BRUTE_FORCE {
        return Err(Error::TooLarge {
            size: m,
            limit: MAX_BRUTE_FORCE,
        });
    }
    let table: Vec<f64> = (0..m * m).map(|k| cost(k / m, k % m)).collect();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| table[i * m + j]).sum();
        best = best.min(total);
    });
    Ok(best / m as f64)
}

fn permute<F: FnMut(&[usize])>(perm: &mut Vec<usize>, k: usize, visit: &mut F) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

fn check_counts(a: usize, b: usize) -> Result<()> {
    if a == 0 || b == 0 {
        return Err(Error::Empty);
    }
    if a != b {
        return Err(Error::CountMismatch { left: a, right: b });
    }
    Ok(())
}

/// Orders a pair by a total order on its data so that `W(μ,ν)` and
/// `W(ν,μ)` run the identical computation.
fn canonical_pair<'a, T>(a: &'a T, b: &'a T, data: impl Fn(&T) -> &[f64]) -> (&'a T, &'a T) {
    let (x, y) = (data(a), data(b));
    let ord = x
        .len()
        .cmp(&y.len())
        .then_with(|| x.iter().zip(y).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    if ord.is_gt() {
        (b, a)
    } else {
        (a, b)
    }
}

/// Exact `W_p` between two equal-count empirical measures on `ℝⁿ`.
pub fn wasserstein_p(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, order: Order) -> Result<f64> {
    check_counts(mu.len(), nu.len())?;
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", mu.dim(), nu.dim())));
    }
    let (mu, nu) = canonical_pair(mu, nu, |m| m.points());
    let m = mu.len();
    let total = if mu.dim() == 1 {
        sorted_matching_total(mu.points(), nu.points(), order)
    } else {
        let cost = point_costs(mu, nu, order);
        solve_assignment(&cost, m)?.total
    };
    Ok(order.root(total / m as f64))
}

/// Exact `W_p` on `ℝⁿ` through the assignment solver, without the 1-D fast
/// path.
pub fn wasserstein_p_assignment(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, order: Order) -> Result<f64> {
    check_counts(mu.len(), nu.len())?;
    let (mu, nu) = canonical_pair(mu, nu, |m| m.points());
    let cost = point_costs(mu, nu, order);
    Ok(order.root(solve_assignment(&cost, mu.len())?.total / mu.len() as f64))
}

fn point_costs(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, order: Order) -> Vec<f64> {
    let m = mu.len();
    let mut cost = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            cost[i * m + j] = order.cost(sq_dist(mu.point(i), nu.point(j)).sqrt());
        }
    }
    cost
}

fn sorted_matching_total(a: &[f64], b: &[f64], order: Order) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    canonical_total(
        a.iter()
            .zip(&b)
            .map(|(x, y)| order.cost(((x - y) * (x - y)).sqrt()))
            .collect(),
    )
}

/// `W_{p,t}` on path space: ground cost `sup_{s ≤ t_cut} ‖x(s) − y(s)‖`.
pub fn wasserstein_path(
    mu: &EmpiricalPathMeasure,
    nu: &EmpiricalPathMeasure,
    order: Order,
    t_cut: f64,
) -> Result<f64> {
    check_counts(mu.len(), nu.len())?;
    if mu.grid() != nu.grid() || mu.dim() != nu.dim() {
        return Err(Error::GridMismatch);
    }
    let last = mu.grid().index_of(t_cut)?;
    let (mu, nu) = canonical_pair(mu, nu, |m| &m.paths);
    let m = mu.len();
    let cost = path_costs(mu, nu, order, last);
    Ok(order.root(solve_assignment(&cost, m)?.total / m as f64))
}

fn path_costs(mu: &EmpiricalPathMeasure, nu: &EmpiricalPathMeasure, order: Order, last: usize) -> Vec<f64> {
    let m = mu.len();
    let dim = mu.dim();
    let mut cost = vec![0.0; m * m];
    crate::par::for_each_chunk(&mut cost, m, |i, row| {
        for (j, c) in row.iter_mut().enumerate() {
            *c = order.cost(sup_norm_upto(mu.path(i), nu.path(j), dim, last));
        }
    });
    cost
}

/// Path-space distance by permutation enumeration (oracle for small counts).
pub fn brute_force_path(
    mu: &EmpiricalPathMeasure,
    nu: &EmpiricalPathMeasure,
    order: Order,
    t_cut: f64,
) -> Result<f64> {
    check_counts(mu.len(), nu.len())?;
    let last = mu.grid().index_of(t_cut)?;
    let dim = mu.dim();
    let avg = brute_force_ot(mu.len(), |i, j| order.cost(sup_norm_upto(mu.path(i), nu.path(j), dim, last)))?;
    Ok(order.root(avg))
}

/// Mean and standard error of `W_{1,T}` between each run and the reference.
///
/// When the reference holds more paths than a run, a subsample of matching
/// size is drawn without replacement (stream keyed by `seed` and the run
/// index); a reference of equal size is used as is.
pub fn mean_w1_estimate(
    runs: &[EmpiricalPathMeasure],
    reference: &EmpiricalPathMeasure,
    seed: u64,
) -> Result<(f64, f64)> {
    if runs.len() < 2 {
        return Err(Error::InvalidConfig("need at least two runs".into()));
    }
    let horizon = reference.grid().horizon;
    let distances = runs
        .iter()
        .enumerate()
        .map(|(r, run)| {
            let matched = matched_reference(reference, run.len(), seed, r as u64)?;
            wasserstein_path(run, &matched, Order::One, horizon)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_se(&distances))
}

/// The reference itself, or a without-replacement subsample of size `count`.
pub fn matched_reference(
    reference: &EmpiricalPathMeasure,
    count: usize,
    seed: u64,
    run: u64,
) -> Result<EmpiricalPathMeasure> {
    if reference.len() == count {
        return Ok(reference.clone());
    }
    if reference.len() < count {
        return Err(Error::CountMismatch {
            left: count,
            right: reference.len(),
        });
    }
    let mut rng = aux_stream(seed, Domain::Resample, &[run, count as u64]);
    let mut idx = sample(&mut rng, reference.len(), count).into_vec();
    idx.sort_unstable();
    reference.select(&idx)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
