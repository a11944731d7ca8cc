use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Time-varying gains `α₁(t)` (consensus) and `α₂(t)` (gradient).
#[derive(Clone)]
pub struct GainSchedule {
    pub alpha1: ScalarFn,
    pub alpha2: ScalarFn,
}

impl GainSchedule {
    pub fn new(alpha1: ScalarFn, alpha2: ScalarFn) -> Self {
        GainSchedule { alpha1, alpha2 }
    }

    pub fn constant(alpha1: f64, alpha2: f64) -> Self {
        GainSchedule::new(Arc::new(move |_| alpha1), Arc::new(move |_| alpha2))
    }

    /// Constant `α₁`, decaying `α₂(t) = a₂/(1+t)`.
    pub fn decaying(alpha1: f64, alpha2: f64) -> Self {
        GainSchedule::new(Arc::new(move |_| alpha1), Arc::new(move |t| alpha2 / (1.0 + t)))
    }

    /// Checks positivity on `probes` evenly spaced times in `[0, horizon]`
    /// and a crude continuity bound: consecutive probe values may not jump
    /// by more than `jump_tol`.
    pub fn validate(&self, horizon: f64, probes: usize, jump_tol: f64) -> Result<()> {
        let probes = probes.max(2);
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..probes {
            let t = horizon * i as f64 / (probes - 1) as f64;
            let (a, b) = ((self.alpha1)(t), (self.alpha2)(t));
            if !(a > 0.0) || !(b > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "gains must be positive, got α₁({t}) = {a}, α₂({t}) = {b}"
                )));
            }
            if let Some((pa, pb)) = prev {
                if (a - pa).abs() > jump_tol || (b - pb).abs() > jump_tol {
                    return Err(Error::InvalidConfig(format!("gain jumps near t = {t}")));
                }
            }
            prev = Some((a, b));
        }
        Ok(())
    }
}

/// `V(p,z) = ½(z−c(p))ᵀQ(p)(z−c(p))` with per-node target `c` and SPD
/// curvature `Q` (row-major).
#[derive(Clone)]
pub struct QuadraticCostFamily {
    dim: usize,
    target: VectorFn,
    curvature: VectorFn,
}

impl QuadraticCostFamily {
    pub fn new<C, Q>(dim: usize, target: C, curvature: Q) -> Self
    where
        C: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        Q: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        QuadraticCostFamily {
            dim,
            target: Arc::new(target),
            curvature: Arc::new(curvature),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn target(&self, p: f64) -> Vec<f64> {
        (self.target)(p)
    }

    pub fn curvature(&self, p: f64) -> Vec<f64> {
        (self.curvature)(p)
    }

    pub fn value(&self, p: f64, z: &[f64]) -> f64 {
        let n = self.dim;
        let c = self.target(p);
        let q = self.curvature(p);
        let d: Vec<f64> = z.iter().zip(&c).map(|(a, b)| a - b).collect();
        let mut v = 0.0;
        for r in 0..n {
            for s in 0..n {
                v += d[r] * q[r * n + s] * d[s];
            }
        }
        0.5 * v
    }

    /// `∇_z V(p,z) = ½(Q + Qᵀ)(z − c)`; equal to `Q(z−c)` for symmetric `Q`.
    pub fn gradient_into(&self, p: f64, z: &[f64], out: &mut [f64]) {
        let n = self.dim;
        let c = (self.target)(p);
        let q = (self.curvature)(p);
        for r in 0..n {
            out[r] = (0..n)
                .map(|s| 0.5 * (q[r * n + s] + q[s * n + r]) * (z[s] - c[s]))
                .sum();
        }
    }

    pub fn gradient(&self, p: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.gradient_into(p, z, &mut out);
        out
    }

    /// Checks symmetry and positive definiteness of `Q(p)` at the labels and
    /// returns `sup_p ‖Q(p)‖₂`, the Lipschitz constant of `∇_z V`.
    pub fn check(&self, labels: &[f64]) -> Result<f64> {
        let n = self.dim;
        let mut sup = 0.0f64;
        for &p in labels {
            let q = self.curvature(p);
            if q.len() != n * n || self.target(p).len() != n {
                return Err(Error::DimensionMismatch(format!("cost family at p = {p}")));
            }
            let m = DMatrix::from_row_slice(n, n, &q);
            if (&m - m.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidConfig(format!("Q({p}) not symmetric")));
            }
            let eig = m.symmetric_eigenvalues();
            if eig.min() <= 0.0 {
                return Err(Error::InvalidConfig(format!("Q({p}) not positive definite")));
            }
            sup = sup.max(eig.amax());
        }
        Ok(sup)
    }
}

/// Minimizer of the grid average `Σ_i V(p_i, z)`:
/// `(Σ Q(p_i))⁻¹ Σ Q(p_i) c(p_i)`.
pub fn global_minimizer(costs: &QuadraticCostFamily, labels: &[f64]) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::InvalidConfig("label grid is empty".into()));
    }
    let n = costs.dim();
    let mut qsum = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for &p in labels {
        let q = DMatrix::from_row_slice(n, n, &costs.curvature(p));
        let c = DVector::from_vec(costs.target(p));
        rhs += &q * c;
        qsum += q;
    }
    let scale = qsum.amax().max(f64::MIN_POSITIVE);
    let lu = qsum.lu();
    if lu.determinant().abs() <= 1e-14 * scale.powi(n as i32) {
        return Err(Error::Singular);
    }
    lu.solve(&rhs).map(|v| v.as_slice().to_vec()).ok_or(Error::Singular)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoints(cells: usize) -> Vec<f64> {
        (0..cells).map(|i| (i as f64 + 0.5) / cells as f64).collect()
    }

    #[test]
    fn minimizer_of_linear_targets() {
        let costs = QuadraticCostFamily::new(1, |p| vec![p], |_| vec![1.0]);
        let z = global_minimizer(&costs, &midpoints(1000)).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn minimizer_of_constant_target() {
        let costs = QuadraticCostFamily::new(2, |_| vec![0.3, -1.7], |_| vec![1.0, 0.0, 0.0, 1.0]);
        let z = global_minimizer(&costs, &midpoints(37)).unwrap();
        assert!((z[0] - 0.3).abs() < 1e-12 && (z[1] + 1.7).abs() < 1e-12);
    }

    #[test]
    fn minimizer_with_varying_curvature() {
        // Independent oracle: a 10⁶-cell Riemann sum of the two integrals.
        let cells = 1_000_000;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..cells {
            let p = (i as f64 + 0.5) / cells as f64;
            num += (1.0 + p) * p;
            den += 1.0 + p;
        }
        let oracle = num / den;
        assert!((oracle - 5.0 / 9.0).abs() < 1e-9);
        let costs = QuadraticCostFamily::new(1, |p| vec![p], |p| vec![1.0 + p]);
        let z = global_minimizer(&costs, &midpoints(2000)).unwrap();
        assert!((z[0] - oracle).abs() < 1e-6, "{} vs {oracle}", z[0]);
    }

    #[test]
    fn minimizer_grid_stability() {
        let costs = QuadraticCostFamily::new(1, |p| vec![p * p], |p| vec![1.0 + p]);
        let z: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&c| global_minimizer(&costs, &midpoints(c)).unwrap()[0])
            .collect();
        // Fit C on the coarsest pair, then check later pairs stay under C/size.
        let c = (z[1] - z[0]).abs() * 16.0;
        for (i, size) in [(1, 32.0), (2, 64.0)] {
            assert!((z[i + 1] - z[i]).abs() <= c / size + 1e-15);
        }
    }

    #[test]
    fn singular_aggregate() {
        let costs = QuadraticCostFamily::new(2, |_| vec![0.0, 0.0], |_| vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(global_minimizer(&costs, &[0.5]), Err(Error::Singular)));
        assert!(global_minimizer(&costs, &[]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let costs = QuadraticCostFamily::new(
            2,
            |p| vec![p, 1.0 - 2.0 * p],
            |p| vec![2.0 + p, 0.3, 0.3, 1.0],
        );
        let h = 1e-5;
        for (p, z) in [(0.1, [0.5, -2.0]), (0.9, [3.0, 1.0]), (0.5, [-1.0, 0.0])] {
            let g = costs.gradient(p, &z);
            let norm2 = z[0] * z[0] + z[1] * z[1];
            for c in 0..2 {
                let mut zp = z;
                let mut zm = z;
                zp[c] += h;
                zm[c] -= h;
                let fd = (costs.value(p, &zp) - costs.value(p, &zm)) / (2.0 * h);
                assert!((g[c] - fd).abs() <= 10.0 * h * (1.0 + norm2));
            }
        }
        assert!(costs.check(&[0.0, 0.5, 1.0]).unwrap() > 2.0);
    }

    #[test]
    fn gains_validation() {
        GainSchedule::decaying(4.0, 1.0).validate(20.0, 200, 0.5).unwrap();
        assert!(GainSchedule::constant(1.0, 0.0).validate(1.0, 10, 1.0).is_err());
        let jumpy = GainSchedule::new(
            Arc::new(|t| if t < 0.5 { 1.0 } else { 3.0 }),
            Arc::new(|_| 1.0),
        );
        assert!(jumpy.validate(1.0, 100, 0.5).is_err());
    }
}
