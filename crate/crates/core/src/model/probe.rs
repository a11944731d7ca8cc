use rand::Rng;
use rand_distr::StandardNormal;

use super::CoefficientModel;
use crate::rng::{aux_stream, Domain};

/// Where and how hard to probe.
#[derive(Debug, Clone, Copy)]
pub struct ProbeSettings {
    pub horizon: f64,
    /// Standard deviation of probed states and exogenous values.
    pub state_scale: f64,
    /// Growth constant for `‖G‖ + ‖H‖`.
    pub c1: f64,
    /// Growth constant for `‖F‖`.
    pub c2: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            horizon: 1.0,
            state_scale: 1.0,
            c1: 10.0,
            c2: 10.0,
        }
    }
}

/// Empirical Lipschitz and growth statistics of a model.
///
/// Every field is a supremum over random probe pairs, hence a lower bound of
/// the analytic constant it estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub probes: usize,
    /// `sup ‖ΔF‖ / (‖Δz‖ + ‖Δy‖)` (the `σ₄` form).
    pub lip_f: f64,
    /// `sup ‖ΔG‖ / ‖Δy‖` at fixed `(t, p, η)`.
    pub lip_g_state: f64,
    /// `sup ‖ΔH‖_F / ‖Δy‖` at fixed `(t, p, η)`.
    pub lip_h_state: f64,
    /// `sup (‖ΔG‖² + ‖ΔH‖²) / (‖Δη‖² + ‖Δy‖²)` (the `σ₁` form).
    pub sigma1: f64,
    /// `sup (‖G‖ + ‖H‖) / (1 + ‖η‖ + ‖y‖)`.
    pub growth_gh: f64,
    /// `sup ‖F‖ / (1 + ‖z‖ + ‖y‖)`.
    pub growth_f: f64,
    pub growth_ok: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Probes `F`, `G`, `H` on random inputs. Diagnostic only: nothing here can
/// certify the analytic assumptions, and callers decide what to do with the
/// numbers.
pub fn probe_assumptions(
    model: &CoefficientModel,
    probes: usize,
    seed: u64,
    settings: ProbeSettings,
) -> ProbeReport {
    let n = model.dim();
    let mut rng = aux_stream(seed, Domain::Probe, &[0x7072]);
    let gauss = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..len)
            .map(|_| settings.state_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let mut report = ProbeReport {
        probes,
        lip_f: 0.0,
        lip_g_state: 0.0,
        lip_h_state: 0.0,
        sigma1: 0.0,
        growth_gh: 0.0,
        growth_f: 0.0,
        growth_ok: true,
    };
    for _ in 0..probes.max(1) {
        let t = settings.horizon * rng.gen::<f64>();
        let (p, q): (f64, f64) = (rng.gen(), rng.gen());
        let eta = gauss(n, &mut rng);
        let y = gauss(n, &mut rng);
        let z = gauss(n, &mut rng);
        let dy = gauss(n, &mut rng);
        let dz = gauss(n, &mut rng);
        let deta = gauss(n, &mut rng);
        let y2: Vec<f64> = y.iter().zip(&dy).map(|(a, b)| a + b).collect();
        let z2: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + b).collect();
        let eta2: Vec<f64> = eta.iter().zip(&deta).map(|(a, b)| a + b).collect();

        let f1 = model.interaction(t, p, q, &z, &y);
        let f2 = model.interaction(t, p, q, &z2, &y2);
        let denom = norm(&dz) + norm(&dy);
        if denom > 0.0 {
            report.lip_f = report.lip_f.max(dist(&f1, &f2) / denom);
        }

        let g1 = model.drift(t, p, &eta, &y);
        let h1 = model.diffusion(t, p, &eta, &y);
        let g_y = model.drift(t, p, &eta, &y2);
        let h_y = model.diffusion(t, p, &eta, &y2);
        let ny = norm(&dy);
        if ny > 0.0 {
            report.lip_g_state = report.lip_g_state.max(dist(&g1, &g_y) / ny);
            report.lip_h_state = report.lip_h_state.max(dist(&h1, &h_y) / ny);
        }

        let g2 = model.drift(t, p, &eta2, &y2);
        let h2 = model.diffusion(t, p, &eta2, &y2);
        let both = norm(&deta).powi(2) + ny * ny;
        if both > 0.0 {
            let num = dist(&g1, &g2).powi(2) + dist(&h1, &h2).powi(2);
            report.sigma1 = report.sigma1.max(num / both);
        }

        report.growth_gh = report
            .growth_gh
            .max((norm(&g1) + norm(&h1)) / (1.0 + norm(&eta) + norm(&y)));
        report.growth_f = report
            .growth_f
            .max(norm(&f1) / (1.0 + norm(&z) + norm(&y)));
    }
    report.growth_ok = report.growth_gh <= settings.c1 && report.growth_f <= settings.c2;
    report
}
