//! Gaussian-process Bayesian optimization over a 2-D box with expected
//! improvement, used to tune the smoother's `(lambda, theta)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Observation jitter, in units of the standardized output variance.
pub const JITTER: f64 = 1e-6;

const CANDIDATES: usize = 512;
const LOCAL_STARTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    /// `(lower, upper)` per dimension.
    pub bounds: [(f64, f64); 2],
    pub n_init: usize,
    pub n_iter: usize,
    pub seed: u64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            bounds: [(0.0, 2.0), (0.0, 2.0)],
            n_init: 5,
            n_iter: 30,
            seed: 0,
        }
    }
}

impl SearchSpec {
    pub fn with_seed(seed: u64) -> Self {
        SearchSpec { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("bounds ({lo}, {hi}) must satisfy lower < upper")));
            }
        }
        if self.n_init == 0 {
            return Err(Error::InvalidArgument("n_init must be at least 1".into()));
        }
        Ok(())
    }

    fn unit_of(&self, p: [f64; 2]) -> [f64; 2] {
        std::array::from_fn(|k| (p[k] - self.bounds[k].0) / (self.bounds[k].1 - self.bounds[k].0))
    }

    fn point_at(&self, u: [f64; 2]) -> [f64; 2] {
        std::array::from_fn(|k| {
            let (lo, hi) = self.bounds[k];
            (lo + u[k] * (hi - lo)).clamp(lo, hi)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpDiagnostics {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_point: [f64; 2],
    pub best_value: f64,
    pub history: Vec<([f64; 2], f64)>,
    /// One entry per acquisition round.
    pub diagnostics: Vec<GpDiagnostics>,
}

fn matern52(r: f64, length_scale: f64) -> f64 {
    let s = 5f64.sqrt() * r / length_scale;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Zero-mean GP posterior over standardized outputs with a Matérn-5/2 kernel.
#[derive(Debug, Clone)]
pub struct Gp {
    points: Vec<Vec<f64>>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// `(C + jitter I)⁻¹ y_std`, correlation units.
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    pub diagnostics: GpDiagnostics,
}

fn length_scale_grid() -> impl Iterator<Item = f64> {
    // log-spaced from 0.02 to 3 in unit-box coordinates
    (0..30).map(|i| (0.02f64.ln() + (3.0f64.ln() - 0.02f64.ln()) * i as f64 / 29.0).exp())
}

/// Log likelihood, length-scale, signal variance, factor and weights of one
/// candidate fit.
type Fit = (f64, f64, f64, nalgebra::Cholesky<f64, nalgebra::Dyn>, DVector<f64>);

/// Fits the length scale by grid maximum likelihood; the signal variance is
/// profiled out in closed form at each grid point.
pub fn gp_fit(points: &[Vec<f64>], values: &[f64]) -> Result<Gp> {
    let n = points.len();
    if n == 0 || n != values.len() {
        return Err(Error::InvalidArgument(format!("{n} points for {} values", values.len())));
    }
    if n > 1 && points.iter().all(|p| dist(p, &points[0]) == 0.0) {
        return Err(Error::DegenerateKernel);
    }
    let y_mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let y = DVector::from_iterator(n, values.iter().map(|v| (v - y_mean) / y_scale));

    let mut best: Option<Fit> = None;
    for ell in length_scale_grid() {
        let c = DMatrix::from_fn(n, n, |i, j| {
            matern52(dist(&points[i], &points[j]), ell) + if i == j { JITTER } else { 0.0 }
        });
        let Some(chol) = c.cholesky() else {
            continue;
        };
        let alpha = chol.solve(&y);
        let quad = y.dot(&alpha).max(1e-300);
        let s2 = quad / n as f64;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let ll = -0.5 * n as f64 * s2.ln() - 0.5 * log_det - 0.5 * n as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        if best.as_ref().is_none_or(|b| ll > b.0) {
            best = Some((ll, ell, s2, chol, alpha));
        }
    }
    let (ll, ell, s2, chol, alpha) = best.ok_or(Error::DegenerateKernel)?;
    // a flat series profiles to zero variance; keep the prior at unit scale
    let s2 = if var > 0.0 { s2 } else { 1.0 };
    Ok(Gp {
        points: points.to_vec(),
        chol,
        alpha,
        y_mean,
        y_scale,
        diagnostics: GpDiagnostics {
            length_scale: ell,
            signal_variance: s2,
            log_likelihood: ll,
        },
    })
}

impl Gp {
    /// Posterior mean and standard deviation of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ell = self.diagnostics.length_scale;
        let k = DVector::from_iterator(self.points.len(), self.points.iter().map(|p| matern52(dist(p, x), ell)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let corr_var = (1.0 - k.dot(&v)).max(0.0);
        let sd = (self.diagnostics.signal_variance * corr_var).sqrt();
        (self.y_mean + self.y_scale * mean, self.y_scale * sd)
    }

    pub fn expected_improvement(&self, incumbent: f64, x: &[f64]) -> f64 {
        let (mu, sigma) = self.predict(x);
        expected_improvement(mu, sigma, incumbent)
    }
}

/// EI for minimization: `(inc − μ) Φ(z) + σ φ(z)`, `z = (inc − μ) / σ`.
pub fn expected_improvement(mu: f64, sigma: f64, incumbent: f64) -> f64 {
    if sigma.is_nan() || sigma <= 0.0 {
        return (incumbent - mu).max(0.0);
    }
    let n = Normal::standard();
    let z = (incumbent - mu) / sigma;
    ((incumbent - mu) * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Compass search on EI inside the unit square.
fn refine(gp: &Gp, incumbent: f64, start: [f64; 2], start_ei: f64) -> ([f64; 2], f64) {
    let (mut x, mut best) = (start, start_ei);
    let mut step = 0.05;
    while step > 1e-4 {
        let mut moved = false;
        for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let cand = [(x[0] + dx * step).clamp(0.0, 1.0), (x[1] + dy * step).clamp(0.0, 1.0)];
            let ei = gp.expected_improvement(incumbent, &cand);
            if ei > best {
                best = ei;
                x = cand;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, best)
}

/// Minimizes `objective` over `spec.bounds`. Evaluations are cached by the
/// exact parameter bits, so the objective is never called twice on a point.
pub fn optimize(mut objective: impl FnMut([f64; 2]) -> f64, spec: &SearchSpec) -> Result<OptResult> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cache: HashMap<[u64; 2], f64> = HashMap::new();
    let mut history: Vec<([f64; 2], f64)> = Vec::new();
    let mut diagnostics = Vec::new();

    let mut eval = |p: [f64; 2], history: &mut Vec<([f64; 2], f64)>| -> Result<()> {
        let key = [p[0].to_bits(), p[1].to_bits()];
        let value = match cache.get(&key) {
            Some(v) => *v,
            None => {
                let v = objective(p);
                if !v.is_finite() {
                    return Err(Error::ObjectiveNonFinite { point: p, value: v });
                }
                cache.insert(key, v);
                v
            }
        };
        history.push((p, value));
        Ok(())
    };

    let shift: [f64; 2] = [rng.random(), rng.random()];
    for i in 0..spec.n_init {
        let u = [(halton(i + 1, 2) + shift[0]) % 1.0, (halton(i + 1, 3) + shift[1]) % 1.0];
        eval(spec.point_at(u), &mut history)?;
    }

    for _ in 0..spec.n_iter {
        let unit: Vec<Vec<f64>> = history.iter().map(|(p, _)| spec.unit_of(*p).to_vec()).collect();
        let values: Vec<f64> = history.iter().map(|h| h.1).collect();
        let incumbent = values.iter().copied().fold(f64::INFINITY, f64::min);
        let gp = gp_fit(&unit, &values)?;
        diagnostics.push(gp.diagnostics);

        let mut scored: Vec<([f64; 2], f64)> = (0..CANDIDATES)
            .map(|_| {
                let c = [rng.random::<f64>(), rng.random::<f64>()];
                (c, gp.expected_improvement(incumbent, &c))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut refined: Vec<([f64; 2], f64)> = scored
            .iter()
            .take(LOCAL_STARTS)
            .map(|&(c, ei)| refine(&gp, incumbent, c, ei))
            .collect();
        refined.extend(scored);
        refined.sort_by(|a, b| b.1.total_cmp(&a.1));
        let seen = |u: &[f64; 2]| unit.iter().any(|p| dist(p, u) < 1e-9);
        let next = refined.iter().find(|(u, _)| !seen(u)).map(|r| r.0).unwrap_or([rng.random(), rng.random()]);
        eval(spec.point_at(next), &mut history)?;
    }

    let (best_point, best_value) = history
        .iter()
        .copied()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("n_init >= 1");
    Ok(OptResult {
        best_point,
        best_value,
        history,
        diagnostics,
    })
}
