//! Full-covariance Gaussian mixture fitted by EM, with K picked by BIC.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LocalPoint;
use crate::stats::make_rng;

/// Symmetric 2×2 covariance in m².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn isotropic(var: f64) -> Self {
        Cov2 {
            xx: var,
            xy: 0.0,
            yy: var,
        }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let r = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - r, mean + r)
    }

    /// Raises every eigenvalue to at least `min_eig`, keeping eigenvectors.
    pub fn floored(&self, min_eig: f64) -> Cov2 {
        let (l1, l2) = self.eigenvalues();
        if l1 >= min_eig {
            return *self;
        }
        // eigenvector of the larger eigenvalue
        let (vx, vy) = if self.xy.abs() > 1e-300 {
            let (x, y) = (l2 - self.yy, self.xy);
            let n = x.hypot(y);
            (x / n, y / n)
        } else if self.xx >= self.yy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let (a, b) = (l2.max(min_eig), l1.max(min_eig));
        // a·v vᵀ + b·w wᵀ with w ⟂ v
        Cov2 {
            xx: a * vx * vx + b * vy * vy,
            xy: (a - b) * vx * vy,
            yy: a * vy * vy + b * vx * vx,
        }
    }

    fn mahalanobis_sq(&self, dx: f64, dy: f64) -> f64 {
        (self.yy * dx * dx - 2.0 * self.xy * dx * dy + self.xx * dy * dy) / self.det()
    }

    fn log_normalizer(&self) -> f64 {
        -(2.0 * PI).ln() - 0.5 * self.det().ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<LocalPoint>,
    pub covariances: Vec<Cov2>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<LocalPoint>, covariances: Vec<Cov2>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::invalid(
                "GMM needs matching non-empty weights, means and covariances",
            ));
        }
        if weights.iter().any(|w| w.is_nan() || *w < 0.0)
            || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::invalid("GMM weights must form a simplex"));
        }
        if covariances.iter().any(|c| !(c.det() > 0.0 && c.xx > 0.0)) {
            return Err(Error::invalid("GMM covariances must be positive definite"));
        }
        Ok(GmmModel {
            weights,
            means,
            covariances,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    fn component_log_pdf(&self, j: usize, p: LocalPoint) -> f64 {
        let c = &self.covariances[j];
        let (dx, dy) = (p.x - self.means[j].x, p.y - self.means[j].y);
        c.log_normalizer() - 0.5 * c.mahalanobis_sq(dx, dy)
    }

    pub fn density(&self, p: LocalPoint) -> f64 {
        (0..self.k())
            .map(|j| self.weights[j] * self.component_log_pdf(j, p).exp())
            .sum()
    }

    pub fn log_density(&self, p: LocalPoint) -> f64 {
        let terms: Vec<f64> = (0..self.k())
            .map(|j| self.weights[j].ln() + self.component_log_pdf(j, p))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn log_likelihood(&self, points: &[LocalPoint]) -> f64 {
        points.iter().map(|&p| self.log_density(p)).sum()
    }

    /// Component by weight, then a correlated Gaussian draw via the 2×2 Cholesky factor.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<LocalPoint> {
        let mut rng = make_rng(seed, 0);
        let factors: Vec<(f64, f64, f64)> = self
            .covariances
            .iter()
            .map(|c| {
                let l11 = c.xx.sqrt();
                let l21 = c.xy / l11;
                let l22 = (c.yy - l21 * l21).max(0.0).sqrt();
                (l11, l21, l22)
            })
            .collect();
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut j = self.k() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        j = i;
                        break;
                    }
                }
                let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let (l11, l21, l22) = factors[j];
                self.means[j].offset(l11 * z1, l21 * z1 + l22 * z2)
            })
            .collect()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Relative log-likelihood change that stops EM.
    pub tol: f64,
    pub max_iter: usize,
    /// Eigenvalue floor for every covariance, m².
    pub min_eigenvalue: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-6,
            max_iter: 500,
            min_eigenvalue: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmRun {
    pub model: GmmModel,
    /// Log-likelihood before each M-step, then the final value.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl EmRun {
    pub fn log_likelihood(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmCandidate {
    pub k: usize,
    pub log_likelihood: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    pub candidates: Vec<GmmCandidate>,
    pub chosen: usize,
}

/// Free parameters of a 2-D full-covariance mixture: `6K − 1`.
pub fn gmm_parameter_count(k: usize) -> usize {
    6 * k - 1
}

pub fn bic(log_likelihood: f64, k: usize, m: usize) -> f64 {
    -2.0 * log_likelihood + gmm_parameter_count(k) as f64 * (m as f64).ln()
}

/// K from 1 to 16.
pub fn default_k_grid() -> Vec<usize> {
    (1..=16).collect()
}

/// Seeded farthest-point seeding: a random first mean, then repeatedly the
/// point farthest from all chosen means.
fn farthest_point_means(points: &[LocalPoint], k: usize, seed: u64) -> Vec<LocalPoint> {
    let mut rng = make_rng(seed, 0);
    let first = rng.random_range(0..points.len());
    let mut means = vec![points[first]];
    let mut min_d: Vec<f64> = points
        .iter()
        .map(|p| p.distance_sq(&points[first]))
        .collect();
    while means.len() < k {
        let mut best = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[best] {
                best = i;
            }
        }
        let c = points[best];
        means.push(c);
        for (d, p) in min_d.iter_mut().zip(points) {
            *d = d.min(p.distance_sq(&c));
        }
    }
    means
}

fn sample_covariance(points: &[LocalPoint]) -> Cov2 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mut c = Cov2::isotropic(0.0);
    for p in points {
        c.xx += (p.x - mx).powi(2);
        c.xy += (p.x - mx) * (p.y - my);
        c.yy += (p.y - my).powi(2);
    }
    Cov2 {
        xx: c.xx / n,
        xy: c.xy / n,
        yy: c.yy / n,
    }
}

/// EM for a fixed number of components.
pub fn fit_em(points: &[LocalPoint], k: usize, seed: u64, opts: &EmOptions) -> Result<EmRun> {
    if k == 0 || points.len() < 2 * k {
        return Err(Error::InsufficientData(format!(
            "GMM with K = {k} needs at least {} points, got {}",
            2 * k,
            points.len()
        )));
    }
    let n = points.len();
    let global = sample_covariance(points).floored(opts.min_eigenvalue);
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: farthest_point_means(points, k, seed),
        covariances: vec![global; k],
    };
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut logp = vec![0.0; k];
    for _ in 0..opts.max_iter {
        // E-step
        let mut ll = 0.0;
        for (i, &p) in points.iter().enumerate() {
            for (j, lp) in logp.iter_mut().enumerate() {
                *lp = model.weights[j].ln() + model.component_log_pdf(j, p);
            }
            let lse = log_sum_exp(&logp);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (logp[j] - lse).exp();
            }
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if (ll - prev).abs() <= opts.tol * prev.abs() {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        // M-step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk < 1e-10 {
                // empty component: keep its parameters, drop its mass
                model.weights[j] = 0.0;
                continue;
            }
            let mut mx = 0.0;
            let mut my = 0.0;
            for (i, p) in points.iter().enumerate() {
                mx += resp[i * k + j] * p.x;
                my += resp[i * k + j] * p.y;
            }
            let mean = LocalPoint::new(mx / nk, my / nk);
            let mut c = Cov2::isotropic(0.0);
            for (i, p) in points.iter().enumerate() {
                let r = resp[i * k + j];
                let (dx, dy) = (p.x - mean.x, p.y - mean.y);
                c.xx += r * dx * dx;
                c.xy += r * dx * dy;
                c.yy += r * dy * dy;
            }
            model.means[j] = mean;
            model.covariances[j] = Cov2 {
                xx: c.xx / nk,
                xy: c.xy / nk,
                yy: c.yy / nk,
            }
            .floored(opts.min_eigenvalue);
            model.weights[j] = nk / n as f64;
        }
        let total: f64 = model.weights.iter().sum();
        for w in &mut model.weights {
            *w /= total;
        }
    }
    if !converged {
        trace.push(model.log_likelihood(points));
    }
    // zero-weight components carry no density; drop them
    if model.weights.contains(&0.0) {
        let keep: Vec<usize> = (0..k).filter(|&j| model.weights[j] > 0.0).collect();
        model = GmmModel {
            weights: keep.iter().map(|&j| model.weights[j]).collect(),
            means: keep.iter().map(|&j| model.means[j]).collect(),
            covariances: keep.iter().map(|&j| model.covariances[j]).collect(),
        };
    }
    Ok(EmRun {
        model,
        trace,
        converged,
    })
}

/// Fits every K in `k_grid` and keeps the lowest BIC (ties to smaller K).
pub fn gmm_fit(
    points: &[LocalPoint],
    k_grid: &[usize],
    seed: u64,
    opts: &EmOptions,
) -> Result<GmmFit> {
    let max_k = *k_grid
        .iter()
        .max()
        .ok_or_else(|| Error::invalid("empty K grid"))?;
    if points.len() < 2 * max_k {
        return Err(Error::InsufficientData(format!(
            "GMM selection up to K = {max_k} needs at least {} points, got {}",
            2 * max_k,
            points.len()
        )));
    }
    let mut candidates = Vec::with_capacity(k_grid.len());
    let mut models = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let run = fit_em(points, k, seed, opts)?;
        let ll = run.log_likelihood();
        candidates.push(GmmCandidate {
            k,
            log_likelihood: ll,
            bic: bic(ll, k, points.len()),
            iterations: run.trace.len(),
            converged: run.converged,
        });
        models.push(run.model);
    }
    let mut chosen = 0;
    for (i, c) in candidates.iter().enumerate() {
        let best = &candidates[chosen];
        if c.bic < best.bic || (c.bic == best.bic && c.k < best.k) {
            chosen = i;
        }
    }
    Ok(GmmFit {
        model: models.swap_remove(chosen),
        candidates,
        chosen,
    })
}
