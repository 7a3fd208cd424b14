use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LocalPoint;
use crate::stats::make_rng;

/// Isotropic bivariate Gaussian KDE over training locations (meters).
///
/// `f(p) = 1/m · Σ_i 1/(2πh²) · exp(-‖p − p_i‖² / (2h²))`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    centers: Vec<LocalPoint>,
    bandwidth_m: f64,
}

impl KdeModel {
    pub fn new(centers: Vec<LocalPoint>, bandwidth_m: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InsufficientData(
                "KDE needs at least one center".into(),
            ));
        }
        if !(bandwidth_m > 0.0 && bandwidth_m.is_finite()) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive, got {bandwidth_m}"
            )));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite KDE center"));
        }
        Ok(KdeModel {
            centers,
            bandwidth_m,
        })
    }

    pub fn centers(&self) -> &[LocalPoint] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth_m
    }

    pub fn density(&self, p: LocalPoint) -> f64 {
        let h2 = self.bandwidth_m * self.bandwidth_m;
        let norm = 1.0 / (2.0 * PI * h2 * self.centers.len() as f64);
        let sum: f64 = self
            .centers
            .iter()
            .map(|c| (-c.distance_sq(&p) / (2.0 * h2)).exp())
            .sum();
        norm * sum
    }

    /// Log-density via log-sum-exp, finite even where `density` underflows.
    pub fn log_density(&self, p: LocalPoint) -> f64 {
        log_density_at(&self.centers, self.bandwidth_m, p)
    }

    pub fn log_likelihood(&self, eval_set: &[LocalPoint]) -> Result<f64> {
        if eval_set.is_empty() {
            return Err(Error::InsufficientData("empty evaluation set".into()));
        }
        Ok(eval_set.iter().map(|&p| self.log_density(p)).sum())
    }

    /// Smoothed bootstrap: a uniformly chosen center plus `N(0, h²)` noise on
    /// each axis, which draws exactly from the fitted density.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<LocalPoint> {
        let mut rng = make_rng(seed, 0);
        let m = self.centers.len();
        (0..n)
            .map(|_| {
                let c = self.centers[rng.random_range(0..m)];
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                c.offset(self.bandwidth_m * dx, self.bandwidth_m * dy)
            })
            .collect()
    }
}

fn log_density_at(centers: &[LocalPoint], h: f64, p: LocalPoint) -> f64 {
    let inv = -1.0 / (2.0 * h * h);
    let max = centers
        .iter()
        .map(|c| c.distance_sq(&p) * inv)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = centers
        .iter()
        .map(|c| (c.distance_sq(&p) * inv - max).exp())
        .sum();
    max + sum.ln() - (2.0 * PI * h * h).ln() - (centers.len() as f64).ln()
}

/// Outcome of the validation-likelihood bandwidth search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSearch {
    pub grid: Vec<f64>,
    pub val_nll: Vec<f64>,
    pub chosen: usize,
}

impl BandwidthSearch {
    pub fn bandwidth(&self) -> f64 {
        self.grid[self.chosen]
    }
}

/// `count` log-spaced values between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// Twenty log-spaced bandwidths from 1 m to 1 km.
pub fn default_bandwidth_grid() -> Vec<f64> {
    log_spaced(1.0, 1000.0, 20)
}

/// Picks the grid bandwidth minimising the negative log-likelihood of `val`
/// under a KDE centred on `train`. Ties go to the smaller bandwidth.
pub fn select_bandwidth(
    train: &[LocalPoint],
    val: &[LocalPoint],
    grid: &[f64],
) -> Result<BandwidthSearch> {
    if grid.is_empty() {
        return Err(Error::invalid("empty bandwidth grid"));
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData(
            "bandwidth selection needs non-empty train and validation sets".into(),
        ));
    }
    if grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("bandwidth candidates must be positive"));
    }
    let val_nll: Vec<f64> = grid
        .par_iter()
        .map(|&h| {
            -val.iter()
                .map(|&p| log_density_at(train, h, p))
                .sum::<f64>()
        })
        .collect();
    let mut chosen = 0;
    for (i, &nll) in val_nll.iter().enumerate() {
        let best = val_nll[chosen];
        if nll < best || (nll == best && grid[i] < grid[chosen]) {
            chosen = i;
        }
    }
    Ok(BandwidthSearch {
        grid: grid.to_vec(),
        val_nll,
        chosen,
    })
}
