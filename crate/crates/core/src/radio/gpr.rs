//! Per-PCI Gaussian process regression baseline.
//!
//! Each PCI gets its own zero-mean GP on the residual from the PCI's training
//! mean. Hyperparameters are chosen by exhaustive search of the log marginal
//! likelihood over a fixed grid.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::linalg::solvers::{Llt, Solve};
use faer::{Col, Mat, Scale, Side};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Provenance, RadioPrediction, RadioPredictor};
use crate::error::{Error, Result};
use crate::geo::LocalPoint;
use crate::mdt::{clamp_rsrp, Fingerprint, FingerprintDatabase, Pci};
use crate::spatial::log_spaced;
use crate::stats::{derive_seed, make_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Squared exponential.
    Se,
    /// Rational quadratic.
    Rq,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Se => "se",
            KernelKind::Rq => "rq",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// σ_f², dB².
    pub signal_var: f64,
    /// ℓ, meters.
    pub length_scale: f64,
    /// σ_n², dB².
    pub noise_var: f64,
    /// RQ mixing parameter; ignored by SE.
    pub alpha: f64,
}

impl Hyper {
    fn validate(&self) -> Result<()> {
        let ok = self.signal_var > 0.0
            && self.length_scale > 0.0
            && self.noise_var >= 0.0
            && self.alpha > 0.0
            && [
                self.signal_var,
                self.length_scale,
                self.noise_var,
                self.alpha,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid GP hyperparameters {self:?}"
            )))
        }
    }
}

/// Kernel value at squared distance `r2` (m²).
pub fn kernel_value(kind: KernelKind, h: &Hyper, r2: f64) -> f64 {
    h.signal_var * unit_kernel(kind, h.length_scale, h.alpha, r2)
}

#[inline]
fn unit_kernel(kind: KernelKind, ell: f64, alpha: f64, r2: f64) -> f64 {
    match kind {
        KernelKind::Se => (-r2 / (2.0 * ell * ell)).exp(),
        KernelKind::Rq => (1.0 + r2 / (2.0 * alpha * ell * ell)).powf(-alpha),
    }
}

/// Candidate hyperparameters. Signal variances are multiples of each PCI's
/// target variance; everything else is absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub length_scales: Vec<f64>,
    pub signal_var_factors: Vec<f64>,
    pub noise_vars: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            length_scales: log_spaced(10.0, 5000.0, 8),
            signal_var_factors: vec![0.5, 1.0, 2.0],
            noise_vars: vec![0.1, 1.0, 10.0],
            alphas: vec![0.5, 1.0, 2.0],
        }
    }
}

impl HyperGrid {
    /// Candidates in search order; ties in marginal likelihood go to the earliest.
    fn candidates(&self, kind: KernelKind, target_var: f64) -> Vec<Hyper> {
        let alphas: &[f64] = match kind {
            KernelKind::Se => &[1.0],
            KernelKind::Rq => &self.alphas,
        };
        let mut out = Vec::new();
        for &length_scale in &self.length_scales {
            for &alpha in alphas {
                for &f in &self.signal_var_factors {
                    for &noise_var in &self.noise_vars {
                        out.push(Hyper {
                            signal_var: f * target_var,
                            length_scale,
                            noise_var,
                            alpha,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprConfig {
    pub kernel: KernelKind,
    pub grid: HyperGrid,
    pub subsample_cap: usize,
    /// PCIs observed fewer times are not fitted.
    pub min_observations: usize,
}

impl GprConfig {
    pub fn new(kernel: KernelKind) -> Self {
        GprConfig {
            kernel,
            grid: HyperGrid::default(),
            subsample_cap: 2000,
            min_observations: 5,
        }
    }
}

/// A GP fitted to one PCI.
#[derive(Clone, Debug)]
pub struct GprPci {
    kind: KernelKind,
    hyper: Hyper,
    prior_mean: f64,
    inputs: Vec<LocalPoint>,
    /// `(K + σ_n² I)⁻¹ (y − mean)`.
    weights: Col<f64>,
    chol: Llt<f64>,
    log_marginal: f64,
    jitter: f64,
}

impl GprPci {
    /// Fits with fixed hyperparameters and prior mean.
    pub fn fit_fixed(
        kind: KernelKind,
        hyper: Hyper,
        prior_mean: f64,
        inputs: &[LocalPoint],
        targets: &[f64],
    ) -> Result<Self> {
        hyper.validate()?;
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: targets.len(),
            });
        }
        let r2 = pairwise_sq(inputs);
        let base = unit_gram(&r2, inputs.len(), kind, hyper.length_scale, hyper.alpha);
        let resid = Col::from_fn(targets.len(), |i| targets[i] - prior_mean);
        let (chol, weights, log_marginal, jitter) =
            solve(&base, &resid, hyper.signal_var, hyper.noise_var)
                .ok_or(Error::IllConditioned { pci: 0 })?;
        Ok(GprPci {
            kind,
            hyper,
            prior_mean,
            inputs: inputs.to_vec(),
            weights,
            chol,
            log_marginal,
            jitter,
        })
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    fn cross(&self, p: LocalPoint) -> Col<f64> {
        Col::from_fn(self.inputs.len(), |i| {
            kernel_value(self.kind, &self.hyper, self.inputs[i].distance_sq(&p))
        })
    }

    /// Posterior mean in dBm.
    pub fn mean(&self, p: LocalPoint) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.inputs.iter().zip(self.weights.iter()) {
            acc += w * kernel_value(self.kind, &self.hyper, x.distance_sq(&p));
        }
        self.prior_mean + acc
    }

    /// Posterior variance of the latent function, dB².
    pub fn variance(&self, p: LocalPoint) -> f64 {
        let mut v = self.cross(p);
        self.chol
            .L()
            .solve_lower_triangular_in_place(v.as_mat_mut());
        (self.hyper.signal_var - v.squared_norm_l2()).max(0.0)
    }
}

fn pairwise_sq(xs: &[LocalPoint]) -> Vec<f64> {
    let n = xs.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let d = xs[i].distance_sq(&xs[j]);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

fn unit_gram(r2: &[f64], n: usize, kind: KernelKind, ell: f64, alpha: f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| unit_kernel(kind, ell, alpha, r2[i * n + j]))
}

/// Cholesky of `σ_f² B + σ_n² I`, escalating diagonal jitter from 1e-8 to
/// 1e-4 of the mean diagonal. Returns the factor, weights, log marginal
/// likelihood and the jitter that was needed.
fn solve(
    base: &Mat<f64>,
    resid: &Col<f64>,
    signal_var: f64,
    noise_var: f64,
) -> Option<(Llt<f64>, Col<f64>, f64, f64)> {
    let n = resid.nrows();
    let mean_diag = signal_var + noise_var;
    let jitters = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
    for &j in &jitters {
        let diag = noise_var + j * mean_diag;
        let mut k = Scale(signal_var) * base;
        for i in 0..n {
            k[(i, i)] += diag;
        }
        if let Ok(chol) = k.llt(Side::Lower) {
            let w = chol.solve(resid);
            let l = chol.L();
            let log_det: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
            let fit: f64 = (0..n).map(|i| resid[i] * w[i]).sum();
            let lml = -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();
            if lml.is_finite() {
                return Some((chol, w, lml, j * mean_diag));
            }
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    TooFewObservations(usize),
    IllConditioned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPci {
    pub pci: Pci,
    pub reason: SkipReason,
}

/// Per-PCI GPs for every PCI with enough data.
#[derive(Clone, Debug)]
pub struct GprModel {
    kind: KernelKind,
    per_pci: BTreeMap<Pci, GprPci>,
    skipped: Vec<SkippedPci>,
}

impl GprModel {
    pub fn kernel(&self) -> KernelKind {
        self.kind
    }

    pub fn fitted(&self) -> &BTreeMap<Pci, GprPci> {
        &self.per_pci
    }

    pub fn skipped(&self) -> &[SkippedPci] {
        &self.skipped
    }
}

/// Searches the grid for one PCI; `None` if every candidate was ill-conditioned.
fn fit_one(
    kind: KernelKind,
    grid: &HyperGrid,
    inputs: Vec<LocalPoint>,
    targets: &[f64],
) -> Option<GprPci> {
    let n = targets.len();
    let mean = targets.iter().sum::<f64>() / n as f64;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    // a constant PCI still needs a positive signal variance
    let target_var = var.max(1e-6);
    let resid = Col::from_fn(n, |i| targets[i] - mean);
    let r2 = pairwise_sq(&inputs);
    // hyper, factor, weights, log marginal likelihood, jitter
    #[allow(clippy::type_complexity)]
    let mut best: Option<(Hyper, Llt<f64>, Col<f64>, f64, f64)> = None;
    let mut base_key = (f64::NAN, f64::NAN);
    let mut base = Mat::zeros(0, 0);
    for h in grid.candidates(kind, target_var) {
        if base_key != (h.length_scale, h.alpha) {
            base = unit_gram(&r2, n, kind, h.length_scale, h.alpha);
            base_key = (h.length_scale, h.alpha);
        }
        if let Some((chol, w, lml, jitter)) = solve(&base, &resid, h.signal_var, h.noise_var) {
            if best.as_ref().is_none_or(|b| lml > b.3) {
                best = Some((h, chol, w, lml, jitter));
            }
        }
    }
    best.map(|(hyper, chol, weights, log_marginal, jitter)| GprPci {
        kind,
        hyper,
        prior_mean: mean,
        inputs,
        weights,
        chol,
        log_marginal,
        jitter,
    })
}

/// Fits one GP per PCI of `db`. Observations beyond `subsample_cap` are
/// subsampled uniformly with a per-PCI seeded stream.
pub fn gpr_fit(db: &FingerprintDatabase, cfg: &GprConfig, seed: u64) -> Result<GprModel> {
    if db.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.subsample_cap == 0 {
        return Err(Error::invalid("subsample cap must be positive"));
    }
    let mut obs: BTreeMap<Pci, (Vec<LocalPoint>, Vec<f64>)> = BTreeMap::new();
    for r in db.records() {
        for (pci, v) in r.rsrp.iter() {
            let e = obs.entry(pci).or_default();
            e.0.push(r.local);
            e.1.push(v);
        }
    }
    let jobs: Vec<(Pci, Vec<LocalPoint>, Vec<f64>)> = obs
        .into_iter()
        .map(|(pci, (xs, ys))| {
            if xs.len() <= cfg.subsample_cap {
                return (pci, xs, ys);
            }
            let mut rng = make_rng(derive_seed(seed, &[pci as u64]), 0);
            let mut idx = sample(&mut rng, xs.len(), cfg.subsample_cap).into_vec();
            idx.sort_unstable();
            (
                pci,
                idx.iter().map(|&i| xs[i]).collect(),
                idx.iter().map(|&i| ys[i]).collect(),
            )
        })
        .collect();
    let results: Vec<(Pci, std::result::Result<GprPci, SkipReason>)> = jobs
        .into_par_iter()
        .map(|(pci, xs, ys)| {
            if xs.len() < cfg.min_observations {
                return (pci, Err(SkipReason::TooFewObservations(xs.len())));
            }
            match fit_one(cfg.kernel, &cfg.grid, xs, &ys) {
                Some(m) => (pci, Ok(m)),
                None => (pci, Err(SkipReason::IllConditioned)),
            }
        })
        .collect();
    let mut per_pci = BTreeMap::new();
    let mut skipped = Vec::new();
    for (pci, r) in results {
        match r {
            Ok(m) => {
                per_pci.insert(pci, m);
            }
            Err(reason) => skipped.push(SkippedPci { pci, reason }),
        }
    }
    if per_pci.is_empty() {
        if let Some(s) = skipped
            .iter()
            .find(|s| s.reason == SkipReason::IllConditioned)
        {
            return Err(Error::IllConditioned { pci: s.pci });
        }
        return Err(Error::InsufficientData(format!(
            "no PCI has {} or more observations",
            cfg.min_observations
        )));
    }
    Ok(GprModel {
        kind: cfg.kernel,
        per_pci,
        skipped,
    })
}

impl RadioPredictor for GprModel {
    /// Posterior mean for every fitted PCI; skipped PCIs stay absent.
    fn predict(&self, p: LocalPoint, _ordinal: u64) -> RadioPrediction {
        let mut clamped = 0;
        let rsrp: Fingerprint = self
            .per_pci
            .iter()
            .map(|(&pci, m)| {
                let (v, hit) = clamp_rsrp(m.mean(p));
                clamped += hit as usize;
                (pci, v)
            })
            .collect();
        RadioPrediction {
            rsrp,
            provenance: Provenance::Gpr { kernel: self.kind },
            clamped,
        }
    }

    fn name(&self) -> String {
        format!("gpr_{}", self.kind.name())
    }
}
