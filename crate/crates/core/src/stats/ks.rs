//! Two-sample Kolmogorov–Smirnov test for planar samples.
//!
//! The statistic is the Fasano–Franceschini quadrant variant: every point of
//! the pooled sample anchors four open quadrants, and the statistic is the
//! largest gap between the fractions of each sample falling in one quadrant.
//! The gaps found with anchors taken from A and from B are averaged. Open
//! quadrants leave points on the anchor lines uncounted, so identical samples
//! give exactly zero.
//!
//! No reliable closed-form null distribution exists in two dimensions, so
//! p-values come from a permutation test on the pooled sample.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LocalPoint;
use crate::stats::make_rng;

pub const KS_MIN_SAMPLE: usize = 10;
pub const DEFAULT_PERMUTATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

impl KsResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

pub fn ks2d_statistic(sample_a: &[LocalPoint], sample_b: &[LocalPoint]) -> Result<f64> {
    check_sizes(sample_a.len(), sample_b.len())?;
    Ok(quadrant_statistic(sample_a, sample_b))
}

fn check_sizes(na: usize, nb: usize) -> Result<()> {
    if na < KS_MIN_SAMPLE || nb < KS_MIN_SAMPLE {
        return Err(Error::InsufficientData(format!(
            "2-D KS test needs at least {KS_MIN_SAMPLE} points per sample (got {na} and {nb})"
        )));
    }
    Ok(())
}

#[derive(Default)]
struct Quadrants([u32; 4]);

impl Quadrants {
    #[inline]
    fn add(&mut self, anchor: &LocalPoint, p: &LocalPoint) {
        let q = match (
            p.x > anchor.x,
            p.x < anchor.x,
            p.y > anchor.y,
            p.y < anchor.y,
        ) {
            (true, _, true, _) => 0,
            (_, true, true, _) => 1,
            (_, true, _, true) => 2,
            (true, _, _, true) => 3,
            _ => return,
        };
        self.0[q] += 1;
    }
}

fn max_gap(anchors: &[LocalPoint], a: &[LocalPoint], b: &[LocalPoint]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut best = 0.0f64;
    for anchor in anchors {
        let mut qa = Quadrants::default();
        let mut qb = Quadrants::default();
        for p in a {
            qa.add(anchor, p);
        }
        for p in b {
            qb.add(anchor, p);
        }
        for k in 0..4 {
            let gap = (qa.0[k] as f64 / na - qb.0[k] as f64 / nb).abs();
            best = best.max(gap);
        }
    }
    best
}

/// The statistic without the sample-size check, for tiny hand-checked cases.
pub fn quadrant_statistic(a: &[LocalPoint], b: &[LocalPoint]) -> f64 {
    0.5 * (max_gap(a, a, b) + max_gap(b, a, b))
}

/// Permutation test: `p = (1 + #{D_perm >= D_obs}) / (n_permutations + 1)`.
///
/// Each permutation shuffles the pooled sample with its own RNG stream, so the
/// result does not depend on evaluation order.
pub fn ks2d_test(
    sample_a: &[LocalPoint],
    sample_b: &[LocalPoint],
    n_permutations: usize,
    seed: u64,
) -> Result<KsResult> {
    check_sizes(sample_a.len(), sample_b.len())?;
    let observed = quadrant_statistic(sample_a, sample_b);
    let pooled: Vec<LocalPoint> = sample_a.iter().chain(sample_b).copied().collect();
    let na = sample_a.len();
    // permuted statistics within rounding of the observed one count as ties
    let threshold = observed - 1e-12;
    let exceed = (0..n_permutations)
        .filter(|&i| {
            let mut perm = pooled.clone();
            perm.shuffle(&mut make_rng(seed, i as u64));
            let (pa, pb) = perm.split_at(na);
            quadrant_statistic(pa, pb) >= threshold
        })
        .count();
    Ok(KsResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (n_permutations + 1) as f64,
        n_permutations,
    })
}
