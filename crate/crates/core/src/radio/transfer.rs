use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::NearestNeighbors;
use super::{Provenance, RadioPrediction, RadioPredictor};
use crate::error::{Error, Result};
use crate::geo::LocalPoint;
use crate::mdt::{clamp_rsrp, Fingerprint, FingerprintDatabase};
use crate::stats::make_rng;

/// Additive Gaussian shadowing in dB applied to each transferred value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowingSpec {
    pub sigma2_db: f64,
    pub seed: u64,
}

impl ShadowingSpec {
    pub fn new(sigma2_db: f64, seed: u64) -> Result<Self> {
        let s = ShadowingSpec { sigma2_db, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn none() -> Self {
        ShadowingSpec {
            sigma2_db: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_db >= 0.0 && self.sigma2_db.is_finite()) {
            return Err(Error::invalid(format!(
                "shadowing variance must be non-negative, got {}",
                self.sigma2_db
            )));
        }
        Ok(())
    }
}

/// Neighbour settings for the transfer. The default copies the single nearest
/// record; `k > 1` averages each PCI of the nearest record over the `k`
/// nearest records that carry it, weighted by inverse distance when `idw` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub k: usize,
    pub idw: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig { k: 1, idw: false }
    }
}

/// Nearest-record fingerprint transfer over a fixed reference database.
#[derive(Clone, Debug)]
pub struct KnnTransfer<'a> {
    db: &'a FingerprintDatabase,
    index: NearestNeighbors,
    cfg: TransferConfig,
    shadow: ShadowingSpec,
}

impl<'a> KnnTransfer<'a> {
    pub fn new(
        db: &'a FingerprintDatabase,
        cfg: TransferConfig,
        shadow: ShadowingSpec,
    ) -> Result<Self> {
        if cfg.k == 0 {
            return Err(Error::invalid("transfer needs k >= 1"));
        }
        shadow.validate()?;
        Ok(KnnTransfer {
            db,
            index: NearestNeighbors::new(db.locals())?,
            cfg,
            shadow,
        })
    }

    pub fn shadowing(&self) -> &ShadowingSpec {
        &self.shadow
    }

    pub fn with_shadowing(mut self, shadow: ShadowingSpec) -> Result<Self> {
        shadow.validate()?;
        self.shadow = shadow;
        Ok(self)
    }

    pub fn nearest_index(&self, p: LocalPoint) -> usize {
        self.index.nearest(p)
    }

    fn base_fingerprint(&self, p: LocalPoint, j: usize) -> Fingerprint {
        let own = &self.db.record(j).rsrp;
        if self.cfg.k == 1 {
            return own.clone();
        }
        let neighbours = k_nearest(self.index.points(), p, self.cfg.k);
        own.pcis()
            .map(|pci| {
                let mut num = 0.0;
                let mut den = 0.0;
                for &(i, d) in &neighbours {
                    if let Some(v) = self.db.record(i).rsrp.get(pci) {
                        let w = if self.cfg.idw { 1.0 / (d + 1e-6) } else { 1.0 };
                        num += w * v;
                        den += w;
                    }
                }
                (pci, num / den)
            })
            .collect()
    }
}

impl RadioPredictor for KnnTransfer<'_> {
    fn predict(&self, p: LocalPoint, ordinal: u64) -> RadioPrediction {
        let j = self.index.nearest(p);
        let mut rsrp = self.base_fingerprint(p, j);
        let sigma = self.shadow.sigma2_db.sqrt();
        let mut clamped = 0;
        let mut rng = make_rng(self.shadow.seed, ordinal);
        for (_, v) in rsrp.iter_mut() {
            let s: f64 = rng.sample(StandardNormal);
            let (c, hit) = clamp_rsrp(*v + sigma * s);
            *v = c;
            clamped += hit as usize;
        }
        RadioPrediction {
            rsrp,
            provenance: Provenance::Knn { record: j },
            clamped,
        }
    }

    fn name(&self) -> String {
        if self.cfg.k == 1 {
            "knn".into()
        } else {
            format!("knn{}", self.cfg.k)
        }
    }
}

/// `k` nearest points by linear scan, ascending distance, ties to smaller index.
fn k_nearest(points: &[LocalPoint], q: LocalPoint, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points.iter().map(|p| p.distance(&q)).enumerate().collect();
    let k = k.min(all.len());
    all.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all
}

/// Index of the record nearest to `p`, ties to the smallest index.
pub fn nearest_index(db: &FingerprintDatabase, p: LocalPoint) -> Result<usize> {
    super::nn::nearest_linear(&db.locals(), p).ok_or(Error::EmptyDataset)
}

/// One-off transfer to `p`; the shadowing stream is `(shadow.seed, ordinal)`.
pub fn knn_transfer(
    db: &FingerprintDatabase,
    p: LocalPoint,
    shadow: &ShadowingSpec,
    ordinal: u64,
) -> Result<RadioPrediction> {
    let t = KnnTransfer::new(db, TransferConfig::default(), *shadow)?;
    Ok(t.predict(p, ordinal))
}
