//! Fingerprints for synthetic locations: nearest-record transfer with
//! shadowing, per-PCI GP regression, and MAE scoring against held-out records.

mod gpr;
mod nn;
mod transfer;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LocalPoint;
use crate::mdt::{Fingerprint, FingerprintDatabase, Pci};

pub use gpr::{
    gpr_fit, kernel_value, GprConfig, GprModel, GprPci, Hyper, HyperGrid, KernelKind, SkipReason,
    SkippedPci,
};
pub use nn::{nearest_linear, NearestNeighbors};
pub use transfer::{knn_transfer, nearest_index, KnnTransfer, ShadowingSpec, TransferConfig};

/// Which model produced a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Copied from this reference record.
    Knn {
        record: usize,
    },
    Gpr {
        kernel: KernelKind,
    },
}

/// Sparse RSRP prediction. KNN emits exactly the PCIs of its source record;
/// GPR emits every fitted PCI.
#[derive(Clone, Debug, PartialEq)]
pub struct RadioPrediction {
    pub rsrp: Fingerprint,
    pub provenance: Provenance,
    /// Values pulled back into the valid RSRP range.
    pub clamped: usize,
}

/// A fitted fingerprint model. `ordinal` selects the random stream of the
/// query so batch results do not depend on evaluation order.
pub trait RadioPredictor: Sync {
    fn predict(&self, p: LocalPoint, ordinal: u64) -> RadioPrediction;
    fn name(&self) -> String;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadioKind {
    Knn,
    GprSe,
    GprRq,
}

impl RadioKind {
    pub fn name(self) -> &'static str {
        match self {
            RadioKind::Knn => "knn",
            RadioKind::GprSe => "gpr_se",
            RadioKind::GprRq => "gpr_rq",
        }
    }

    pub fn kernel(self) -> Option<KernelKind> {
        match self {
            RadioKind::Knn => None,
            RadioKind::GprSe => Some(KernelKind::Se),
            RadioKind::GprRq => Some(KernelKind::Rq),
        }
    }
}

impl std::str::FromStr for RadioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(RadioKind::Knn),
            "gpr_se" => Ok(RadioKind::GprSe),
            "gpr_rq" => Ok(RadioKind::GprRq),
            _ => Err(Error::invalid(format!(
                "unknown radio model '{s}' (expected knn, gpr_se or gpr_rq)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisStats {
    pub generated: usize,
    pub clamped_values: usize,
    /// Locations for which the model produced no PCI at all.
    pub empty: usize,
}

/// Predicts a fingerprint for each location, query `i` using ordinal
/// `first_ordinal + i`. Locations with an empty prediction are dropped and counted.
pub fn synthesize(
    predictor: &dyn RadioPredictor,
    locations: &[LocalPoint],
    first_ordinal: u64,
) -> (Vec<(LocalPoint, Fingerprint)>, SynthesisStats) {
    let preds: Vec<RadioPrediction> = locations
        .par_iter()
        .enumerate()
        .map(|(i, &p)| predictor.predict(p, first_ordinal + i as u64))
        .collect();
    let mut stats = SynthesisStats::default();
    let mut out = Vec::with_capacity(preds.len());
    for (p, pred) in locations.iter().zip(preds) {
        stats.clamped_values += pred.clamped;
        if pred.rsrp.is_empty() {
            stats.empty += 1;
        } else {
            stats.generated += 1;
            out.push((*p, pred.rsrp));
        }
    }
    (out, stats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PciMae {
    pub mae_db: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub model: String,
    /// Mean over every scored (record, PCI) pair.
    pub mae_db: f64,
    pub per_pci: BTreeMap<Pci, PciMae>,
    pub pairs: usize,
    /// Scored pairs over observed pairs.
    pub coverage: f64,
}

/// Scores `predictor` on the observed PCIs of every test record. Test record
/// `i` is queried with ordinal `i`.
pub fn mae_evaluate(
    predictor: &dyn RadioPredictor,
    test: &FingerprintDatabase,
) -> Result<MaeReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds: Vec<RadioPrediction> = test
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, r)| predictor.predict(r.local, i as u64))
        .collect();
    let mut per: BTreeMap<Pci, (f64, usize)> = BTreeMap::new();
    let mut observed = 0usize;
    for (r, pred) in test.records().iter().zip(&preds) {
        for (pci, truth) in r.rsrp.iter() {
            observed += 1;
            if let Some(v) = pred.rsrp.get(pci) {
                let e = per.entry(pci).or_insert((0.0, 0));
                e.0 += (v - truth).abs();
                e.1 += 1;
            }
        }
    }
    let pairs: usize = per.values().map(|e| e.1).sum();
    if pairs == 0 {
        return Err(Error::NoOverlap);
    }
    let total: f64 = per.values().map(|e| e.0).sum();
    Ok(MaeReport {
        model: predictor.name(),
        mae_db: total / pairs as f64,
        per_pci: per
            .into_iter()
            .map(|(pci, (s, n))| {
                (
                    pci,
                    PciMae {
                        mae_db: s / n as f64,
                        pairs: n,
                    },
                )
            })
            .collect(),
        pairs,
        coverage: pairs as f64 / observed as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;

    /// Returns each test record's fingerprint shifted per PCI.
    struct Shifted<'a> {
        db: &'a FingerprintDatabase,
        shift: BTreeMap<(usize, Pci), f64>,
    }

    impl RadioPredictor for Shifted<'_> {
        fn predict(&self, p: LocalPoint, _: u64) -> RadioPrediction {
            let j = nearest_linear(&self.db.locals(), p).unwrap();
            let rsrp = self
                .db
                .record(j)
                .rsrp
                .iter()
                .map(|(pci, v)| (pci, v + self.shift.get(&(j, pci)).copied().unwrap_or(0.0)))
                .collect();
            RadioPrediction {
                rsrp,
                provenance: Provenance::Knn { record: j },
                clamped: 0,
            }
        }
        fn name(&self) -> String {
            "shifted".into()
        }
    }

    fn db3() -> FingerprintDatabase {
        let fp = |pairs: &[(u32, f64)]| pairs.iter().copied().collect::<Fingerprint>();
        FingerprintDatabase::new(
            vec![
                (
                    GeoPoint::new(44.0, 11.0).unwrap(),
                    fp(&[(1, -80.0), (2, -90.0)]),
                ),
                (GeoPoint::new(44.001, 11.0).unwrap(), fp(&[(1, -85.0)])),
                (GeoPoint::new(44.002, 11.0).unwrap(), fp(&[(2, -99.0)])),
            ],
            None,
            &[],
        )
        .unwrap()
    }

    #[test]
    fn exact_copy_scores_zero() {
        let db = db3();
        let p = Shifted {
            db: &db,
            shift: BTreeMap::new(),
        };
        let r = mae_evaluate(&p, &db).unwrap();
        assert_eq!(r.mae_db, 0.0);
        assert_eq!(r.coverage, 1.0);
    }

    #[test]
    fn constant_bias() {
        let db = db3();
        let shift = [((0, 1), 2.0), ((0, 2), 2.0), ((1, 1), 2.0), ((2, 2), 2.0)]
            .into_iter()
            .collect();
        let r = mae_evaluate(&Shifted { db: &db, shift }, &db).unwrap();
        assert!((r.mae_db - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_errors() {
        let db = db3();
        // errors 1 and 3 on record 0, none on record 1, 2 on record 2
        let shift = [((0, 1), 1.0), ((0, 2), -3.0), ((2, 2), 2.0)]
            .into_iter()
            .collect();
        let r = mae_evaluate(&Shifted { db: &db, shift }, &db).unwrap();
        assert!((r.mae_db - 6.0 / 4.0).abs() < 1e-12);
        assert_eq!(r.per_pci[&1].mae_db, 0.5);
        assert_eq!(r.per_pci[&2].mae_db, 2.5);
    }

    #[test]
    fn three_pairs_average() {
        // three records, two PCIs, three observed pairs with errors {1, 3, 2}
        let fp = |pairs: &[(u32, f64)]| pairs.iter().copied().collect::<Fingerprint>();
        let db = FingerprintDatabase::new(
            vec![
                (GeoPoint::new(44.0, 11.0).unwrap(), fp(&[(1, -80.0)])),
                (GeoPoint::new(44.001, 11.0).unwrap(), fp(&[(2, -85.0)])),
                (GeoPoint::new(44.002, 11.0).unwrap(), fp(&[(1, -99.0)])),
            ],
            None,
            &[],
        )
        .unwrap();
        let shift = [((0, 1), 1.0), ((1, 2), -3.0), ((2, 1), 2.0)]
            .into_iter()
            .collect();
        let r = mae_evaluate(&Shifted { db: &db, shift }, &db).unwrap();
        assert!((r.mae_db - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_is_an_error() {
        let db = db3();
        let other = FingerprintDatabase::new(
            vec![(
                GeoPoint::new(44.0, 11.0).unwrap(),
                [(9, -70.0)].into_iter().collect(),
            )],
            None,
            &[],
        )
        .unwrap();
        let p = Shifted {
            db: &db,
            shift: BTreeMap::new(),
        };
        assert!(matches!(mae_evaluate(&p, &other), Err(Error::NoOverlap)));
    }
}
