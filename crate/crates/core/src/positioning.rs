//! Weighted k-nearest-neighbour positioning in RSRP space.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{position_error, LocalPoint};
use crate::mdt::{rsrp_in_range, Fingerprint, FingerprintDatabase, Pci};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WknnConfig {
    pub k: usize,
    /// Added to each distance before inversion, dB.
    pub epsilon: f64,
    /// Value imputed for undetected PCIs, dBm.
    pub missing_floor: f64,
    /// Compare only PCIs present in both fingerprints (mean absolute
    /// difference) instead of imputing.
    pub common_only: bool,
}

impl Default for WknnConfig {
    fn default() -> Self {
        WknnConfig {
            k: 5,
            epsilon: 1e-6,
            missing_floor: -130.0,
            common_only: false,
        }
    }
}

impl WknnConfig {
    pub fn with_k(k: usize) -> Self {
        WknnConfig {
            k,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("wKNN needs k >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("wKNN epsilon must be positive"));
        }
        if !rsrp_in_range(self.missing_floor) {
            return Err(Error::invalid(
                "missing-PCI floor must lie in [-160, -30] dBm",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub point: LocalPoint,
    pub neighbor_indices: Vec<usize>,
    /// Normalised weights, aligned with `neighbor_indices`.
    pub weights: Vec<f64>,
}

/// L1 distance over `universe`, absent entries imputed at `floor`.
pub fn fingerprint_distance(a: &Fingerprint, b: &Fingerprint, universe: &[Pci], floor: f64) -> f64 {
    universe
        .iter()
        .map(|&pci| (a.get(pci).unwrap_or(floor) - b.get(pci).unwrap_or(floor)).abs())
        .sum()
}

/// A database laid out as a dense `records × universe` matrix.
#[derive(Clone, Debug)]
pub struct WknnLocator<'a> {
    db: &'a FingerprintDatabase,
    cfg: WknnConfig,
    width: usize,
    /// Imputed values, or NaN for absent entries in common-only mode.
    dense: Vec<f64>,
}

impl<'a> WknnLocator<'a> {
    pub fn new(db: &'a FingerprintDatabase, cfg: WknnConfig) -> Result<Self> {
        cfg.validate()?;
        if db.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let width = db.pci_universe().len();
        let fill = if cfg.common_only {
            f64::NAN
        } else {
            cfg.missing_floor
        };
        let mut dense = Vec::with_capacity(db.len() * width);
        for r in db.records() {
            dense.extend(
                db.pci_universe()
                    .iter()
                    .map(|&pci| r.rsrp.get(pci).unwrap_or(fill)),
            );
        }
        Ok(WknnLocator {
            db,
            cfg,
            width,
            dense,
        })
    }

    pub fn config(&self) -> &WknnConfig {
        &self.cfg
    }

    fn query_vector(&self, query: &Fingerprint) -> Result<Vec<f64>> {
        let universe = self.db.pci_universe();
        if !query.pcis().any(|p| universe.binary_search(&p).is_ok()) {
            return Err(Error::Unlocatable);
        }
        let fill = if self.cfg.common_only {
            f64::NAN
        } else {
            self.cfg.missing_floor
        };
        Ok(universe
            .iter()
            .map(|&pci| query.get(pci).unwrap_or(fill))
            .collect())
    }

    /// Distance from the query vector to every record.
    fn distances(&self, q: &[f64]) -> Vec<f64> {
        self.dense
            .chunks_exact(self.width)
            .map(|row| {
                if self.cfg.common_only {
                    let mut sum = 0.0;
                    let mut n = 0usize;
                    for (a, b) in row.iter().zip(q) {
                        let d = (a - b).abs();
                        if !d.is_nan() {
                            sum += d;
                            n += 1;
                        }
                    }
                    if n == 0 {
                        f64::INFINITY
                    } else {
                        sum / n as f64
                    }
                } else {
                    row.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
                }
            })
            .collect()
    }

    pub fn locate(&self, query: &Fingerprint) -> Result<PositionEstimate> {
        let q = self.query_vector(query)?;
        let d = self.distances(&q);
        let mut idx: Vec<usize> = (0..d.len()).filter(|&i| d[i].is_finite()).collect();
        if idx.is_empty() {
            return Err(Error::Unlocatable);
        }
        let k = self.cfg.k.min(idx.len());
        let order = |a: &usize, b: &usize| d[*a].total_cmp(&d[*b]).then(a.cmp(b));
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        idx.sort_by(order);
        let raw: Vec<f64> = idx
            .iter()
            .map(|&i| 1.0 / (d[i] + self.cfg.epsilon))
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let (mut x, mut y) = (0.0, 0.0);
        for (&i, w) in idx.iter().zip(&weights) {
            let p = self.db.record(i).local;
            x += w * p.x;
            y += w * p.y;
        }
        Ok(PositionEstimate {
            point: LocalPoint::new(x, y),
            neighbor_indices: idx,
            weights,
        })
    }
}

pub fn wknn_locate(
    db: &FingerprintDatabase,
    query: &Fingerprint,
    cfg: &WknnConfig,
) -> Result<PositionEstimate> {
    WknnLocator::new(db, *cfg)?.locate(query)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositioningReport {
    /// Error of each located query in input order, meters.
    pub errors: Vec<f64>,
    /// Input index of each entry of `errors`.
    pub located: Vec<usize>,
    pub mean_error_m: f64,
    pub median_error_m: f64,
    pub unlocatable: usize,
}

/// Locates every query and scores it against `truth` (same frame as the database).
pub fn evaluate_queries(
    locator: &WknnLocator<'_>,
    queries: &[&Fingerprint],
    truth: &[LocalPoint],
) -> Result<PositioningReport> {
    if queries.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: queries.len(),
            right: truth.len(),
        });
    }
    if queries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let results: Vec<Option<f64>> = queries
        .par_iter()
        .zip(truth.par_iter())
        .map(|(q, t)| locator.locate(q).ok().map(|e| position_error(e.point, *t)))
        .collect();
    let mut errors = Vec::with_capacity(results.len());
    let mut located = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        if let Some(e) = r {
            errors.push(e);
            located.push(i);
        }
    }
    if errors.is_empty() {
        return Err(Error::Unlocatable);
    }
    let unlocatable = queries.len() - errors.len();
    let mean_error_m = errors.iter().sum::<f64>() / errors.len() as f64;
    let median_error_m = median(&errors);
    Ok(PositioningReport {
        errors,
        located,
        mean_error_m,
        median_error_m,
        unlocatable,
    })
}

/// Positions every test record against `db`; ground truth is the record's own
/// location expressed in the database frame.
pub fn evaluate_positioning(
    db: &FingerprintDatabase,
    test: &FingerprintDatabase,
    cfg: &WknnConfig,
) -> Result<PositioningReport> {
    let locator = WknnLocator::new(db, *cfg)?;
    let truth = test
        .records()
        .iter()
        .map(|r| db.projection().project(r.location))
        .collect::<Result<Vec<_>>>()?;
    let queries: Vec<&Fingerprint> = test.records().iter().map(|r| &r.rsrp).collect();
    evaluate_queries(&locator, &queries, &truth)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Writes one error per line under an `error_m` header.
pub fn write_errors_csv(errors: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("error_m\n");
    for e in errors {
        out.push_str(&format!("{e}\n"));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_errors_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "error_m" => {}
        _ => {
            return Err(Error::Schema(format!(
                "{}: expected 'error_m' header",
                path.display()
            )))
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|e| Error::Parse {
                row: i + 2,
                col: 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
