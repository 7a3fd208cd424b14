//! Density models over record locations and the synthetic-location sampler.

mod gmm;
mod kde;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LocalPoint;
use crate::mdt::FingerprintDatabase;
use crate::stats::make_rng;

pub use gmm::{
    bic, default_k_grid, fit_em, gmm_fit, gmm_parameter_count, Cov2, EmOptions, EmRun,
    GmmCandidate, GmmFit, GmmModel,
};
pub use kde::{default_bandwidth_grid, log_spaced, select_bandwidth, BandwidthSearch, KdeModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialKind {
    Kde,
    Gmm,
}

impl SpatialKind {
    pub fn name(self) -> &'static str {
        match self {
            SpatialKind::Kde => "kde",
            SpatialKind::Gmm => "gmm",
        }
    }
}

impl std::str::FromStr for SpatialKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kde" => Ok(SpatialKind::Kde),
            "gmm" => Ok(SpatialKind::Gmm),
            _ => Err(Error::invalid(format!(
                "unknown spatial model '{s}' (expected kde or gmm)"
            ))),
        }
    }
}

/// Settings for fitting either spatial model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialConfig {
    pub kind: SpatialKind,
    pub bandwidth_grid: Vec<f64>,
    /// Fraction of the training locations held out to score bandwidths.
    pub validation_frac: f64,
    pub k_grid: Vec<usize>,
    pub em: EmOptions,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            kind: SpatialKind::Kde,
            bandwidth_grid: default_bandwidth_grid(),
            validation_frac: 0.2,
            k_grid: default_k_grid(),
            em: EmOptions::default(),
        }
    }
}

impl SpatialConfig {
    pub fn of_kind(kind: SpatialKind) -> Self {
        SpatialConfig {
            kind,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpatialModel {
    Kde(KdeModel),
    Gmm(GmmModel),
}

/// A fitted model plus what the fit looked at.
#[derive(Clone, Debug)]
pub struct SpatialFit {
    pub model: SpatialModel,
    pub bandwidth_search: Option<BandwidthSearch>,
    pub gmm_candidates: Option<Vec<GmmCandidate>>,
}

impl SpatialModel {
    pub fn kind(&self) -> SpatialKind {
        match self {
            SpatialModel::Kde(_) => SpatialKind::Kde,
            SpatialModel::Gmm(_) => SpatialKind::Gmm,
        }
    }

    pub fn density(&self, p: LocalPoint) -> f64 {
        match self {
            SpatialModel::Kde(m) => m.density(p),
            SpatialModel::Gmm(m) => m.density(p),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<LocalPoint> {
        match self {
            SpatialModel::Kde(m) => m.sample(n, seed),
            SpatialModel::Gmm(m) => m.sample(n, seed),
        }
    }
}

/// Fits the configured model to `points`.
///
/// The KDE bandwidth is scored on a seeded hold-out of `validation_frac` of the
/// points; the final KDE is then centred on all of them.
pub fn fit_spatial(points: &[LocalPoint], cfg: &SpatialConfig, seed: u64) -> Result<SpatialFit> {
    match cfg.kind {
        SpatialKind::Kde => {
            let (train, val) = holdout(points, cfg.validation_frac, seed)?;
            let search = select_bandwidth(&train, &val, &cfg.bandwidth_grid)?;
            let model = KdeModel::new(points.to_vec(), search.bandwidth())?;
            Ok(SpatialFit {
                model: SpatialModel::Kde(model),
                bandwidth_search: Some(search),
                gmm_candidates: None,
            })
        }
        SpatialKind::Gmm => {
            let fit = gmm_fit(points, &cfg.k_grid, seed, &cfg.em)?;
            Ok(SpatialFit {
                model: SpatialModel::Gmm(fit.model),
                bandwidth_search: None,
                gmm_candidates: Some(fit.candidates),
            })
        }
    }
}

fn holdout(
    points: &[LocalPoint],
    frac: f64,
    seed: u64,
) -> Result<(Vec<LocalPoint>, Vec<LocalPoint>)> {
    use rand::seq::SliceRandom;
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::invalid("validation fraction must lie in (0, 1)"));
    }
    let n = points.len();
    let n_val = ((n as f64) * frac).floor() as usize;
    if n_val == 0 || n_val == n {
        return Err(Error::InsufficientData(format!(
            "{n} points cannot be split for bandwidth validation"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut make_rng(seed, 1));
    let val = order[..n_val].iter().map(|&i| points[i]).collect();
    let train = order[n_val..].iter().map(|&i| points[i]).collect();
    Ok((train, val))
}

/// On-disk form of a fitted spatial model.
///
/// A KDE is stored by reference: the dataset path and the row indices of its
/// centers, so the file stays small and the centers are re-projected exactly
/// as the dataset loader does it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialModelFile {
    Kde {
        bandwidth_m: f64,
        dataset: PathBuf,
        indices: Vec<usize>,
        seed: u64,
    },
    Gmm {
        dataset: PathBuf,
        seed: u64,
        weights: Vec<f64>,
        means: Vec<[f64; 2]>,
        covariances: Vec<[f64; 3]>,
    },
}

impl SpatialModelFile {
    pub fn from_model(
        model: &SpatialModel,
        dataset: &Path,
        indices: Vec<usize>,
        seed: u64,
    ) -> Self {
        match model {
            SpatialModel::Kde(k) => SpatialModelFile::Kde {
                bandwidth_m: k.bandwidth(),
                dataset: dataset.to_path_buf(),
                indices,
                seed,
            },
            SpatialModel::Gmm(g) => SpatialModelFile::Gmm {
                dataset: dataset.to_path_buf(),
                seed,
                weights: g.weights.clone(),
                means: g.means.iter().map(|p| [p.x, p.y]).collect(),
                covariances: g.covariances.iter().map(|c| [c.xx, c.xy, c.yy]).collect(),
            },
        }
    }

    /// Rebuilds the model; a KDE takes its centers from `db`.
    pub fn to_model(&self, db: &FingerprintDatabase) -> Result<SpatialModel> {
        match self {
            SpatialModelFile::Kde {
                bandwidth_m,
                indices,
                ..
            } => {
                let centers = indices
                    .iter()
                    .map(|&i| {
                        db.records().get(i).map(|r| r.local).ok_or_else(|| {
                            Error::invalid(format!("model references row {i} beyond dataset"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SpatialModel::Kde(KdeModel::new(centers, *bandwidth_m)?))
            }
            SpatialModelFile::Gmm {
                weights,
                means,
                covariances,
                ..
            } => Ok(SpatialModel::Gmm(GmmModel::new(
                weights.clone(),
                means.iter().map(|m| LocalPoint::new(m[0], m[1])).collect(),
                covariances
                    .iter()
                    .map(|c| Cov2 {
                        xx: c[0],
                        xy: c[1],
                        yy: c[2],
                    })
                    .collect(),
            )?)),
        }
    }

    pub fn dataset(&self) -> &Path {
        match self {
            SpatialModelFile::Kde { dataset, .. } | SpatialModelFile::Gmm { dataset, .. } => {
                dataset
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cloud(n: usize, sigma: f64, seed: u64) -> Vec<LocalPoint> {
        let mut rng = make_rng(seed, 0);
        (0..n)
            .map(|_| {
                LocalPoint::new(
                    sigma * rng.sample::<f64, _>(StandardNormal),
                    sigma * rng.sample::<f64, _>(StandardNormal),
                )
            })
            .collect()
    }

    #[test]
    fn gaussian_bandwidth_in_expected_range() {
        let pts = cloud(500, 50.0, 21);
        let fit = fit_spatial(&pts, &SpatialConfig::default(), 3).unwrap();
        let search = fit.bandwidth_search.unwrap();
        // exhaustive recheck of the NLL curve
        let (train, val) = holdout(&pts, 0.2, 3).unwrap();
        for (i, &h) in search.grid.iter().enumerate() {
            let kde = KdeModel::new(train.clone(), h).unwrap();
            let nll = -kde.log_likelihood(&val).unwrap();
            assert!((nll - search.val_nll[i]).abs() <= 1e-9 * nll.abs());
            assert!(search.val_nll[search.chosen] <= nll);
        }
        let h = search.bandwidth();
        assert!((10.0..=200.0).contains(&h), "h = {h}");
    }

    #[test]
    fn kde_integrates_to_one() {
        let centers = cloud(15, 30.0, 5);
        let h = 8.0;
        let kde = KdeModel::new(centers.clone(), h).unwrap();
        let lo_x = centers.iter().map(|c| c.x).fold(f64::INFINITY, f64::min) - 6.0 * h;
        let hi_x = centers
            .iter()
            .map(|c| c.x)
            .fold(f64::NEG_INFINITY, f64::max)
            + 6.0 * h;
        let lo_y = centers.iter().map(|c| c.y).fold(f64::INFINITY, f64::min) - 6.0 * h;
        let hi_y = centers
            .iter()
            .map(|c| c.y)
            .fold(f64::NEG_INFINITY, f64::max)
            + 6.0 * h;
        let step = h / 8.0;
        let mut total = 0.0;
        let mut x = lo_x;
        while x < hi_x {
            let mut y = lo_y;
            while y < hi_y {
                total += kde.density(LocalPoint::new(x + 0.5 * step, y + 0.5 * step));
                y += step;
            }
            x += step;
        }
        total *= step * step;
        assert!((total - 1.0).abs() < 0.01, "integral {total}");
    }

    #[test]
    fn kde_translation_invariance() {
        let centers = cloud(10, 20.0, 6);
        let shift = (1234.5, -987.25);
        let moved: Vec<LocalPoint> = centers.iter().map(|c| c.offset(shift.0, shift.1)).collect();
        let a = KdeModel::new(centers, 7.0).unwrap();
        let b = KdeModel::new(moved, 7.0).unwrap();
        for q in cloud(20, 25.0, 7) {
            let (da, db) = (a.density(q), b.density(q.offset(shift.0, shift.1)));
            assert!((da - db).abs() <= 1e-12 * da.max(db), "{da} vs {db}");
        }
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        let g = GmmModel::new(
            vec![0.25, 0.75],
            vec![LocalPoint::new(1.0, 2.0), LocalPoint::new(-3.0, 4.5)],
            vec![
                Cov2::isotropic(2.0),
                Cov2 {
                    xx: 3.0,
                    xy: 0.5,
                    yy: 1.0,
                },
            ],
        )
        .unwrap();
        let file = SpatialModelFile::from_model(
            &SpatialModel::Gmm(g.clone()),
            Path::new("d.csv"),
            vec![],
            9,
        );
        file.save(&path).unwrap();
        let back = SpatialModelFile::load(&path).unwrap();
        assert_eq!(back, file);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("kind = \"gmm\""));
    }

    #[test]
    fn parses_kind_names() {
        assert_eq!("kde".parse::<SpatialKind>().unwrap(), SpatialKind::Kde);
        assert_eq!("gmm".parse::<SpatialKind>().unwrap(), SpatialKind::Gmm);
        assert!("gan".parse::<SpatialKind>().is_err());
    }
}
