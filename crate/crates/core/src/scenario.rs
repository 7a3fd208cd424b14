//! Synthetic ground truth: cell layouts, user placement and a log-distance
//! link budget with log-normal shadowing, emitted as sparse records.

use std::path::{Path, PathBuf};

use faer::{Mat, Side};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocalPoint, Projection};
use crate::mdt::{clamp_rsrp, write_csv, Fingerprint, FingerprintDatabase, Pci};
use crate::stats::{derive_seed, make_rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSite {
    pub pci: Pci,
    /// Meters from the scenario origin.
    pub location: LocalPoint,
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: f64,
    #[serde(default = "default_exponent")]
    pub pathloss_exponent: f64,
    /// Path loss at the 1 m reference distance, dB.
    #[serde(default = "default_pl0")]
    pub pl0_db: f64,
}

fn default_tx_power() -> f64 {
    46.0
}
fn default_exponent() -> f64 {
    3.5
}
fn default_pl0() -> f64 {
    32.0
}
fn default_threshold() -> f64 {
    -120.0
}

impl CellSite {
    pub fn new(pci: Pci, location: LocalPoint) -> Self {
        CellSite {
            pci,
            location,
            tx_power_dbm: default_tx_power(),
            pathloss_exponent: default_exponent(),
            pl0_db: default_pl0(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(20.0..=60.0).contains(&self.tx_power_dbm) {
            return Err(Error::invalid(format!(
                "cell {}: tx power {} dBm outside [20, 60]",
                self.pci, self.tx_power_dbm
            )));
        }
        if !(2.0..=6.0).contains(&self.pathloss_exponent) {
            return Err(Error::invalid(format!(
                "cell {}: path-loss exponent {} outside [2, 6]",
                self.pci, self.pathloss_exponent
            )));
        }
        if !self.location.is_finite() || !self.pl0_db.is_finite() {
            return Err(Error::invalid(format!(
                "cell {}: non-finite parameters",
                self.pci
            )));
        }
        Ok(())
    }
}

/// Received power in dBm before clamping; distances under 1 m count as 1 m.
pub fn rsrp_at(cell: &CellSite, p: LocalPoint, shadow_db: f64) -> f64 {
    let d = cell.location.distance(&p).max(1.0);
    cell.tx_power_dbm - (cell.pl0_db + 10.0 * cell.pathloss_exponent * d.log10()) + shadow_db
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: LocalPoint,
    pub sigma_m: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserDistribution {
    /// Uniform over a `width_m × height_m` rectangle centred on the origin.
    Uniform { width_m: f64, height_m: f64 },
    /// Isotropic Gaussian clusters picked by weight.
    GaussianClusters { clusters: Vec<Cluster> },
    /// Uniform along the segment with a uniform lateral offset inside a
    /// corridor of total width `corridor_m`.
    LineSegment {
        start: LocalPoint,
        end: LocalPoint,
        corridor_m: f64,
    },
}

impl UserDistribution {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            UserDistribution::Uniform { width_m, height_m } => *width_m > 0.0 && *height_m > 0.0,
            UserDistribution::GaussianClusters { clusters } => {
                !clusters.is_empty()
                    && clusters.iter().all(|c| c.sigma_m > 0.0 && c.weight >= 0.0)
                    && clusters.iter().map(|c| c.weight).sum::<f64>() > 0.0
            }
            UserDistribution::LineSegment {
                start,
                end,
                corridor_m,
            } => *corridor_m >= 0.0 && start.distance(end) > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid user distribution {self:?}"
            )))
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> LocalPoint {
        match self {
            UserDistribution::Uniform { width_m, height_m } => LocalPoint::new(
                (rng.random::<f64>() - 0.5) * width_m,
                (rng.random::<f64>() - 0.5) * height_m,
            ),
            UserDistribution::GaussianClusters { clusters } => {
                let total: f64 = clusters.iter().map(|c| c.weight).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = clusters.len() - 1;
                for (i, c) in clusters.iter().enumerate() {
                    if u < c.weight {
                        pick = i;
                        break;
                    }
                    u -= c.weight;
                }
                let c = &clusters[pick];
                let (dx, dy): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                c.center.offset(c.sigma_m * dx, c.sigma_m * dy)
            }
            UserDistribution::LineSegment {
                start,
                end,
                corridor_m,
            } => {
                let t: f64 = rng.random();
                let off = (rng.random::<f64>() - 0.5) * corridor_m;
                let len = start.distance(end);
                let (ux, uy) = ((end.x - start.x) / len, (end.y - start.y) / len);
                LocalPoint::new(
                    start.x + t * (end.x - start.x) - uy * off,
                    start.y + t * (end.y - start.y) + ux * off,
                )
            }
        }
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub fn distance_to_segment(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * vx + (p.y - a.y) * vy) / len2).clamp(0.0, 1.0)
    };
    p.distance(&LocalPoint::new(a.x + t * vx, a.y + t * vy))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaPreset {
    CityCenter,
    Stadium,
    Airport,
    Highway,
    Custom,
}

impl AreaPreset {
    pub const NAMED: [AreaPreset; 4] = [
        AreaPreset::CityCenter,
        AreaPreset::Stadium,
        AreaPreset::Airport,
        AreaPreset::Highway,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AreaPreset::CityCenter => "city_center",
            AreaPreset::Stadium => "stadium",
            AreaPreset::Airport => "airport",
            AreaPreset::Highway => "highway",
            AreaPreset::Custom => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub area: AreaPreset,
    /// Nominal region extent, km².
    pub area_km2: f64,
    /// Geographic anchor of the local frame.
    pub origin: GeoPoint,
    pub cells: Vec<CellSite>,
    pub user_distribution: UserDistribution,
    pub m: usize,
    /// Shadowing variance, dB².
    pub sigma2_s: f64,
    /// Distance at which the shadowing correlation between two users falls
    /// to 1/e, meters. Zero draws independent shadowing per user.
    #[serde(default)]
    pub shadow_decorrelation_m: f64,
    #[serde(default = "default_threshold")]
    pub detect_threshold_dbm: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("scenario needs m >= 1"));
        }
        if !(self.sigma2_s >= 0.0 && self.sigma2_s.is_finite()) {
            return Err(Error::invalid("sigma2_s must be non-negative"));
        }
        if self.cells.is_empty() {
            return Err(Error::invalid("scenario needs at least one cell"));
        }
        let mut pcis: Vec<Pci> = self.cells.iter().map(|c| c.pci).collect();
        pcis.sort_unstable();
        if pcis.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate PCI in cell list"));
        }
        if !(self.shadow_decorrelation_m >= 0.0 && self.shadow_decorrelation_m.is_finite()) {
            return Err(Error::invalid(
                "shadow_decorrelation_m must be non-negative",
            ));
        }
        if self.detect_threshold_dbm.is_nan() {
            return Err(Error::invalid("detection threshold is NaN"));
        }
        self.origin.validate()?;
        for c in &self.cells {
            c.validate()?;
        }
        self.user_distribution.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn projection(&self) -> Result<Projection> {
        Projection::with_origin(self.origin)
    }

    pub fn pcis(&self) -> Vec<Pci> {
        let mut p: Vec<Pci> = self.cells.iter().map(|c| c.pci).collect();
        p.sort_unstable();
        p
    }

    /// Reads a TOML spec. Error messages carry the parser's line and column.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let spec: ScenarioSpec = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        spec.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario spec serializes")
    }
}

/// Shared origin of every preset.
pub const PRESET_ORIGIN: GeoPoint = GeoPoint {
    lat: 44.4945,
    lon: 11.3456,
};

struct PresetShape {
    area_km2: f64,
    /// Records per km² before the tenfold reduction.
    density: f64,
    cells: usize,
    sigma2_s: f64,
    exponent: f64,
    decorrelation_m: f64,
}

fn shape(area: AreaPreset) -> Option<PresetShape> {
    let s = |area_km2, density, cells, sigma2_s, exponent, decorrelation_m| PresetShape {
        area_km2,
        density,
        cells,
        sigma2_s,
        exponent,
        decorrelation_m,
    };
    match area {
        AreaPreset::CityCenter => Some(s(2.05, 4190.0, 14, 8.8, 3.8, 50.0)),
        AreaPreset::Stadium => Some(s(3.20, 1253.0, 10, 7.8, 3.6, 50.0)),
        AreaPreset::Airport => Some(s(18.61, 720.0, 21, 7.8, 3.3, 50.0)),
        AreaPreset::Highway => Some(s(24.96, 90.0, 5, 8.0, 3.2, 120.0)),
        AreaPreset::Custom => None,
    }
}

/// Built-in scenario for a named region, laid out on a square of the region's
/// area. Record and cell counts are both scaled down tenfold from the region
/// they imitate.
pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let area = AreaPreset::NAMED
        .into_iter()
        .find(|a| a.name() == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    let s = shape(area).expect("named presets have a shape");
    let side = (s.area_km2 * 1e6).sqrt();
    let half = side / 2.0;
    // layouts are fixed per preset, independent of the generation seed
    let mut rng = make_rng(derive_seed(0x5ce7a210, &[area as u64]), 0);
    let m = (s.density * s.area_km2 / 10.0).round() as usize;
    let (cells, users) = match area {
        AreaPreset::Highway => {
            let start = LocalPoint::new(-0.48 * side, -0.12 * side);
            let end = LocalPoint::new(0.48 * side, 0.12 * side);
            let cells = (0..s.cells)
                .map(|i| {
                    let t = (i as f64 + 0.5) / s.cells as f64;
                    let side_sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    let along = LocalPoint::new(
                        start.x + t * (end.x - start.x),
                        start.y + t * (end.y - start.y),
                    );
                    along.offset(0.0, side_sign * rng.random_range(150.0..400.0))
                })
                .collect::<Vec<_>>();
            (
                cells,
                UserDistribution::LineSegment {
                    start,
                    end,
                    corridor_m: 40.0,
                },
            )
        }
        _ => {
            let cells = jittered_grid(s.cells, side, &mut rng);
            let n_clusters = match area {
                AreaPreset::CityCenter => 6,
                AreaPreset::Stadium => 4,
                _ => 8,
            };
            let clusters = (0..n_clusters)
                .map(|k| Cluster {
                    center: LocalPoint::new(
                        rng.random_range(-0.65 * half..0.65 * half),
                        rng.random_range(-0.65 * half..0.65 * half),
                    ),
                    sigma_m: side * rng.random_range(0.05..0.14),
                    weight: if area == AreaPreset::Stadium && k == 0 {
                        3.0
                    } else {
                        rng.random_range(0.5..1.5)
                    },
                })
                .collect();
            (cells, UserDistribution::GaussianClusters { clusters })
        }
    };
    Ok(ScenarioSpec {
        name: area.name().to_string(),
        area,
        area_km2: s.area_km2,
        origin: PRESET_ORIGIN,
        cells: cells
            .into_iter()
            .enumerate()
            .map(|(i, loc)| CellSite {
                pathloss_exponent: s.exponent,
                ..CellSite::new(101 + i as Pci, loc)
            })
            .collect(),
        user_distribution: users,
        m,
        sigma2_s: s.sigma2_s,
        shadow_decorrelation_m: s.decorrelation_m,
        detect_threshold_dbm: default_threshold(),
        seed: 0,
    })
}

/// `n` sites on a near-square grid over the region with a quarter-cell jitter.
fn jittered_grid(n: usize, side: f64, rng: &mut impl Rng) -> Vec<LocalPoint> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (dx, dy) = (side / cols as f64, side / rows as f64);
    (0..n)
        .map(|i| {
            let (c, r) = (i % cols, i / cols);
            LocalPoint::new(
                -side / 2.0 + (c as f64 + 0.5) * dx + rng.random_range(-0.25..0.25) * dx,
                -side / 2.0 + (r as f64 + 0.5) * dy + rng.random_range(-0.25..0.25) * dy,
            )
        })
        .collect()
}

/// A generated dataset with its ground truth.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    /// Records in the scenario frame (projection about `spec.origin`).
    pub db: FingerprintDatabase,
    /// True location of each record, meters, aligned with `db`.
    pub truth: Vec<LocalPoint>,
    /// Users that detected no cell.
    pub dropped: usize,
    pub clamped_values: usize,
}

/// Draws `m` users and their sparse fingerprints. User `i` uses stream `i`
/// of the scenario seed for its position and one standard normal per cell.
/// With a decorrelation distance those normals are coloured per cell by the
/// exponential correlation `exp(-d / d_corr)` between user positions.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let proj = spec.projection()?;
    let sigma = spec.sigma2_s.sqrt();
    let n_cells = spec.cells.len();
    let draws: Vec<(LocalPoint, Vec<f64>)> = (0..spec.m)
        .into_par_iter()
        .map(|i| {
            let mut rng = make_rng(spec.seed, i as u64);
            let p = spec.user_distribution.draw(&mut rng);
            let z = (0..n_cells).map(|_| rng.sample(StandardNormal)).collect();
            (p, z)
        })
        .collect();
    let shadows = correlate_shadowing(&draws, spec.shadow_decorrelation_m)?;
    let users: Vec<(LocalPoint, Fingerprint, usize)> = draws
        .par_iter()
        .zip(shadows.par_iter())
        .map(|((p, _), s)| {
            let mut clamped = 0;
            let mut fp = Fingerprint::new();
            for (cell, &z) in spec.cells.iter().zip(s) {
                let v = rsrp_at(cell, *p, sigma * z);
                if v >= spec.detect_threshold_dbm {
                    let (c, hit) = clamp_rsrp(v);
                    clamped += hit as usize;
                    fp.insert(cell.pci, c);
                }
            }
            (*p, fp, clamped)
        })
        .collect();
    let mut entries = Vec::with_capacity(users.len());
    let mut truth = Vec::with_capacity(users.len());
    let mut dropped = 0;
    let mut clamped_values = 0;
    for (p, fp, c) in users {
        if fp.is_empty() {
            dropped += 1;
            continue;
        }
        clamped_values += c;
        entries.push((proj.unproject(p)?, fp));
        truth.push(p);
    }
    if entries.is_empty() {
        return Err(Error::AllUndetected);
    }
    let db = FingerprintDatabase::new(entries, Some(proj), &[])?;
    Ok(Scenario {
        spec: spec.clone(),
        db,
        truth,
        dropped,
        clamped_values,
    })
}

/// Unit-variance shadowing per user and cell. Independent when `d_corr` is
/// zero; otherwise each cell's column is `L z` with `L` the Cholesky factor
/// of the users' exponential correlation matrix.
fn correlate_shadowing(draws: &[(LocalPoint, Vec<f64>)], d_corr: f64) -> Result<Vec<Vec<f64>>> {
    if d_corr == 0.0 {
        return Ok(draws.iter().map(|(_, z)| z.clone()).collect());
    }
    let m = draws.len();
    let corr = Mat::from_fn(m, m, |i, j| {
        (-draws[i].0.distance(&draws[j].0) / d_corr).exp()
    });
    // coincident users make the matrix singular; a tiny nugget keeps it SPD
    let chol = [0.0, 1e-10, 1e-8, 1e-6]
        .iter()
        .find_map(|&eps| {
            let c = Mat::from_fn(m, m, |i, j| corr[(i, j)] + if i == j { eps } else { 0.0 });
            c.llt(Side::Lower).ok()
        })
        .ok_or_else(|| {
            Error::InsufficientData("shadowing correlation matrix is not positive definite".into())
        })?;
    let n_cells = draws.first().map_or(0, |d| d.1.len());
    let z = Mat::from_fn(m, n_cells, |i, c| draws[i].1[c]);
    let s = chol.L() * z;
    Ok((0..m)
        .map(|i| (0..n_cells).map(|c| s[(i, c)]).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub origin: GeoPoint,
    pub records: usize,
    pub dropped: usize,
    pub clamped_values: usize,
    pub pcis: Vec<Pci>,
    pub spec: ScenarioSpec,
}

#[derive(Clone, Debug)]
pub struct ScenarioFiles {
    pub csv: PathBuf,
    pub truth: PathBuf,
    pub meta: PathBuf,
}

impl ScenarioFiles {
    pub fn in_dir(dir: &Path, stem: &str) -> Self {
        ScenarioFiles {
            csv: dir.join(format!("{stem}.csv")),
            truth: dir.join(format!("{stem}.truth.csv")),
            meta: dir.join(format!("{stem}.meta.json")),
        }
    }
}

impl Scenario {
    pub fn meta(&self) -> ScenarioMeta {
        ScenarioMeta {
            name: self.spec.name.clone(),
            origin: self.spec.origin,
            records: self.db.len(),
            dropped: self.dropped,
            clamped_values: self.clamped_values,
            pcis: self.db.pci_universe().to_vec(),
            spec: self.spec.clone(),
        }
    }

    /// Writes the dataset, the truth sidecar and the metadata under `stem`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<ScenarioFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = ScenarioFiles::in_dir(dir, stem);
        write_csv(&self.db, &files.csv)?;
        write_truth_csv(&self.truth, &files.truth)?;
        let meta = serde_json::to_string_pretty(&self.meta())?;
        std::fs::write(&files.meta, meta + "\n").map_err(|e| Error::io(&files.meta, e))?;
        Ok(files)
    }

    /// Splits records (and truth) by index lists, keeping the scenario frame.
    pub fn part(&self, indices: &[usize]) -> Result<(FingerprintDatabase, Vec<LocalPoint>)> {
        let db = self.db.subset(indices)?;
        Ok((db, indices.iter().map(|&i| self.truth[i]).collect()))
    }
}

pub fn write_truth_csv(truth: &[LocalPoint], path: &Path) -> Result<()> {
    let mut out = String::from("x,y\n");
    for p in truth {
        out.push_str(&format!("{:.3},{:.3}\n", p.x, p.y));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<LocalPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x,y") {
        return Err(Error::Schema(format!(
            "{}: expected 'x,y' header",
            path.display()
        )));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut it = l.split(',');
            let mut field = |col: usize| -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::Parse {
                        row: i + 2,
                        col,
                        msg: "missing field".into(),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        row: i + 2,
                        col,
                        msg: e.to_string(),
                    })
            };
            Ok(LocalPoint::new(field(1)?, field(2)?))
        })
        .collect()
}

pub fn read_meta(path: &Path) -> Result<ScenarioMeta> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
