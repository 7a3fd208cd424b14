//! In-memory MDT fingerprint databases and their CSV representation.
//!
//! The on-disk layout is one row per measurement report:
//!
//! ```text
//! Longitude,Latitude,RSRP_PCI_1,RSRP_PCI_2,RSRP_PCI_3
//! 11.345600,44.494500,-87.00,-95.00,
//! ```
//!
//! PCI columns are sorted by id and an empty field means the cell was not
//! detected at that location. Records are kept sparse all the way through.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocalPoint, Projection};
use crate::stats::make_rng;

/// Physical cell identity.
pub type Pci = u32;

pub const RSRP_MIN_DBM: f64 = -160.0;
pub const RSRP_MAX_DBM: f64 = -30.0;

const LON_COLUMN: &str = "Longitude";
const LAT_COLUMN: &str = "Latitude";
const PCI_PREFIX: &str = "RSRP_PCI_";

pub fn rsrp_in_range(v: f64) -> bool {
    (RSRP_MIN_DBM..=RSRP_MAX_DBM).contains(&v)
}

/// Clamps to the valid RSRP range; the flag reports whether clamping happened.
pub fn clamp_rsrp(v: f64) -> (f64, bool) {
    let c = v.clamp(RSRP_MIN_DBM, RSRP_MAX_DBM);
    (c, c != v)
}

/// Sparse per-PCI RSRP map (dBm). A missing key means "not detected".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint(BTreeMap<Pci, f64>);

impl Fingerprint {
    pub fn new() -> Self {
        Fingerprint(BTreeMap::new())
    }

    pub fn get(&self, pci: Pci) -> Option<f64> {
        self.0.get(&pci).copied()
    }

    pub fn insert(&mut self, pci: Pci, rsrp_dbm: f64) -> Option<f64> {
        self.0.insert(pci, rsrp_dbm)
    }

    pub fn contains(&self, pci: Pci) -> bool {
        self.0.contains_key(&pci)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pcis(&self) -> impl Iterator<Item = Pci> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pci, f64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&Pci, &mut f64)> {
        self.0.iter_mut()
    }
}

impl FromIterator<(Pci, f64)> for Fingerprint {
    fn from_iter<I: IntoIterator<Item = (Pci, f64)>>(iter: I) -> Self {
        Fingerprint(iter.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintRecord {
    pub location: GeoPoint,
    /// `location` in the owning database's projection.
    pub local: LocalPoint,
    pub rsrp: Fingerprint,
}

/// Ordered set of fingerprint records sharing one projection and PCI universe.
#[derive(Clone, Debug)]
pub struct FingerprintDatabase {
    records: Vec<FingerprintRecord>,
    pci_universe: Vec<Pci>,
    projection: Projection,
}

impl FingerprintDatabase {
    /// Builds a database, projecting about the centroid of the records unless a
    /// projection is given. The universe is the union of the record PCIs plus
    /// any `extra_pcis`.
    pub fn new(
        entries: Vec<(GeoPoint, Fingerprint)>,
        projection: Option<Projection>,
        extra_pcis: &[Pci],
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let projection = match projection {
            Some(p) => p,
            None => {
                let pts: Vec<GeoPoint> = entries.iter().map(|(g, _)| *g).collect();
                Projection::from_points(&pts)?
            }
        };
        let mut universe: Vec<Pci> = extra_pcis.to_vec();
        let mut records = Vec::with_capacity(entries.len());
        for (i, (location, rsrp)) in entries.into_iter().enumerate() {
            validate_fingerprint(&rsrp, i)?;
            universe.extend(rsrp.pcis());
            let local = projection.project(location)?;
            records.push(FingerprintRecord {
                location,
                local,
                rsrp,
            });
        }
        universe.sort_unstable();
        universe.dedup();
        Ok(FingerprintDatabase {
            records,
            pci_universe: universe,
            projection,
        })
    }

    pub fn records(&self) -> &[FingerprintRecord] {
        &self.records
    }

    pub fn record(&self, index: usize) -> &FingerprintRecord {
        &self.records[index]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn pci_universe(&self) -> &[Pci] {
        &self.pci_universe
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn locals(&self) -> Vec<LocalPoint> {
        self.records.iter().map(|r| r.local).collect()
    }

    /// Sub-database over `indices` (in the given order). Keeps the parent
    /// universe and projection so fingerprint vectors stay aligned.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("record index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FingerprintDatabase {
            records,
            pci_universe: self.pci_universe.clone(),
            projection: self.projection,
        })
    }

    /// Re-expresses every record in another projection's frame.
    pub fn reproject(&self, projection: Projection) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(FingerprintRecord {
                    location: r.location,
                    local: projection.project(r.location)?,
                    rsrp: r.rsrp.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FingerprintDatabase {
            records,
            pci_universe: self.pci_universe.clone(),
            projection,
        })
    }

    /// Appends records given in this database's local frame. Original rows
    /// keep their positions; the new ones follow in order.
    pub fn with_appended_local(&self, extra: Vec<(LocalPoint, Fingerprint)>) -> Result<Self> {
        let mut out = self.clone();
        out.records.reserve(extra.len());
        for (k, (local, rsrp)) in extra.into_iter().enumerate() {
            validate_fingerprint(&rsrp, self.records.len() + k)?;
            for pci in rsrp.pcis() {
                if let Err(pos) = out.pci_universe.binary_search(&pci) {
                    out.pci_universe.insert(pos, pci);
                }
            }
            let location = self.projection.unproject(local)?;
            out.records.push(FingerprintRecord {
                location,
                local,
                rsrp,
            });
        }
        Ok(out)
    }
}

fn validate_fingerprint(rsrp: &Fingerprint, index: usize) -> Result<()> {
    if rsrp.is_empty() {
        return Err(Error::invalid(format!("record {index} has no PCI")));
    }
    if let Some((pci, v)) = rsrp.iter().find(|(_, v)| !rsrp_in_range(*v)) {
        return Err(Error::invalid(format!(
            "record {index}: RSRP {v} dBm for PCI {pci} outside [-160, -30]"
        )));
    }
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<FingerprintDatabase> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(BufReader::new(file), None)
}

/// Parses the MDT CSV format. Row and column numbers in errors are 1-based,
/// with the header on row 1.
pub fn read_csv<R: Read>(reader: R, projection: Option<Projection>) -> Result<FingerprintDatabase> {
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io("<csv>", e))?,
        None => return Err(Error::Schema("missing header row".into())),
    };
    let pcis = parse_header(header.trim_end_matches('\r'))?;
    let width = pcis.len() + 2;

    let mut entries = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row = idx + 2;
        let line = line.map_err(|e| Error::io("<csv>", e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                row,
                col: fields.len().min(width) + 1,
                msg: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let lon = parse_number(fields[0], row, 1)?;
        let lat = parse_number(fields[1], row, 2)?;
        let location = GeoPoint { lat, lon };
        if !location.is_valid() {
            return Err(Error::Parse {
                row,
                col: 1,
                msg: format!("coordinate out of bounds (lat {lat}, lon {lon})"),
            });
        }
        let mut rsrp = Fingerprint::new();
        for (k, (&pci, field)) in pcis.iter().zip(&fields[2..]).enumerate() {
            let col = k + 3;
            if field.trim().is_empty() {
                continue;
            }
            let value = parse_number(field, row, col)?;
            if !rsrp_in_range(value) {
                return Err(Error::Range { row, col, value });
            }
            rsrp.insert(pci, value);
        }
        if rsrp.is_empty() {
            return Err(Error::Parse {
                row,
                col: 3,
                msg: "record has no detected PCI".into(),
            });
        }
        entries.push((location, rsrp));
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    FingerprintDatabase::new(entries, projection, &pcis)
}

fn parse_header(header: &str) -> Result<Vec<Pci>> {
    let header = header.trim_start_matches('\u{feff}');
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != LON_COLUMN || cols[1] != LAT_COLUMN {
        return Err(Error::Schema(format!(
            "header must start with `{LON_COLUMN},{LAT_COLUMN}` followed by at least one `{PCI_PREFIX}<id>` column"
        )));
    }
    let mut pcis = Vec::with_capacity(cols.len() - 2);
    for col in &cols[2..] {
        let pci: Pci = col
            .strip_prefix(PCI_PREFIX)
            .and_then(|id| id.parse().ok())
            .ok_or_else(|| Error::Schema(format!("bad column name `{col}`")))?;
        if pcis.last().is_some_and(|&prev| prev >= pci) {
            return Err(Error::Schema(format!(
                "PCI columns must be strictly ascending (`{col}`)"
            )));
        }
        pcis.push(pci);
    }
    Ok(pcis)
}

fn parse_number(field: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        row,
        col,
        msg: format!("`{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            col,
            msg: format!("`{field}` is not finite"),
        });
    }
    Ok(v)
}

pub fn write_csv(db: &FingerprintDatabase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv_to(db, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Coordinates are written with 6 decimals, RSRP with 2, LF line endings.
pub fn write_csv_to<W: Write>(db: &FingerprintDatabase, w: &mut W) -> std::io::Result<()> {
    let mut line = String::new();
    line.push_str(LON_COLUMN);
    line.push(',');
    line.push_str(LAT_COLUMN);
    for pci in &db.pci_universe {
        let _ = write!(line, ",{PCI_PREFIX}{pci}");
    }
    line.push('\n');
    w.write_all(line.as_bytes())?;
    for r in &db.records {
        line.clear();
        let _ = write!(line, "{:.6},{:.6}", r.location.lon, r.location.lat);
        for &pci in &db.pci_universe {
            line.push(',');
            if let Some(v) = r.rsrp.get(pci) {
                let _ = write!(line, "{v:.2}");
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn csv_string(db: &FingerprintDatabase) -> String {
    let mut buf = Vec::new();
    write_csv_to(db, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

/// Train / validation / test fractions and the shuffle seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::invalid("split fractions must lie in (0, 1)"));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("split fractions must sum to 1"));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes: validation and test get `floor(frac * m)`,
    /// train takes the remainder.
    pub fn sizes(&self, m: usize) -> (usize, usize, usize) {
        let val = (self.val_frac * m as f64).floor() as usize;
        let test = (self.test_frac * m as f64).floor() as usize;
        (m - val - test, val, test)
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: FingerprintDatabase,
    pub val: FingerprintDatabase,
    pub test: FingerprintDatabase,
}

/// Seeded random partition. Each part keeps the parent's row order, universe
/// and projection.
pub fn split(db: &FingerprintDatabase, spec: &SplitSpec) -> Result<Split> {
    let [train, val, test] = split_indices(db.len(), spec)?;
    Ok(Split {
        train: db.subset(&train)?,
        val: db.subset(&val)?,
        test: db.subset(&test)?,
    })
}

/// Row indices of the train, validation and test parts, each ascending.
pub fn split_indices(m: usize, spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    if m < 10 {
        return Err(Error::TooSmallToSplit(m));
    }
    let (n_train, n_val, _) = spec.sizes(m);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut make_rng(spec.seed, 0));
    let part = |range: std::ops::Range<usize>| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        idx
    };
    Ok([
        part(0..n_train),
        part(n_train..n_train + n_val),
        part(n_train + n_val..m),
    ])
}
