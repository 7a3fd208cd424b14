//! Augmentation pipeline and the augmentation-rate experiments built on it.
//!
//! A database of `m` records augmented at rate `A` holds the original rows
//! followed by `(A − 1)·m` synthetic ones: locations sampled from the spatial
//! model, fingerprints predicted by the radio model. `A = 1` is the original
//! database.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{LocalPoint, Projection};
use crate::mdt::{Fingerprint, FingerprintDatabase};
use crate::positioning::{evaluate_queries, PositioningReport, WknnConfig, WknnLocator};
use crate::radio::{
    gpr_fit, synthesize, GprConfig, GprModel, KnnTransfer, RadioKind, ShadowingSpec,
    SynthesisStats, TransferConfig,
};
use crate::spatial::{fit_spatial, SpatialConfig, SpatialFit, SpatialKind};
use crate::stats::{
    derive_seed, mean_ci, significance_matrix, MeanCi, SignificanceMatrix, DEFAULT_ALPHA,
    HARD_MIN_RUNS,
};

pub const STAGE_SPATIAL: &str = "spatial-fit";
pub const STAGE_RADIO: &str = "radio-fit";
pub const STAGE_SYNTHESIS: &str = "synthesis";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub kind: RadioKind,
    /// Shadowing variance added by the KNN transfer, dB².
    pub shadow_sigma2_db: f64,
    pub transfer: TransferConfig,
    /// Grid and caps for the GP models; the kernel follows `kind`.
    pub subsample_cap: usize,
}

impl RadioConfig {
    pub fn new(kind: RadioKind, shadow_sigma2_db: f64) -> Self {
        RadioConfig {
            kind,
            shadow_sigma2_db,
            transfer: TransferConfig::default(),
            subsample_cap: 2000,
        }
    }

    fn gpr_config(&self) -> Option<GprConfig> {
        self.kind.kernel().map(|k| GprConfig {
            subsample_cap: self.subsample_cap,
            ..GprConfig::new(k)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub spatial: SpatialConfig,
    pub radio: RadioConfig,
}

impl PipelineConfig {
    pub fn new(spatial: SpatialKind, radio: RadioKind, shadow_sigma2_db: f64) -> Self {
        PipelineConfig {
            spatial: SpatialConfig::of_kind(spatial),
            radio: RadioConfig::new(radio, shadow_sigma2_db),
        }
    }
}

enum RadioBackend<'a> {
    Knn(KnnTransfer<'a>),
    Gpr(GprModel),
}

/// Spatial and radio models fitted once to a training database; each call
/// to [`FittedPipeline::augment`] only draws new samples.
pub struct FittedPipeline<'a> {
    train: &'a FingerprintDatabase,
    cfg: PipelineConfig,
    spatial: SpatialFit,
    radio: RadioBackend<'a>,
}

#[derive(Clone, Debug)]
pub struct Augmented {
    pub db: FingerprintDatabase,
    pub rate: u32,
    pub original: usize,
    pub stats: SynthesisStats,
}

impl<'a> FittedPipeline<'a> {
    pub fn fit(train: &'a FingerprintDatabase, cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        let spatial = fit_spatial(&train.locals(), &cfg.spatial, derive_seed(seed, &[0]))
            .map_err(|e| e.in_stage(STAGE_SPATIAL))?;
        let radio = match cfg.radio.gpr_config() {
            None => RadioBackend::Knn(
                KnnTransfer::new(
                    train,
                    cfg.radio.transfer,
                    ShadowingSpec::new(cfg.radio.shadow_sigma2_db, 0)?,
                )
                .map_err(|e| e.in_stage(STAGE_RADIO))?,
            ),
            Some(g) => RadioBackend::Gpr(
                gpr_fit(train, &g, derive_seed(seed, &[1])).map_err(|e| e.in_stage(STAGE_RADIO))?,
            ),
        };
        Ok(FittedPipeline {
            train,
            cfg: cfg.clone(),
            spatial,
            radio,
        })
    }

    pub fn spatial(&self) -> &SpatialFit {
        &self.spatial
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn gpr(&self) -> Option<&GprModel> {
        match &self.radio {
            RadioBackend::Gpr(g) => Some(g),
            RadioBackend::Knn(_) => None,
        }
    }

    /// Synthetic records for `n` sampled locations.
    pub fn synthesize(
        &self,
        n: usize,
        seed: u64,
    ) -> Result<(Vec<(LocalPoint, Fingerprint)>, SynthesisStats)> {
        let locations = self.spatial.model.sample(n, derive_seed(seed, &[0]));
        let shadow_seed = derive_seed(seed, &[1]);
        Ok(match &self.radio {
            RadioBackend::Knn(t) => {
                let t = t.clone().with_shadowing(ShadowingSpec::new(
                    self.cfg.radio.shadow_sigma2_db,
                    shadow_seed,
                )?)?;
                synthesize(&t, &locations, 0)
            }
            RadioBackend::Gpr(g) => synthesize(g, &locations, 0),
        })
    }

    pub fn augment(&self, rate: u32, seed: u64) -> Result<Augmented> {
        if rate == 0 {
            return Err(Error::invalid("augmentation rate must be at least 1"));
        }
        let m = self.train.len();
        if rate == 1 {
            return Ok(Augmented {
                db: self.train.clone(),
                rate,
                original: m,
                stats: SynthesisStats::default(),
            });
        }
        let n = (rate as usize - 1) * m;
        let (records, stats) = self
            .synthesize(n, seed)
            .map_err(|e| e.in_stage(STAGE_SYNTHESIS))?;
        let db = self
            .train
            .with_appended_local(records)
            .map_err(|e| e.in_stage(STAGE_SYNTHESIS))?;
        Ok(Augmented {
            db,
            rate,
            original: m,
            stats,
        })
    }
}

/// One-shot augmentation. `A = 1` returns the training database untouched
/// without fitting anything.
pub fn augment(
    train: &FingerprintDatabase,
    rate: u32,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Augmented> {
    if rate == 1 {
        return Ok(Augmented {
            db: train.clone(),
            rate,
            original: train.len(),
            stats: SynthesisStats::default(),
        });
    }
    FittedPipeline::fit(train, cfg, seed)?.augment(rate, seed)
}

/// Positioning queries with their true locations in the database frame.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub queries: Vec<Fingerprint>,
    pub truth: Vec<LocalPoint>,
}

impl EvalSet {
    /// Uses each record's own location, projected into `frame`.
    pub fn from_db(test: &FingerprintDatabase, frame: &Projection) -> Result<Self> {
        Ok(EvalSet {
            queries: test.records().iter().map(|r| r.rsrp.clone()).collect(),
            truth: test
                .records()
                .iter()
                .map(|r| frame.project(r.location))
                .collect::<Result<_>>()?,
        })
    }

    /// Uses truth given in another frame (for example a scenario sidecar).
    pub fn from_truth(
        test: &FingerprintDatabase,
        truth: &[LocalPoint],
        truth_frame: &Projection,
        frame: &Projection,
    ) -> Result<Self> {
        if truth.len() != test.len() {
            return Err(Error::LengthMismatch {
                left: test.len(),
                right: truth.len(),
            });
        }
        Ok(EvalSet {
            queries: test.records().iter().map(|r| r.rsrp.clone()).collect(),
            truth: truth
                .iter()
                .map(|&p| frame.project(truth_frame.unproject(p)?))
                .collect::<Result<_>>()?,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn evaluate(
        &self,
        db: &FingerprintDatabase,
        cfg: &WknnConfig,
    ) -> Result<PositioningReport> {
        let locator = WknnLocator::new(db, *cfg)?;
        let queries: Vec<&Fingerprint> = self.queries.iter().collect();
        evaluate_queries(&locator, &queries, &self.truth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub rates: Vec<u32>,
    pub n_runs: usize,
    pub spatial_model: SpatialKind,
    pub radio_model: RadioKind,
    pub wknn: WknnConfig,
    pub seed: u64,
    /// Shadowing variance for the KNN transfer, dB².
    pub shadow_sigma2_db: f64,
    pub alpha: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            rates: vec![1, 5, 10, 20, 30],
            n_runs: 30,
            spatial_model: SpatialKind::Kde,
            radio_model: RadioKind::Knn,
            wknn: WknnConfig::default(),
            seed: 0,
            shadow_sigma2_db: 8.0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.rates[0] != 1 {
            return Err(Error::invalid("sweep rates must start at 1"));
        }
        if self.rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sweep rates must be strictly ascending"));
        }
        if self.n_runs == 0 {
            return Err(Error::invalid("sweep needs n_runs >= 1"));
        }
        self.wknn.validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig::new(self.spatial_model, self.radio_model, self.shadow_sigma2_db)
    }

    /// Seed of the synthesis for one `(rate, run)` cell.
    pub fn run_seed(&self, rate: u32, run: usize) -> u64 {
        derive_seed(self.seed, &[rate as u64, run as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rate: u32,
    pub run: usize,
    pub seed: u64,
    pub db_size: usize,
    pub mean_error_m: f64,
    pub median_error_m: f64,
    pub unlocatable: usize,
    pub clamped_values: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub rate: u32,
    pub mean_error_m: f64,
    pub ci_half_width_m: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepProvenance {
    pub crate_version: String,
    pub spec: SweepSpec,
    pub fit_seed: u64,
    pub train_records: usize,
    pub test_queries: usize,
    pub chosen_bandwidth_m: Option<f64>,
    pub gmm_components: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<RunRecord>,
    pub per_rate: Vec<RateSummary>,
    /// Across rates on per-run mean errors; absent below ten runs.
    pub significance: Option<SignificanceMatrix>,
    pub provenance: SweepProvenance,
}

impl SweepReport {
    pub fn mean_errors(&self, rate: u32) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.rate == rate)
            .map(|r| r.mean_error_m)
            .collect()
    }

    pub fn summary(&self, rate: u32) -> Option<&RateSummary> {
        self.per_rate.iter().find(|s| s.rate == rate)
    }
}

/// Augments `train` at every rate `n_runs` times and positions `eval`
/// against each result. Models are fitted once; every `(rate, run)` cell
/// draws from its own seed, so the report does not depend on scheduling.
pub fn run_sweep(
    train: &FingerprintDatabase,
    eval: &EvalSet,
    spec: &SweepSpec,
) -> Result<SweepReport> {
    spec.validate()?;
    let needs_fit = spec.rates.iter().any(|&r| r > 1);
    let fit_seed = derive_seed(spec.seed, &[u64::MAX]);
    let pipeline = if needs_fit {
        Some(FittedPipeline::fit(train, &spec.pipeline(), fit_seed)?)
    } else {
        None
    };
    // A = 1 involves no randomness; evaluate it once
    let baseline = eval.evaluate(train, &spec.wknn)?;
    let cells: Vec<(u32, usize)> = spec
        .rates
        .iter()
        .flat_map(|&r| (0..spec.n_runs).map(move |k| (r, k)))
        .collect();
    let runs: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(rate, run)| {
            let seed = spec.run_seed(rate, run);
            let tag = |e: Error| Error::Run {
                rate,
                run,
                source: Box::new(e),
            };
            if rate == 1 {
                return Ok(RunRecord {
                    rate,
                    run,
                    seed,
                    db_size: train.len(),
                    mean_error_m: baseline.mean_error_m,
                    median_error_m: baseline.median_error_m,
                    unlocatable: baseline.unlocatable,
                    clamped_values: 0,
                });
            }
            let p = pipeline.as_ref().expect("fitted when a rate exceeds 1");
            let aug = p.augment(rate, seed).map_err(tag)?;
            let rep = eval.evaluate(&aug.db, &spec.wknn).map_err(tag)?;
            Ok(RunRecord {
                rate,
                run,
                seed,
                db_size: aug.db.len(),
                mean_error_m: rep.mean_error_m,
                median_error_m: rep.median_error_m,
                unlocatable: rep.unlocatable,
                clamped_values: aug.stats.clamped_values,
            })
        })
        .collect::<Result<_>>()?;
    let mut by_rate: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        by_rate.entry(r.rate).or_default().push(r.mean_error_m);
    }
    let per_rate = by_rate
        .iter()
        .map(|(&rate, xs)| {
            let MeanCi {
                mean,
                half_width,
                n,
            } = mean_ci(xs, spec.alpha)?;
            Ok(RateSummary {
                rate,
                mean_error_m: mean,
                ci_half_width_m: half_width,
                runs: n,
            })
        })
        .collect::<Result<_>>()?;
    let significance = if spec.n_runs >= HARD_MIN_RUNS && by_rate.len() >= 2 {
        Some(significance_matrix(&by_rate, spec.alpha)?)
    } else {
        None
    };
    let spatial = pipeline.as_ref().map(|p| p.spatial());
    Ok(SweepReport {
        runs,
        per_rate,
        significance,
        provenance: SweepProvenance {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            spec: spec.clone(),
            fit_seed,
            train_records: train.len(),
            test_queries: eval.len(),
            chosen_bandwidth_m: spatial
                .and_then(|s| s.bandwidth_search.as_ref().map(|b| b.bandwidth())),
            gmm_components: spatial.and_then(|s| match &s.model {
                crate::spatial::SpatialModel::Gmm(g) => Some(g.k()),
                _ => None,
            }),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPair {
    pub spatial: SpatialKind,
    pub radio: RadioKind,
}

impl ModelPair {
    pub fn label(&self) -> String {
        format!("{}-{}", self.spatial.name(), self.radio.name())
    }
}

impl std::str::FromStr for ModelPair {
    type Err = Error;
    /// `kde-knn`, `gmm-gpr_se`, ...
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("model pair '{s}' must look like kde-knn")))?;
        Ok(ModelPair {
            spatial: a.parse()?,
            radio: b.parse()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rates: Vec<u32>,
    pub models: Vec<String>,
    /// `cells[rate][model]`.
    pub cells: Vec<Vec<RateSummary>>,
    pub sweeps: Vec<SweepReport>,
}

impl ComparisonTable {
    /// Plain-text table, one row per rate, `mean ± half-width` per model.
    pub fn render(&self) -> String {
        let mut out = format!("{:>6}", "A");
        for m in &self.models {
            out.push_str(&format!(" {m:>20}"));
        }
        out.push('\n');
        for (i, rate) in self.rates.iter().enumerate() {
            out.push_str(&format!("{:>6}", format!("x{rate}")));
            for c in &self.cells[i] {
                out.push_str(&format!(
                    " {:>20}",
                    format!("{:.2}±{:.3}", c.mean_error_m, c.ci_half_width_m)
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the same sweep (same seeds) for every model pair.
pub fn compare_models(
    train: &FingerprintDatabase,
    eval: &EvalSet,
    models: &[ModelPair],
    base: &SweepSpec,
) -> Result<ComparisonTable> {
    if models.len() < 2 {
        return Err(Error::invalid(
            "model comparison needs at least two model pairs",
        ));
    }
    let sweeps = models
        .iter()
        .map(|m| {
            let spec = SweepSpec {
                spatial_model: m.spatial,
                radio_model: m.radio,
                ..base.clone()
            };
            run_sweep(train, eval, &spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let cells = base
        .rates
        .iter()
        .map(|&r| {
            sweeps
                .iter()
                .map(|s| s.summary(r).expect("every rate summarised").clone())
                .collect()
        })
        .collect();
    Ok(ComparisonTable {
        rates: base.rates.clone(),
        models: models.iter().map(|m| m.label()).collect(),
        cells,
        sweeps,
    })
}
