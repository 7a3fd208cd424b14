//! Command-line front end. Every subcommand reads and writes plain files and
//! records the seeds and configuration it ran with next to its outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geo::Projection;
use crate::mdt::{load_csv, split_indices, write_csv, FingerprintDatabase, SplitSpec};
use crate::pipeline::{
    augment, compare_models, run_sweep, EvalSet, ModelPair, PipelineConfig, SweepSpec,
};
use crate::positioning::{write_errors_csv, WknnConfig};
use crate::radio::RadioKind;
use crate::scenario::{generate, preset, read_meta, read_truth_csv, write_truth_csv, ScenarioSpec};
use crate::spatial::{fit_spatial, SpatialConfig, SpatialKind, SpatialModel, SpatialModelFile};
use crate::stats::{ks2d_test, DEFAULT_PERMUTATIONS};

#[derive(Debug, Parser)]
#[command(
    name = "mdt-augment",
    version,
    about = "Augment MDT fingerprint databases and measure wKNN positioning"
)]
pub struct Cli {
    /// Master seed for every random stage.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario: dataset CSV, truth CSV and metadata.
    Generate(GenerateArgs),
    /// Fit a spatial model to the locations of a dataset.
    FitSpatial(FitSpatialArgs),
    /// Write the original records followed by (A-1)·m synthetic ones.
    Augment(AugmentArgs),
    /// Position test records against a database with wKNN.
    Evaluate(EvaluateArgs),
    /// Augmentation-rate sweep with per-rate confidence intervals.
    Sweep(SweepArgs),
    /// Run the same sweep for several spatial/radio model pairs.
    CompareModels(CompareArgs),
    /// Two-sample 2-D KS test between the locations of two datasets.
    KsTest(KsArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Built-in scenario: city_center, stadium, airport or highway.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub preset: Option<String>,
    /// Scenario spec in TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// File name stem (defaults to the scenario name).
    #[arg(long)]
    pub stem: Option<String>,
    /// Also write seeded train/val/test parts.
    #[arg(long)]
    pub split: bool,
}

#[derive(Debug, Args)]
pub struct FitSpatialArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, default_value = "kde")]
    pub model: SpatialKind,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value = "kde")]
    pub spatial: SpatialKind,
    #[arg(long, default_value = "knn")]
    pub radio: RadioKind,
    /// Shadowing variance added by the KNN transfer, dB².
    #[arg(long, default_value_t = 8.0)]
    pub sigma2: f64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Augmentation rate A >= 1.
    #[arg(long)]
    pub rate: u32,
    #[command(flatten)]
    pub models: ModelArgs,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Test records to position.
    #[arg(long)]
    pub test: PathBuf,
    /// Ground-truth sidecar for the test records; defaults to their own coordinates.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Scenario metadata holding the truth frame; defaults to the sidecar's `.meta.json`.
    #[arg(long, requires = "truth")]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WknnArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Compare only PCIs present in both fingerprints.
    #[arg(long)]
    pub common_only: bool,
}

impl WknnArgs {
    fn config(&self) -> WknnConfig {
        WknnConfig {
            k: self.k,
            common_only: self.common_only,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Reference database.
    #[arg(long)]
    pub db: PathBuf,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub wknn: WknnArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub test: TestArgs,
    /// Sweep spec in TOML; command-line values below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<u32>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub spatial: Option<SpatialKind>,
    #[arg(long)]
    pub radio: Option<RadioKind>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub test: TestArgs,
    /// Comma-separated model pairs such as kde-knn,kde-gpr_se.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "kde-knn,gmm-knn,kde-gpr_se,kde-gpr_rq"
    )]
    pub models: Vec<ModelPair>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,30")]
    pub rates: Vec<u32>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 8.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct KsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return 1;
        }
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli),
        Command::FitSpatial(a) => cmd_fit_spatial(a, cli),
        Command::Augment(a) => cmd_augment(a, cli),
        Command::Evaluate(a) => cmd_evaluate(a, cli),
        Command::Sweep(a) => cmd_sweep(a, cli),
        Command::CompareModels(a) => cmd_compare(a, cli),
        Command::KsTest(a) => cmd_ks(a, cli),
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_generate(a: &GenerateArgs, cli: &Cli) -> Result<()> {
    let spec = match (&a.preset, &a.config) {
        (Some(name), _) => preset(name)?,
        (None, Some(path)) => ScenarioSpec::load(path)?,
        (None, None) => return Err(Error::invalid("generate needs --preset or --config")),
    }
    .with_seed(cli.seed);
    let sc = generate(&spec)?;
    let dir = out_dir(cli)?;
    let stem = a.stem.clone().unwrap_or_else(|| spec.name.clone());
    let files = sc.write(&dir, &stem)?;
    println!(
        "{}: {} records, {} PCIs, {} dropped",
        files.csv.display(),
        sc.db.len(),
        sc.db.pci_universe().len(),
        sc.dropped
    );
    if a.split {
        let parts = split_indices(sc.db.len(), &SplitSpec::with_seed(cli.seed))?;
        for (name, idx) in ["train", "val", "test"].iter().zip(parts) {
            let (db, truth) = sc.part(&idx)?;
            let part_stem = format!("{stem}.{name}");
            let csv = dir.join(format!("{part_stem}.csv"));
            write_csv(&db, &csv)?;
            write_truth_csv(&truth, &dir.join(format!("{part_stem}.truth.csv")))?;
            let mut meta = sc.meta();
            meta.records = db.len();
            write_json(&meta, &dir.join(format!("{part_stem}.meta.json")))?;
            println!("{}: {} records", csv.display(), db.len());
        }
    }
    Ok(())
}

fn cmd_fit_spatial(a: &FitSpatialArgs, cli: &Cli) -> Result<()> {
    let db = load_csv(&a.train)?;
    let fit = fit_spatial(&db.locals(), &SpatialConfig::of_kind(a.model), cli.seed)?;
    match &fit.model {
        SpatialModel::Kde(k) => println!(
            "kde: bandwidth {:.3} m over {} points",
            k.bandwidth(),
            db.len()
        ),
        SpatialModel::Gmm(g) => println!("gmm: {} components", g.k()),
    }
    let path = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("spatial.toml"));
    SpatialModelFile::from_model(&fit.model, &a.train, (0..db.len()).collect(), cli.seed)
        .save(&path)
}

#[derive(Serialize)]
struct AugmentProvenance<'a> {
    crate_version: &'static str,
    train: &'a Path,
    rate: u32,
    seed: u64,
    config: PipelineConfig,
    records: usize,
    synthetic: usize,
    clamped_values: usize,
}

fn cmd_augment(a: &AugmentArgs, cli: &Cli) -> Result<()> {
    if a.rate == 0 {
        return Err(Error::invalid("augmentation rate must be >= 1"));
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("augmented.csv"));
    let cfg = PipelineConfig::new(a.models.spatial, a.models.radio, a.models.sigma2);
    let train = load_csv(&a.train)?;
    let (records, synthetic, clamped) = if a.rate == 1 {
        std::fs::copy(&a.train, &out).map_err(|e| Error::io(&out, e))?;
        (train.len(), 0, 0)
    } else {
        let aug = augment(&train, a.rate, &cfg, cli.seed)?;
        write_csv(&aug.db, &out)?;
        (
            aug.db.len(),
            aug.db.len() - aug.original,
            aug.stats.clamped_values,
        )
    };
    println!(
        "{}: {records} records ({synthetic} synthetic)",
        out.display()
    );
    let prov = AugmentProvenance {
        crate_version: env!("CARGO_PKG_VERSION"),
        train: &a.train,
        rate: a.rate,
        seed: cli.seed,
        config: cfg,
        records,
        synthetic,
        clamped_values: clamped,
    };
    write_json(&prov, &sidecar(&out, "provenance.json"))
}

/// `dir/name.csv` → `dir/name.<suffix>`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Test queries with truth in the frame of `db`.
fn load_eval(t: &TestArgs, frame: &Projection) -> Result<(FingerprintDatabase, EvalSet)> {
    let test = load_csv(&t.test)?;
    let eval = match &t.truth {
        None => EvalSet::from_db(&test, frame)?,
        Some(truth_path) => {
            let meta_path = match &t.meta {
                Some(m) => m.clone(),
                None => meta_for_truth(truth_path)?,
            };
            let meta = read_meta(&meta_path)?;
            let truth = read_truth_csv(truth_path)?;
            EvalSet::from_truth(&test, &truth, &Projection::with_origin(meta.origin)?, frame)?
        }
    };
    Ok((test, eval))
}

fn meta_for_truth(truth: &Path) -> Result<PathBuf> {
    let name = truth
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    match name.strip_suffix(".truth.csv") {
        Some(stem) => Ok(truth.with_file_name(format!("{stem}.meta.json"))),
        None => Err(Error::invalid(format!(
            "cannot infer metadata for {}; pass --meta",
            truth.display()
        ))),
    }
}

#[derive(Serialize)]
struct EvaluateReport<'a> {
    crate_version: &'static str,
    db: &'a Path,
    test: &'a Path,
    truth: Option<&'a Path>,
    wknn: WknnConfig,
    queries: usize,
    located: usize,
    unlocatable: usize,
    mean_error_m: f64,
    median_error_m: f64,
}

fn cmd_evaluate(a: &EvaluateArgs, cli: &Cli) -> Result<()> {
    let db = load_csv(&a.db)?;
    let (_, eval) = load_eval(&a.test, db.projection())?;
    let wknn = a.wknn.config();
    let rep = eval.evaluate(&db, &wknn)?;
    let dir = out_dir(cli)?;
    write_errors_csv(&rep.errors, &dir.join("errors.csv"))?;
    let summary = EvaluateReport {
        crate_version: env!("CARGO_PKG_VERSION"),
        db: &a.db,
        test: &a.test.test,
        truth: a.test.truth.as_deref(),
        wknn,
        queries: eval.len(),
        located: rep.errors.len(),
        unlocatable: rep.unlocatable,
        mean_error_m: rep.mean_error_m,
        median_error_m: rep.median_error_m,
    };
    write_json(&summary, &dir.join("report.json"))?;
    println!(
        "mean {:.3} m, median {:.3} m over {} queries ({} unlocatable)",
        rep.mean_error_m,
        rep.median_error_m,
        rep.errors.len(),
        rep.unlocatable
    );
    Ok(())
}

fn sweep_spec(a: &SweepArgs, cli: &Cli) -> Result<SweepSpec> {
    let mut spec = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
                path: path.clone(),
                msg: e.to_string(),
            })?;
            toml::from_str(&text).map_err(|e| Error::Config {
                path: path.clone(),
                msg: e.to_string(),
            })?
        }
        None => SweepSpec::default(),
    };
    spec.seed = cli.seed;
    if let Some(r) = &a.rates {
        spec.rates = r.clone();
    }
    if let Some(n) = a.runs {
        spec.n_runs = n;
    }
    if let Some(s) = a.spatial {
        spec.spatial_model = s;
    }
    if let Some(r) = a.radio {
        spec.radio_model = r;
    }
    if let Some(s) = a.sigma2 {
        spec.shadow_sigma2_db = s;
    }
    if let Some(k) = a.k {
        spec.wknn.k = k;
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct Inputs<'a, T> {
    train: &'a Path,
    test: &'a Path,
    truth: Option<&'a Path>,
    #[serde(flatten)]
    result: &'a T,
}

fn cmd_sweep(a: &SweepArgs, cli: &Cli) -> Result<()> {
    let spec = sweep_spec(a, cli)?;
    let train = load_csv(&a.train)?;
    let (_, eval) = load_eval(&a.test, train.projection())?;
    let rep = run_sweep(&train, &eval, &spec)?;
    let dir = out_dir(cli)?;
    write_json(
        &Inputs {
            train: &a.train,
            test: &a.test.test,
            truth: a.test.truth.as_deref(),
            result: &rep,
        },
        &dir.join("sweep.json"),
    )?;
    let mut runs = String::from("rate,run,seed,db_size,mean_error_m,median_error_m,unlocatable\n");
    for r in &rep.runs {
        runs.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.rate, r.run, r.seed, r.db_size, r.mean_error_m, r.median_error_m, r.unlocatable
        ));
    }
    let path = dir.join("runs.csv");
    std::fs::write(&path, runs).map_err(|e| Error::io(&path, e))?;
    for s in &rep.per_rate {
        println!(
            "A={:<3} {:.3} ± {:.3} m ({} runs)",
            s.rate, s.mean_error_m, s.ci_half_width_m, s.runs
        );
    }
    if let Some(m) = &rep.significance {
        print!("{}", m.render());
    }
    Ok(())
}

fn cmd_compare(a: &CompareArgs, cli: &Cli) -> Result<()> {
    let base = SweepSpec {
        rates: a.rates.clone(),
        n_runs: a.runs,
        seed: cli.seed,
        shadow_sigma2_db: a.sigma2,
        wknn: WknnConfig::with_k(a.k),
        ..Default::default()
    };
    let train = load_csv(&a.train)?;
    let (_, eval) = load_eval(&a.test, train.projection())?;
    let table = compare_models(&train, &eval, &a.models, &base)?;
    let dir = out_dir(cli)?;
    write_json(
        &Inputs {
            train: &a.train,
            test: &a.test.test,
            truth: a.test.truth.as_deref(),
            result: &table,
        },
        &dir.join("comparison.json"),
    )?;
    print!("{}", table.render());
    Ok(())
}

#[derive(Serialize)]
struct KsReport<'a> {
    a: &'a Path,
    b: &'a Path,
    seed: u64,
    n_a: usize,
    n_b: usize,
    statistic: f64,
    p_value: f64,
    n_permutations: usize,
}

fn cmd_ks(a: &KsArgs, cli: &Cli) -> Result<()> {
    let da = load_csv(&a.a)?;
    let db = load_csv(&a.b)?.reproject(*da.projection())?;
    let r = ks2d_test(&da.locals(), &db.locals(), a.permutations, cli.seed)?;
    let rep = KsReport {
        a: &a.a,
        b: &a.b,
        seed: cli.seed,
        n_a: da.len(),
        n_b: db.len(),
        statistic: r.statistic,
        p_value: r.p_value,
        n_permutations: r.n_permutations,
    };
    println!(
        "D = {:.4}, p = {:.4} ({} permutations)",
        r.statistic, r.p_value, r.n_permutations
    );
    match &cli.out {
        Some(path) => write_json(&rep, path),
        None => Ok(()),
    }
}
