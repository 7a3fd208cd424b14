//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion with the
//! numbers behind it. Exits non-zero on a failed criterion only when
//! `ACCEPTANCE_STRICT` is set, so the regular test run reports rather than aborts.

use std::time::Instant;

use mdt_augment::geo::{GeoPoint, LocalPoint};
use mdt_augment::mdt::{
    csv_string, read_csv, split, Fingerprint, FingerprintDatabase, Split, SplitSpec,
};
use mdt_augment::pipeline::{run_sweep, EvalSet, SweepSpec};
use mdt_augment::positioning::{fingerprint_distance, median, wknn_locate, WknnConfig};
use mdt_augment::radio::{
    gpr_fit, kernel_value, mae_evaluate, nearest_index, GprConfig, GprPci, Hyper, KernelKind,
    KnnTransfer, NearestNeighbors, RadioPredictor, ShadowingSpec, TransferConfig,
};
use mdt_augment::scenario::{generate, preset, Scenario};
use mdt_augment::spatial::{fit_em, fit_spatial, EmOptions, KdeModel, SpatialConfig};
use mdt_augment::stats::{
    ks2d_statistic, ks2d_test, make_rng, pairwise_compare, quadrant_statistic, Verdict,
    DEFAULT_ALPHA, DEFAULT_PERMUTATIONS,
};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{Binomial, DiscreteCDF};

const PRESETS: [&str; 4] = ["city_center", "stadium", "airport", "highway"];
const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            summary: String::new(),
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.pass = false;
        }
        self.details
            .push(format!("{} {what}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.details.push(format!("     {}", what.into()));
    }
}

fn scenario(name: &str, seed: u64) -> (Scenario, Split) {
    let sc = generate(&preset(name).unwrap().with_seed(seed)).unwrap();
    let parts = split(&sc.db, &SplitSpec::with_seed(seed)).unwrap();
    (sc, parts)
}

fn uniform_points(n: usize, side: f64, seed: u64) -> Vec<LocalPoint> {
    let mut rng = make_rng(seed, 0);
    (0..n)
        .map(|_| LocalPoint::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
        .collect()
}

// ---------------------------------------------------------------- oracles

fn linear_nearest(points: &[LocalPoint], q: LocalPoint) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.distance_sq(&q) < points[best].distance_sq(&q) {
            best = i;
        }
    }
    best
}

/// Quadrant masses counted by hand for each anchor.
fn enumerated_ks(a: &[LocalPoint], b: &[LocalPoint]) -> f64 {
    let frac = |s: &[LocalPoint], o: &LocalPoint, sx: f64, sy: f64| {
        s.iter()
            .filter(|p| (p.x - o.x) * sx > 0.0 && (p.y - o.y) * sy > 0.0)
            .count() as f64
            / s.len() as f64
    };
    let side = |anchors: &[LocalPoint]| {
        let mut best = 0.0f64;
        for o in anchors {
            for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
                best = best.max((frac(a, o, sx, sy) - frac(b, o, sx, sy)).abs());
            }
        }
        best
    };
    0.5 * (side(a) + side(b))
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            let pivot = a[c].clone();
            for (x, p) in a[r][c..].iter_mut().zip(&pivot[c..]) {
                *x -= f * p;
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::new();

    let mut pts = uniform_points(400, 2000.0, 1);
    pts.extend(pts[..40].to_vec()); // duplicates exercise the tie rule
    let index = NearestNeighbors::new(pts.clone()).unwrap();
    let geo: Vec<_> = pts
        .iter()
        .map(|p| {
            let g = GeoPoint::new(44.5 + p.y / 111_000.0, 11.3 + p.x / 79_000.0).unwrap();
            (g, [(1u32, -80.0)].into_iter().collect::<Fingerprint>())
        })
        .collect();
    let db = FingerprintDatabase::new(geo, None, &[]).unwrap();
    let locals = db.locals();
    let transfer = KnnTransfer::new(&db, TransferConfig::default(), ShadowingSpec::none()).unwrap();
    let queries = uniform_points(1000, 2200.0, 2);
    let mut tree_miss = 0;
    let mut db_miss = 0;
    for q in &queries {
        tree_miss += (index.nearest(*q) != linear_nearest(&pts, *q)) as usize;
        let want = linear_nearest(&locals, *q);
        db_miss += (nearest_index(&db, *q).unwrap() != want || transfer.nearest_index(*q) != want)
            as usize;
    }
    out.check(
        tree_miss == 0 && db_miss == 0,
        format!(
            "nearest index vs linear scan: {tree_miss} + {db_miss} mismatches over 1000 queries"
        ),
    );

    let (_, parts) = scenario("stadium", 3);
    let cfg = WknnConfig::with_k(1);
    let universe = parts.train.pci_universe();
    let mut wknn_miss = 0;
    for r in parts.test.records().iter().take(300) {
        let est = wknn_locate(&parts.train, &r.rsrp, &cfg).unwrap();
        let dists: Vec<f64> = parts
            .train
            .records()
            .iter()
            .map(|t| fingerprint_distance(&r.rsrp, &t.rsrp, universe, cfg.missing_floor))
            .collect();
        let best = (0..dists.len())
            .min_by(|&a, &b| dists[a].total_cmp(&dists[b]))
            .unwrap();
        wknn_miss += (est.point != parts.train.record(best).local) as usize;
    }
    out.check(
        wknn_miss == 0,
        format!("wKNN k=1 vs exhaustive argmin: {wknn_miss} mismatches over 300 queries"),
    );

    let mut ks_miss = 0;
    for s in 0..200u64 {
        // a coarse lattice forces shared coordinates, which the quadrant rule must skip
        let snap = |v: Vec<LocalPoint>| -> Vec<LocalPoint> {
            v.into_iter()
                .map(|p| LocalPoint::new(p.x.floor(), p.y.floor()))
                .collect()
        };
        let a = snap(uniform_points(5, 4.0, 100 + s));
        let b = snap(uniform_points(5, 4.0, 500 + s));
        ks_miss += (quadrant_statistic(&a, &b) != enumerated_ks(&a, &b)) as usize;
        let a = uniform_points(12, 1.0, 900 + s);
        let b = uniform_points(10, 1.0, 1300 + s);
        ks_miss += (ks2d_statistic(&a, &b).unwrap() != enumerated_ks(&a, &b)) as usize;
    }
    out.check(
        ks_miss == 0,
        format!("KS statistic vs enumeration (n=5 and n>=10): {ks_miss} mismatches in 400"),
    );

    let mut worst = 0.0f64;
    for s in 0..50u64 {
        let mut rng = make_rng(7, s);
        let n = 1 + (s as usize % 5);
        let inputs = uniform_points(n, 300.0, 2000 + s);
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-110.0..-70.0)).collect();
        let kind = if s % 2 == 0 {
            KernelKind::Se
        } else {
            KernelKind::Rq
        };
        let hyper = Hyper {
            signal_var: rng.random_range(5.0..60.0),
            length_scale: rng.random_range(20.0..400.0),
            noise_var: rng.random_range(0.1..5.0),
            alpha: rng.random_range(0.5..2.0),
        };
        let mu = -90.0;
        let gp = GprPci::fit_fixed(kind, hyper, mu, &inputs, &targets).unwrap();
        let noise = hyper.noise_var + gp.jitter();
        let gram: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        kernel_value(kind, &hyper, inputs[i].distance_sq(&inputs[j]))
                            + if i == j { noise } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let w = dense_solve(gram.clone(), targets.iter().map(|t| t - mu).collect());
        for q in uniform_points(20, 400.0, 3000 + s) {
            let k: Vec<f64> = inputs
                .iter()
                .map(|x| kernel_value(kind, &hyper, x.distance_sq(&q)))
                .collect();
            let mean = mu + k.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let v = dense_solve(gram.clone(), k.clone());
            let var =
                (hyper.signal_var - k.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
            worst = worst
                .max((gp.mean(q) - mean).abs())
                .max((gp.variance(q) - var).abs());
        }
    }
    out.check(
        worst <= 1e-9,
        format!("GP posterior vs dense solve on <=5 points: max deviation {worst:.2e}"),
    );
    out.summary = "oracle equivalence".into();
    out
}

// ---------------------------------------------------------------- calibration

fn binomial_band(n: u64, p: f64) -> (u64, u64) {
    let d = Binomial::new(p, n).unwrap();
    let lo = (0..=n).find(|&k| d.cdf(k) >= 0.025).unwrap();
    let hi = (0..=n).find(|&k| d.cdf(k) >= 0.975).unwrap();
    (lo, hi)
}

fn criterion_2() -> Outcome {
    let mut out = Outcome::new();
    let trials = 200u64;

    let (lo, hi) = binomial_band(trials, DEFAULT_ALPHA);
    let rejections = (0..trials)
        .filter(|&t| {
            let a = uniform_points(40, 1.0, 10_000 + t);
            let b = uniform_points(40, 1.0, 20_000 + t);
            ks2d_test(&a, &b, DEFAULT_PERMUTATIONS, t)
                .unwrap()
                .rejects(DEFAULT_ALPHA)
        })
        .count() as u64;
    out.check(
        (lo..=hi).contains(&rejections),
        format!("KS rejections under the null: {rejections}/{trials}, band [{lo}, {hi}]"),
    );

    let (lo, hi) = binomial_band(trials, 1.0 - DEFAULT_ALPHA);
    let gamma = Gamma::new(2.0, 40.0).unwrap();
    let quiet = (0..trials)
        .filter(|&t| {
            let mut rng = make_rng(30_000 + t, 0);
            let a: Vec<f64> = (0..30).map(|_| gamma.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..30).map(|_| gamma.sample(&mut rng)).collect();
            pairwise_compare(&a, &b, DEFAULT_ALPHA).unwrap().verdict == Verdict::NotSignificant
        })
        .count() as u64;
    out.check(
        (lo..=hi).contains(&quiet),
        format!(
            "not significant on identical error distributions: {quiet}/{trials}, band [{lo}, {hi}]"
        ),
    );
    out.summary = "statistical calibration".into();
    out
}

// ---------------------------------------------------------------- fidelity

fn criterion_3() -> Outcome {
    let mut out = Outcome::new();
    for name in PRESETS {
        let mut ps = Vec::new();
        for seed in 0..SEEDS {
            let (_, parts) = scenario(name, seed);
            let val = parts.val.locals();
            let fit = fit_spatial(&parts.train.locals(), &SpatialConfig::default(), seed).unwrap();
            let gen = fit.model.sample(val.len(), seed + 100);
            ps.push(
                ks2d_test(&gen, &val, DEFAULT_PERMUTATIONS, seed + 200)
                    .unwrap()
                    .p_value,
            );
        }
        let passing = ps.iter().filter(|&&p| p > 0.05).count();
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        out.check(
            passing >= 8,
            format!("{name}: p > 0.05 in {passing}/10 seeds (mean p {mean:.2})"),
        );
    }
    out.summary = "KDE locations vs held-out locations".into();
    out
}

fn criterion_4() -> Outcome {
    let mut out = Outcome::new();
    let mut spec = preset("stadium").unwrap().with_seed(4);
    spec.sigma2_s = 0.0;
    let sc = generate(&spec).unwrap();
    let knn = KnnTransfer::new(&sc.db, TransferConfig::default(), ShadowingSpec::none()).unwrap();
    let mae = mae_evaluate(&knn, &sc.db).unwrap();
    out.check(
        mae.mae_db == 0.0 && mae.coverage == 1.0,
        format!(
            "noise-free transfer at training locations: MAE {} dB over {} pairs",
            mae.mae_db, mae.pairs
        ),
    );

    let at = LocalPoint::new(0.0, 0.0);
    let fp: Fingerprint = [(7u32, -95.0)].into_iter().collect();
    let db = FingerprintDatabase::new(vec![(GeoPoint::new(44.5, 11.3).unwrap(), fp)], None, &[])
        .unwrap();
    let noisy = KnnTransfer::new(
        &db,
        TransferConfig::default(),
        ShadowingSpec::new(8.0, 11).unwrap(),
    )
    .unwrap();
    let draws: Vec<f64> = (0..10_000u64)
        .map(|i| noisy.predict(at, i).rsrp.get(7).unwrap() + 95.0)
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    out.check(
        (var - 8.0).abs() <= 0.4,
        format!("transfer noise variance over 10000 draws: {var:.3} dB² (target 8, ±5%)"),
    );
    out.summary = "radio transfer fidelity".into();
    out
}

// ---------------------------------------------------------------- trends

fn sweep_means(parts: &Split, rates: &[u32], k: usize, seed: u64) -> (Vec<f64>, Option<Verdict>) {
    let eval = EvalSet::from_db(&parts.test, parts.train.projection()).unwrap();
    let spec = SweepSpec {
        rates: rates.to_vec(),
        n_runs: 10,
        wknn: WknnConfig::with_k(k),
        seed,
        ..Default::default()
    };
    let rep = run_sweep(&parts.train, &eval, &spec).unwrap();
    let last = rates[rates.len() - 1];
    let prev = rates[rates.len() - 2];
    let verdict = rep
        .significance
        .as_ref()
        .and_then(|m| m.verdict(last, prev));
    (
        rep.per_rate.iter().map(|r| r.mean_error_m).collect(),
        verdict,
    )
}

fn criterion_5() -> Outcome {
    let mut out = Outcome::new();
    for k in [5, 10, 20] {
        let mut gains = Vec::new();
        for seed in 0..SEEDS {
            let (_, parts) = scenario("highway", seed);
            let (m, _) = sweep_means(&parts, &[1, 10], k, seed);
            gains.push((m[0] - m[1]) / m[0]);
        }
        let better = gains.iter().filter(|&&g| g > 0.0).count();
        let med = median(&gains);
        let line = format!(
            "highway K={k}: A=10 beats A=1 in {better}/10 seeds, median improvement {:.1}%",
            100.0 * med
        );
        if k == 5 {
            out.check(better >= 8 && med >= 0.10, line);
        } else {
            out.note(format!("{line} (diagnostic)"));
        }
    }

    let mut improved = 0;
    let mut saturated = 0;
    let mut table = Vec::new();
    for seed in 0..SEEDS {
        let (_, parts) = scenario("city_center", seed);
        let (m, verdict) = sweep_means(&parts, &[1, 20, 30], 5, seed);
        improved += (m[1] < m[0]) as usize;
        saturated += (verdict == Some(Verdict::NotSignificant)) as usize;
        table.push(format!("{:.1}/{:.1}/{:.1}", m[0], m[1], m[2]));
    }
    out.check(
        improved >= 7,
        format!("city_center: A=20 beats A=1 in {improved}/10 repetitions"),
    );
    out.check(
        saturated >= 7,
        format!("city_center: A=30 vs A=20 not significant in {saturated}/10 repetitions"),
    );
    out.note(format!(
        "city_center mean error A=1/20/30 (m): {}",
        table.join(" ")
    ));
    out.summary = "augmentation trends".into();
    out
}

fn criterion_6() -> Outcome {
    let mut out = Outcome::new();
    for name in PRESETS {
        let mut wins = 0;
        let mut wins_noisy = 0;
        let mut rows = Vec::new();
        for seed in 0..SEEDS {
            let (sc, parts) = scenario(name, seed);
            let knn = KnnTransfer::new(
                &parts.train,
                TransferConfig::default(),
                ShadowingSpec::none(),
            )
            .unwrap();
            let k0 = mae_evaluate(&knn, &parts.test).unwrap().mae_db;
            let noisy = knn
                .with_shadowing(ShadowingSpec::new(sc.spec.sigma2_s, seed).unwrap())
                .unwrap();
            let ks = mae_evaluate(&noisy, &parts.test).unwrap().mae_db;
            let gp = gpr_fit(&parts.train, &GprConfig::new(KernelKind::Se), seed).unwrap();
            let g = mae_evaluate(&gp, &parts.test).unwrap().mae_db;
            wins += (k0 <= g) as usize;
            wins_noisy += (ks <= g) as usize;
            rows.push(format!("{k0:.2}/{ks:.2}/{g:.2}"));
        }
        out.check(
            wins >= 7,
            format!("{name}: KNN MAE <= GPR-SE MAE in {wins}/10 seeds"),
        );
        out.note(format!(
            "{name}: with transfer noise KNN wins {wins_noisy}/10; MAE knn/knn+noise/gpr_se (dB): {}",
            rows.join(" ")
        ));
    }
    out.summary = "KNN vs GPR-SE radio MAE".into();
    out
}

// ---------------------------------------------------------------- invariants

fn criterion_7() -> Outcome {
    let mut out = Outcome::new();

    let centers = uniform_points(30, 500.0, 70);
    let h = 40.0;
    let kde = KdeModel::new(centers, h).unwrap();
    let step = h / 8.0;
    let (lo, hi) = (-8.0 * h, 500.0 + 8.0 * h);
    let n = ((hi - lo) / step) as usize;
    let mut mass = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = LocalPoint::new(lo + (i as f64 + 0.5) * step, lo + (j as f64 + 0.5) * step);
            mass += kde.density(p) * step * step;
        }
    }
    out.check(
        (mass - 1.0).abs() <= 0.01,
        format!("KDE integrates to {mass:.5}"),
    );

    let (_, parts) = scenario("stadium", 7);
    let locs = parts.train.locals();
    let mut drops = 0;
    for seed in 0..5 {
        let run = fit_em(&locs, 4, seed, &EmOptions::default()).unwrap();
        drops += run
            .trace
            .windows(2)
            .filter(|w| w[1] < w[0] - 1e-9 * w[0].abs())
            .count();
    }
    out.check(drops == 0, format!("EM log-likelihood decreases: {drops}"));

    let inputs = uniform_points(40, 600.0, 71);
    let mut rng = make_rng(72, 0);
    let y1: Vec<f64> = (0..40)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * 6.0)
        .collect();
    let y2: Vec<f64> = (0..40)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * 6.0)
        .collect();
    let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 2.0 * a - b).collect();
    let hyper = Hyper {
        signal_var: 30.0,
        length_scale: 120.0,
        noise_var: 1.0,
        alpha: 1.0,
    };
    let fit = |y: &[f64]| GprPci::fit_fixed(KernelKind::Se, hyper, 0.0, &inputs, y).unwrap();
    let (g1, g2, gs) = (fit(&y1), fit(&y2), fit(&sum));
    let lin = uniform_points(200, 700.0, 73)
        .iter()
        .map(|&q| (gs.mean(q) - (2.0 * g1.mean(q) - g2.mean(q))).abs())
        .fold(0.0, f64::max);
    out.check(
        lin <= 1e-9,
        format!("GP mean linear in targets: max deviation {lin:.2e}"),
    );

    let mut asym = 0;
    for t in 0..50u64 {
        let mut rng = make_rng(80 + t, 0);
        let a: Vec<f64> = (0..30).map(|_| rng.random_range(50.0..150.0)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(40.0..140.0)).collect();
        let ab = pairwise_compare(&a, &b, DEFAULT_ALPHA).unwrap();
        let ba = pairwise_compare(&b, &a, DEFAULT_ALPHA).unwrap();
        let ok = ab.mean_diff == -ba.mean_diff
            && ab.ci_low == -ba.ci_high
            && ab.ci_high == -ba.ci_low
            && ab.verdict == ba.verdict.mirrored();
        asym += !ok as usize;
    }
    out.check(asym == 0, format!("CI antisymmetry violations: {asym}/50"));

    let mut csv_bad = 0;
    for name in PRESETS {
        let (sc, _) = scenario(name, 8);
        let text = csv_string(&sc.db);
        let back = read_csv(text.as_bytes(), None).unwrap();
        csv_bad += (csv_string(&back) != text) as usize;
    }
    out.check(
        csv_bad == 0,
        format!("CSV write/read/write differs for {csv_bad} presets"),
    );

    let (_, parts) = scenario("highway", 9);
    let eval = EvalSet::from_db(&parts.test, parts.train.projection()).unwrap();
    let spec = SweepSpec {
        rates: vec![1, 5],
        n_runs: 3,
        seed: 9,
        ..Default::default()
    };
    let a = run_sweep(&parts.train, &eval, &spec).unwrap();
    let b = run_sweep(&parts.train, &eval, &spec).unwrap();
    out.check(a == b, "sweep repeated under one seed is identical");
    out.summary = "numerical invariants".into();
    out
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7", criterion_7),
    ];
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').map(str::to_owned).collect());
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        println!(
            "[{}] criterion {id}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.summary,
            t.elapsed().as_secs_f64()
        );
        for d in &o.details {
            println!("       {d}");
        }
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
