//! Augmentation-rate sweep on the city preset with the cross-rate
//! significance matrix, then a KDE-KNN versus GMM-KNN table.

use mdt_augment::mdt::{split, SplitSpec};
use mdt_augment::pipeline::{compare_models, run_sweep, EvalSet, ModelPair, SweepSpec};
use mdt_augment::scenario::{generate, preset};

fn main() -> mdt_augment::error::Result<()> {
    let spec = preset("city_center")?.with_seed(3);
    let sc = generate(&spec)?;
    let parts = split(&sc.db, &SplitSpec::with_seed(3))?;
    let eval = EvalSet::from_db(&parts.test, parts.train.projection())?;

    let sweep = SweepSpec {
        n_runs: 10,
        seed: 3,
        shadow_sigma2_db: spec.sigma2_s,
        ..Default::default()
    };
    let rep = run_sweep(&parts.train, &eval, &sweep)?;
    for s in &rep.per_rate {
        println!(
            "A = {:>2}: {:.2} ± {:.2} m",
            s.rate, s.mean_error_m, s.ci_half_width_m
        );
    }
    if let Some(m) = &rep.significance {
        println!("\n{}", m.render());
    }

    let models: Vec<ModelPair> = ["kde-knn", "gmm-knn"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let table = compare_models(
        &parts.train,
        &eval,
        &models,
        &SweepSpec {
            rates: vec![1, 5, 20],
            ..sweep
        },
    )?;
    print!("{}", table.render());
    Ok(())
}
