//! Locates test fingerprints against a reference database for several K.

use mdt_augment::mdt::{split, SplitSpec};
use mdt_augment::pipeline::EvalSet;
use mdt_augment::positioning::{WknnConfig, WknnLocator};
use mdt_augment::scenario::{generate, preset};

fn main() -> mdt_augment::error::Result<()> {
    let sc = generate(&preset("highway")?.with_seed(2))?;
    let parts = split(&sc.db, &SplitSpec::with_seed(2))?;
    let eval = EvalSet::from_db(&parts.test, parts.train.projection())?;

    let locator = WknnLocator::new(&parts.train, WknnConfig::default())?;
    let first = &parts.test.records()[0];
    let est = locator.locate(&first.rsrp)?;
    println!(
        "query 0: estimate ({:.1}, {:.1}), truth ({:.1}, {:.1})",
        est.point.x, est.point.y, eval.truth[0].x, eval.truth[0].y
    );

    println!("\n  K  mean (m)  median (m)");
    for k in [1, 3, 5, 10, 20] {
        let rep = eval.evaluate(&parts.train, &WknnConfig::with_k(k))?;
        println!(
            "{k:>3}  {:>8.1}  {:>10.1}",
            rep.mean_error_m, rep.median_error_m
        );
    }
    let common = WknnConfig {
        common_only: true,
        ..Default::default()
    };
    let rep = eval.evaluate(&parts.train, &common)?;
    println!("shared-PCI distance, K=5: mean {:.1} m", rep.mean_error_m);
    Ok(())
}
