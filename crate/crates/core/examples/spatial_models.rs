//! Fits KDE and GMM location models to a synthetic city and compares them on
//! held-out locations.

use mdt_augment::mdt::{split, SplitSpec};
use mdt_augment::scenario::{generate, preset};
use mdt_augment::spatial::{fit_spatial, SpatialConfig, SpatialKind};
use mdt_augment::stats::{ks2d_test, DEFAULT_PERMUTATIONS};

fn main() -> mdt_augment::error::Result<()> {
    let sc = generate(&preset("city_center")?.with_seed(1))?;
    let parts = split(&sc.db, &SplitSpec::with_seed(1))?;
    let train = parts.train.locals();
    let held_out = parts.val.locals();
    println!(
        "{} training locations, {} held out",
        train.len(),
        held_out.len()
    );

    let kde = fit_spatial(&train, &SpatialConfig::of_kind(SpatialKind::Kde), 1)?;
    let search = kde
        .bandwidth_search
        .as_ref()
        .expect("KDE fit records its search");
    println!("\nKDE bandwidth search (validation NLL per point):");
    for (h, nll) in search.grid.iter().zip(&search.val_nll) {
        let mark = if *h == search.bandwidth() { "  <-" } else { "" };
        println!("  h = {h:>7.1} m  {nll:.4}{mark}");
    }

    let gmm = fit_spatial(&train, &SpatialConfig::of_kind(SpatialKind::Gmm), 1)?;
    println!("\nGMM by BIC:");
    for c in gmm.gmm_candidates.as_deref().unwrap_or_default() {
        println!("  K = {:>2}  BIC {:>10.1}", c.k, c.bic);
    }

    for (name, fit) in [("kde", &kde), ("gmm", &gmm)] {
        let synthetic = fit.model.sample(held_out.len(), 11);
        let ks = ks2d_test(&synthetic, &held_out, DEFAULT_PERMUTATIONS, 5)?;
        println!("{name}: KS D = {:.3}, p = {:.3}", ks.statistic, ks.p_value);
    }
    Ok(())
}
