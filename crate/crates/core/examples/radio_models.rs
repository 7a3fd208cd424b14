//! Predicts RSRP at held-out locations with the nearest-record transfer and
//! the per-PCI Gaussian processes, and scores both by MAE.

use mdt_augment::mdt::{split, SplitSpec};
use mdt_augment::radio::{
    gpr_fit, mae_evaluate, GprConfig, KernelKind, KnnTransfer, ShadowingSpec, TransferConfig,
};
use mdt_augment::scenario::{generate, preset};

fn main() -> mdt_augment::error::Result<()> {
    let spec = preset("stadium")?.with_seed(4);
    let sc = generate(&spec)?;
    let parts = split(&sc.db, &SplitSpec::with_seed(4))?;
    println!(
        "stadium: {} train / {} test records",
        parts.train.len(),
        parts.test.len()
    );

    let copy = KnnTransfer::new(
        &parts.train,
        TransferConfig::default(),
        ShadowingSpec::none(),
    )?;
    let noisy = KnnTransfer::new(
        &parts.train,
        TransferConfig::default(),
        ShadowingSpec::new(spec.sigma2_s, 9)?,
    )?;
    let report = |label: &str, r: &mdt_augment::radio::MaeReport| {
        println!(
            "{label:<22} MAE {:.3} dB over {} pairs (coverage {:.2})",
            r.mae_db, r.pairs, r.coverage
        );
    };
    report("knn copy", &mae_evaluate(&copy, &parts.test)?);
    report(
        &format!("knn + shadowing {}", spec.sigma2_s),
        &mae_evaluate(&noisy, &parts.test)?,
    );

    for kind in [KernelKind::Se, KernelKind::Rq] {
        let model = gpr_fit(&parts.train, &GprConfig::new(kind), 4)?;
        report(
            &format!("gpr_{}", kind.name()),
            &mae_evaluate(&model, &parts.test)?,
        );
        if let Some((pci, m)) = model.fitted().iter().next() {
            let h = m.hyper();
            println!(
                "    PCI {pci}: length {:.0} m, signal {:.1} dB², noise {:.1} dB², alpha {}",
                h.length_scale, h.signal_var, h.noise_var, h.alpha
            );
        }
    }
    Ok(())
}
