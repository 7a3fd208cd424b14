//! Generates every preset, writes the dataset, truth and metadata files and
//! reads them back.

use mdt_augment::mdt::load_csv;
use mdt_augment::scenario::{generate, preset, read_meta, read_truth_csv, AreaPreset};

fn main() -> mdt_augment::error::Result<()> {
    let dir = std::env::temp_dir().join("mdt-augment-scenarios");
    for area in AreaPreset::NAMED {
        let spec = preset(area.name())?;
        let sc = generate(&spec)?;
        let files = sc.write(&dir, area.name())?;
        let db = load_csv(&files.csv)?;
        let truth = read_truth_csv(&files.truth)?;
        let meta = read_meta(&files.meta)?;
        println!(
            "{:<12} {:>5} records, {:>2} cells, sigma2 {:.1} dB2, {} dropped, {} truth rows, origin {:.4},{:.4}",
            area.name(),
            db.len(),
            spec.cells.len(),
            spec.sigma2_s,
            sc.dropped,
            truth.len(),
            meta.origin.lat,
            meta.origin.lon
        );
    }
    println!("files in {}", dir.display());

    // custom scenarios are TOML with the same field names
    let toml = preset("stadium")?.with_seed(42).to_toml();
    println!("\n{}", toml.lines().take(12).collect::<Vec<_>>().join("\n"));
    Ok(())
}
