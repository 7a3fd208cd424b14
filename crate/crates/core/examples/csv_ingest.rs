//! Reads a sparse MDT table, prints its PCI universe and splits it.

use mdt_augment::mdt::{csv_string, read_csv, split, SplitSpec};

const SAMPLE: &str = "\
Longitude,Latitude,RSRP_PCI_1,RSRP_PCI_2,RSRP_PCI_3
11.3456,44.4945,-87,-95,
11.3460,44.4951,-90,-92,-105
11.3465,44.4958,-85,,-102
11.3470,44.4963,-88,-96,-113
11.3474,44.4968,-91,,-99
11.3479,44.4972,-95,-101,
11.3483,44.4977,-93,-98,-104
11.3488,44.4981,,-94,-97
11.3492,44.4986,-99,-92,
11.3497,44.4990,-102,-90,-95
";

fn main() -> mdt_augment::error::Result<()> {
    let db = read_csv(SAMPLE.as_bytes(), None)?;
    println!("{} records, PCIs {:?}", db.len(), db.pci_universe());
    for (i, r) in db.records().iter().enumerate().take(3) {
        let cells: Vec<String> = r.rsrp.iter().map(|(pci, v)| format!("{pci}:{v}")).collect();
        println!(
            "  #{i} at ({:.1}, {:.1}) m -> {}",
            r.local.x,
            r.local.y,
            cells.join(" ")
        );
    }

    // malformed rows are rejected with 1-based row and column
    let bad = "Longitude,Latitude,RSRP_PCI_1\n11.34,44.49,-20\n";
    if let Err(e) = read_csv(bad.as_bytes(), None) {
        println!("rejected: {e}");
    }

    let parts = split(&db, &SplitSpec::with_seed(7))?;
    println!(
        "split 60/20/20: train {}, val {}, test {}",
        parts.train.len(),
        parts.val.len(),
        parts.test.len()
    );
    print!("\ntest part as CSV:\n{}", csv_string(&parts.test));
    Ok(())
}
