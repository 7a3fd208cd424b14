//! Local tangent-plane projection of a handful of coordinates.

use mdt_augment::geo::{position_error, GeoPoint, Projection};

fn main() -> mdt_augment::error::Result<()> {
    let sites = [
        ("Piazza Maggiore", 44.4938, 11.3430),
        ("Due Torri", 44.4941, 11.3468),
        ("Stazione Centrale", 44.5058, 11.3426),
        ("Stadio Dall'Ara", 44.4925, 11.3097),
    ];
    let points: Vec<GeoPoint> = sites
        .iter()
        .map(|&(_, lat, lon)| GeoPoint::new(lat, lon))
        .collect::<Result<_, _>>()?;
    let proj = Projection::from_points(&points)?;
    let origin = proj.origin();
    println!("origin: {:.6}, {:.6}", origin.lat, origin.lon);

    let local: Vec<_> = points
        .iter()
        .map(|&p| proj.project(p))
        .collect::<Result<_, _>>()?;
    for ((name, ..), p) in sites.iter().zip(&local) {
        println!("{name:>18}: x = {:>9.1} m, y = {:>8.1} m", p.x, p.y);
    }

    println!("\npairwise distances (m):");
    for i in 0..local.len() {
        for j in i + 1..local.len() {
            println!(
                "  {} - {}: {:.1}",
                sites[i].0,
                sites[j].0,
                position_error(local[i], local[j])
            );
        }
    }

    let back = proj.unproject(local[3])?;
    println!(
        "\nround trip of {}: dlat {:.2e}, dlon {:.2e} deg",
        sites[3].0,
        back.lat - points[3].lat,
        back.lon - points[3].lon
    );
    Ok(())
}
