use mdt_augment::geo::{position_error, GeoPoint, LocalPoint, Projection, EARTH_RADIUS_M};
use proptest::prelude::*;

/// Great-circle distance on the same sphere the projection uses.
fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (la, lb) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lb - la;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

fn anchor() -> Projection {
    Projection::with_origin(GeoPoint::new(44.4945, 11.3456).unwrap()).unwrap()
}

#[test]
fn meridian_step_matches_formula() {
    let proj = Projection::with_origin(GeoPoint::new(44.0, 11.0).unwrap()).unwrap();
    let p = proj.project(GeoPoint::new(44.001, 11.0).unwrap()).unwrap();
    let expected = EARTH_RADIUS_M * 0.001 * std::f64::consts::PI / 180.0;
    assert!((p.y - expected).abs() < 1e-9);
    assert_eq!(p.x, 0.0);
    let q = proj.project(GeoPoint::new(44.0, 11.001).unwrap()).unwrap();
    assert!((q.x - expected * 44f64.to_radians().cos()).abs() < 1e-9);
    assert!((q.x - 79.99).abs() < 0.01);
}

#[test]
fn centroid_of_identical_points() {
    let p = GeoPoint::new(44.0, 11.0).unwrap();
    let proj = Projection::from_points(&[p, p]).unwrap();
    assert_eq!(proj.origin(), p);
    assert_eq!(proj.project(p).unwrap(), LocalPoint::ORIGIN);
}

#[test]
fn empty_point_set_is_rejected() {
    assert!(Projection::from_points(&[]).is_err());
}

proptest! {
    #[test]
    fn round_trip_within_tolerance(dlat in -0.1f64..0.1, dlon in -0.1f64..0.1) {
        let proj = anchor();
        let g = GeoPoint::new(44.4945 + dlat, 11.3456 + dlon).unwrap();
        let back = proj.unproject(proj.project(g).unwrap()).unwrap();
        prop_assert!((back.lat - g.lat).abs() < 1e-9);
        prop_assert!((back.lon - g.lon).abs() < 1e-9);
    }

    #[test]
    fn planar_error_tracks_haversine(
        a in (-0.02f64..0.02, -0.03f64..0.03),
        b in (-0.02f64..0.02, -0.03f64..0.03),
    ) {
        let proj = anchor();
        let ga = GeoPoint::new(44.4945 + a.0, 11.3456 + a.1).unwrap();
        let gb = GeoPoint::new(44.4945 + b.0, 11.3456 + b.1).unwrap();
        let truth = haversine(ga, gb);
        prop_assume!(truth > 1.0 && truth < 5000.0);
        let planar = position_error(proj.project(ga).unwrap(), proj.project(gb).unwrap());
        prop_assert!((planar - truth).abs() / truth < 1e-3, "planar {} vs {}", planar, truth);
    }

    #[test]
    fn meridian_is_isometric(dlat in -0.2f64..0.2) {
        prop_assume!(dlat.abs() > 1e-6);
        let proj = anchor();
        let g = GeoPoint::new(44.4945 + dlat, 11.3456).unwrap();
        let y = proj.project(g).unwrap().y.abs();
        let truth = haversine(proj.origin(), g);
        prop_assert!((y - truth).abs() / truth < 1e-4);
    }

    #[test]
    fn error_is_a_metric(
        a in (-5e3f64..5e3, -5e3f64..5e3),
        b in (-5e3f64..5e3, -5e3f64..5e3),
        c in (-5e3f64..5e3, -5e3f64..5e3),
    ) {
        let (a, b, c) = (LocalPoint::new(a.0, a.1), LocalPoint::new(b.0, b.1), LocalPoint::new(c.0, c.1));
        prop_assert!(position_error(a, b) >= 0.0);
        prop_assert_eq!(position_error(a, b), position_error(b, a));
        prop_assert!(position_error(a, c) <= position_error(a, b) + position_error(b, c) + 1e-9);
    }
}

#[test]
fn three_four_five() {
    assert_eq!(
        position_error(LocalPoint::new(3.0, 0.0), LocalPoint::new(0.0, 4.0)),
        5.0
    );
    assert_eq!(position_error(LocalPoint::ORIGIN, LocalPoint::ORIGIN), 0.0);
}
