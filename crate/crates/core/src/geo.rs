//! WGS-84 coordinates and the local metric frame used by every distance
//! computation in the crate.
//!
//! Records carry latitude/longitude in degrees. Density estimation, nearest
//! neighbour search and positioning error all need meters, so a database is
//! projected once onto an equirectangular plane centred on the mean of its
//! points. At city scale (a few km) the distortion is well below a meter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                lat: self.lat,
                lon: self.lon,
            })
        }
    }
}

/// Meters east (`x`) and north (`y`) of a projection origin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub const ORIGIN: LocalPoint = LocalPoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        LocalPoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_sq(&self, other: &LocalPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &LocalPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(&self, dx: f64, dy: f64) -> LocalPoint {
        LocalPoint::new(self.x + dx, self.y + dy)
    }
}

/// Equirectangular projection about a fixed origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    origin: GeoPoint,
    earth_radius: f64,
}

impl Projection {
    pub fn with_origin(origin: GeoPoint) -> Result<Self> {
        origin.validate()?;
        Ok(Projection {
            origin,
            earth_radius: EARTH_RADIUS_M,
        })
    }

    /// Projection centred on the arithmetic mean latitude and longitude.
    pub fn from_points(points: &[GeoPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        for p in points {
            p.validate()?;
        }
        let n = points.len() as f64;
        let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;
        let lon = points.iter().map(|p| p.lon).sum::<f64>() / n;
        Projection::with_origin(GeoPoint { lat, lon })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn earth_radius(&self) -> f64 {
        self.earth_radius
    }

    fn meters_per_degree_lat(&self) -> f64 {
        self.earth_radius * std::f64::consts::PI / 180.0
    }

    fn meters_per_degree_lon(&self) -> f64 {
        self.meters_per_degree_lat() * self.origin.lat.to_radians().cos()
    }

    pub fn project(&self, p: GeoPoint) -> Result<LocalPoint> {
        p.validate()?;
        Ok(LocalPoint {
            x: (p.lon - self.origin.lon) * self.meters_per_degree_lon(),
            y: (p.lat - self.origin.lat) * self.meters_per_degree_lat(),
        })
    }

    pub fn unproject(&self, p: LocalPoint) -> Result<GeoPoint> {
        if !p.is_finite() {
            return Err(Error::invalid(format!("non-finite local point {p:?}")));
        }
        GeoPoint::new(
            self.origin.lat + p.y / self.meters_per_degree_lat(),
            self.origin.lon + p.x / self.meters_per_degree_lon(),
        )
    }
}

/// Euclidean positioning error in the projected plane, in meters.
pub fn position_error(estimate: LocalPoint, truth: LocalPoint) -> f64 {
    estimate.distance(&truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor() -> Projection {
        Projection::with_origin(GeoPoint::new(44.0, 11.0).unwrap()).unwrap()
    }

    #[test]
    fn origin_is_mean_of_points() {
        let p = GeoPoint::new(44.0, 11.0).unwrap();
        let proj = Projection::from_points(&[p, p]).unwrap();
        assert_eq!(proj.origin(), p);
        assert_eq!(proj.project(p).unwrap(), LocalPoint::ORIGIN);
    }

    #[test]
    fn empty_point_set_is_rejected() {
        assert!(matches!(
            Projection::from_points(&[]),
            Err(Error::EmptyPointSet)
        ));
    }

    #[test]
    fn out_of_bounds_rejected() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        let bad = GeoPoint {
            lat: 0.0,
            lon: 200.0,
        };
        assert!(anchor().project(bad).is_err());
    }

    #[test]
    fn meridian_step_matches_arc_length() {
        // 6_371_000 * 0.001 * pi / 180
        let expected = 111.194_926_644_558_73;
        let p = anchor()
            .project(GeoPoint::new(44.001, 11.0).unwrap())
            .unwrap();
        assert!((p.y - expected).abs() < 1e-6, "{}", p.y);
        assert!(p.x.abs() < 1e-12);
    }

    #[test]
    fn parallel_step_scaled_by_cos_lat() {
        // 111.194926644... * cos(44 deg)
        let expected = 79.986_936_331_167_84;
        let p = anchor()
            .project(GeoPoint::new(44.0, 11.001).unwrap())
            .unwrap();
        assert!((p.x - expected).abs() < 1e-6, "{}", p.x);
        assert!(p.y.abs() < 1e-12);
    }

    #[test]
    fn three_four_five() {
        let e = position_error(LocalPoint::new(3.0, 0.0), LocalPoint::new(0.0, 4.0));
        assert_eq!(e, 5.0);
        assert_eq!(position_error(LocalPoint::ORIGIN, LocalPoint::ORIGIN), 0.0);
    }
}
