//! Great-circle distances, the postal-code coordinate table and donor anchor
//! resolution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Donor, SessionWindow};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const DEG_TO_RAD: f64 = std::f64::consts::PI / 180.0;

/// Latitude/longitude in decimal degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(invalid(format!("coordinates ({lat}, {lon}) out of bounds")));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Haversine great-circle distance in km.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let d_phi = (b.lat - a.lat) * DEG_TO_RAD;
    let d_lambda = (b.lon - a.lon) * DEG_TO_RAD;
    let s_phi = (d_phi / 2.0).sin();
    let s_lambda = (d_lambda / 2.0).sin();
    let h = s_phi * s_phi + (a.lat * DEG_TO_RAD).cos() * (b.lat * DEG_TO_RAD).cos() * s_lambda * s_lambda;
    // Rounding can push h marginally above 1 for antipodal points.
    EARTH_RADIUS_KM * 2.0 * h.min(1.0).sqrt().asin()
}

/// Distance from the closest of the donor's anchors to the session location.
pub fn donor_session_distance(donor: &Donor, session: &SessionWindow) -> Result<f64> {
    donor
        .anchors()
        .map(|p| haversine_km(p, session.location))
        .reduce(f64::min)
        .ok_or_else(|| Error::MissingAnchor(donor.id.clone()))
}

/// Postal code to coordinate lookup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PostalCodeTable {
    entries: BTreeMap<String, GeoPoint>,
}

impl PostalCodeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, code: impl Into<String>, point: GeoPoint) -> Result<()> {
        let code = code.into();
        if self.entries.contains_key(&code) {
            return Err(invalid(format!("duplicate postal code {code}")));
        }
        self.entries.insert(code, point);
        Ok(())
    }

    pub fn get(&self, code: &str) -> Option<GeoPoint> {
        self.entries.get(code.trim()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &GeoPoint)> {
        self.entries.iter()
    }
}

/// Index of the point in `candidates` closest to `from`; first wins on ties.
pub fn nearest<'a, T>(from: GeoPoint, candidates: impl IntoIterator<Item = (&'a T, GeoPoint)>) -> Option<(&'a T, f64)>
where
    T: 'a,
{
    let mut best: Option<(&T, f64)> = None;
    for (item, p) in candidates {
        let d = haversine_km(from, p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((item, d));
        }
    }
    best
}
