//! Independent reference computations shared by several criteria.

use chrono::{Datelike, NaiveDate};
use donorsched::{Donor, SessionWindow};

pub const YEAR_DAYS: i64 = 365;
pub const MIN_GAP: i64 = 60;

pub fn day_number(d: NaiveDate) -> i64 {
    i64::from(d.num_days_from_ce())
}

/// Events in `(t - 365, t]`, by direct comparison.
pub fn count_in_year(events: &[i64], t: i64) -> usize {
    events.iter().filter(|&&e| e <= t && e > t - YEAR_DAYS).count()
}

/// Slides a 365-day window one day at a time over every position that
/// covers at least one `marked` day and reports whether any such window
/// holds more than `limit` of `events` (marked days are part of `events`).
pub fn sliding_window_exceeds(events: &[i64], marked: &[i64], limit: usize) -> bool {
    let (Some(&lo), Some(&hi)) = (marked.iter().min(), marked.iter().max()) else {
        return false;
    };
    let first = events.iter().copied().min().unwrap_or(lo).min(lo);
    let span = (hi + YEAR_DAYS - first + 1) as usize;
    let mut per_day = vec![0usize; span];
    for &e in events {
        per_day[(e - first) as usize] += 1;
    }
    let mut prefix = vec![0usize; span + 1];
    for k in 0..span {
        prefix[k + 1] = prefix[k] + per_day[k];
    }
    // Window ending at day `end` covers (end - 365, end].
    for end in lo..hi + YEAR_DAYS {
        let covers_marked = marked.iter().any(|&m| m <= end && m > end - YEAR_DAYS);
        if !covers_marked {
            continue;
        }
        let e = (end - first) as usize + 1;
        let s = (end - YEAR_DAYS - first + 1).max(0) as usize;
        if prefix[e] - prefix[s] > limit {
            return true;
        }
    }
    false
}

/// Some pair of admissible dates, one from each window, lies fewer than
/// `gap` days apart.
pub fn dates_conflict(a: &SessionWindow, b: &SessionWindow, gap: i64) -> bool {
    a.admissible_dates
        .iter()
        .any(|x| b.admissible_dates.iter().any(|y| (*x - *y).num_days().abs() < gap))
}

pub fn age_years(birth: NaiveDate, on: NaiveDate) -> i32 {
    let mut years = on.year() - birth.year();
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    years
}

pub fn annual_limit(donor: &Donor) -> usize {
    match donor.sex {
        donorsched::Sex::Male => 4,
        donorsched::Sex::Female => 3,
    }
}

pub fn is_high_frequency(donor: &Donor, as_of: NaiveDate) -> bool {
    let history: Vec<i64> = donor.donations.iter().map(|d| day_number(d.date)).collect();
    let needed = match donor.sex {
        donorsched::Sex::Male => 3,
        donorsched::Sex::Female => 2,
    };
    count_in_year(&history, day_number(as_of)) >= needed
}

/// Great-circle distance from the chord between unit vectors.
pub fn chord_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let unit = |lat: f64, lon: f64| {
        let (la, lo) = (lat.to_radians(), lon.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (p, q) = (unit(lat1, lon1), unit(lat2, lon2));
    let chord = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
    2.0 * 6371.0 * (chord / 2.0).min(1.0).asin()
}

/// Closest anchor to the session, by the chord formula.
pub fn anchor_km(donor: &Donor, session: &SessionWindow) -> Option<f64> {
    let s = session.location;
    donor
        .home_anchor
        .iter()
        .chain(donor.last_brigade_anchor.iter())
        .map(|a| chord_km(a.lat(), a.lon(), s.lat(), s.lon()))
        .reduce(f64::min)
}

/// Every static rule except the radius: age at the session start,
/// suspension, and the minimum gap from history to every admissible date.
pub fn static_ok_ignoring_radius(donor: &Donor, session: &SessionWindow, min_age: i32) -> bool {
    let start = session.start_date;
    if start < donor.birth_date {
        return false;
    }
    let age = age_years(donor.birth_date, start);
    if age < min_age || age > donor.max_eligible_age as i32 {
        return false;
    }
    if donor.suspensions.iter().any(|s| s.start <= start && start <= s.end) {
        return false;
    }
    donor.donations.iter().all(|d| {
        session
            .admissible_dates
            .iter()
            .all(|a| (*a - d.date).num_days() >= MIN_GAP)
    })
}
