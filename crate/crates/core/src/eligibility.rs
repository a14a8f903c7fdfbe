//! Static pre-filtering of donor-session pairs.
//!
//! A pair is feasible when the donor is age-eligible and not suspended at the
//! session start, every admissible date respects the minimum gap to the last
//! historical donation, and the closest anchor lies within the active radius.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geo::donor_session_distance;
use crate::model::{BloodGroup, Donor, DonorId, PlanningMonth, Registry, SessionId, SessionWindow};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EligibilityConfig {
    pub radius_km: f64,
    pub min_gap_days: i64,
    pub min_age: u32,
}

impl Default for EligibilityConfig {
    fn default() -> Self {
        Self {
            radius_km: 3.0,
            min_gap_days: 60,
            min_age: 18,
        }
    }
}

impl EligibilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_km > 0.0) {
            return Err(invalid("radius_km must be positive"));
        }
        if self.min_gap_days < 0 {
            return Err(invalid("min_gap_days must be non-negative"));
        }
        Ok(())
    }
}

/// An admissible (donor, session) edge.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasiblePair {
    pub donor_id: DonorId,
    pub session_id: SessionId,
    pub distance_km: f64,
    pub month: PlanningMonth,
    pub blood_group: BloodGroup,
    pub donor_probability: f64,
    pub adverse: bool,
}

/// Demand class key: month of the session start and donor blood group.
pub type ClassKey = (PlanningMonth, BloodGroup);

/// Which static rule rejected a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StaticCheck {
    Age,
    Suspension,
    HistoryGap,
    Radius,
}

/// Runs the four static checks and reports the first failing one.
pub fn failed_static_check(
    donor: &Donor,
    session: &SessionWindow,
    cfg: &EligibilityConfig,
) -> Result<Option<StaticCheck>> {
    let start = session.start_date;
    if start < donor.birth_date {
        return Ok(Some(StaticCheck::Age));
    }
    let age = donor.age_at(start)?;
    if age < cfg.min_age || age > donor.max_eligible_age {
        return Ok(Some(StaticCheck::Age));
    }
    if donor.is_suspended_at(start) {
        return Ok(Some(StaticCheck::Suspension));
    }
    // Admissible dates are sorted, so the earliest one is the binding date.
    let earliest = session.earliest_admissible();
    if let Some(last) = donor.last_donation_on_or_before(earliest) {
        if (earliest - last).num_days() < cfg.min_gap_days {
            return Ok(Some(StaticCheck::HistoryGap));
        }
    }
    if donor.donations.iter().any(|d| d.date > earliest) {
        // A recorded donation inside or after the window: no admissible choice is safe.
        return Ok(Some(StaticCheck::HistoryGap));
    }
    if donor_session_distance(donor, session)? > cfg.radius_km {
        return Ok(Some(StaticCheck::Radius));
    }
    Ok(None)
}

pub fn static_checks(donor: &Donor, session: &SessionWindow, cfg: &EligibilityConfig) -> Result<bool> {
    Ok(failed_static_check(donor, session, cfg)?.is_none())
}

/// Feasible pairs grouped by demand class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeasiblePairs {
    classes: BTreeMap<ClassKey, Vec<FeasiblePair>>,
}

impl FeasiblePairs {
    pub fn from_pairs(pairs: impl IntoIterator<Item = FeasiblePair>) -> Self {
        let mut classes: BTreeMap<ClassKey, Vec<FeasiblePair>> = BTreeMap::new();
        for p in pairs {
            classes.entry((p.month, p.blood_group)).or_default().push(p);
        }
        for v in classes.values_mut() {
            v.sort_by(|a, b| (&a.donor_id, &a.session_id).cmp(&(&b.donor_id, &b.session_id)));
        }
        Self { classes }
    }

    pub fn classes(&self) -> &BTreeMap<ClassKey, Vec<FeasiblePair>> {
        &self.classes
    }

    pub fn class(&self, key: &ClassKey) -> &[FeasiblePair] {
        self.classes.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All pairs sorted by (donor id, session id).
    pub fn sorted(&self) -> Vec<&FeasiblePair> {
        let mut all: Vec<&FeasiblePair> = self.classes.values().flatten().collect();
        all.sort_by(|a, b| (&a.donor_id, &a.session_id).cmp(&(&b.donor_id, &b.session_id)));
        all
    }

    /// Keep only pairs matching `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&FeasiblePair) -> bool) {
        for v in self.classes.values_mut() {
            v.retain(|p| keep(p));
        }
        self.classes.retain(|_, v| !v.is_empty());
    }
}

/// Generate every pair passing [`static_checks`]. Donors without anchors are
/// skipped; ingestion is expected to have reported them.
pub fn build_feasible_pairs(registry: &Registry, cfg: &EligibilityConfig) -> Result<FeasiblePairs> {
    cfg.validate()?;
    let per_session: Vec<Result<Vec<FeasiblePair>>> = registry
        .sessions()
        .par_iter()
        .map(|session| {
            let mut out = Vec::new();
            for donor in registry.donors().iter().filter(|d| d.has_anchor()) {
                if static_checks(donor, session, cfg)? {
                    out.push(FeasiblePair {
                        donor_id: donor.id.clone(),
                        session_id: session.id.clone(),
                        distance_km: donor_session_distance(donor, session)?,
                        month: session.month(),
                        blood_group: donor.blood_group,
                        donor_probability: donor.attendance_probability,
                        adverse: donor.adverse_reaction,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_session {
        all.extend(r?);
    }
    Ok(FeasiblePairs::from_pairs(all))
}

/// True when attending both windows could break the minimum gap: the later
/// window (by start) opens fewer than `min_gap_days` after the earlier closes.
/// Windows starting on the same day always conflict.
pub fn windows_conflict(a: &SessionWindow, b: &SessionWindow, min_gap_days: i64) -> bool {
    let (first, second) = if (a.start_date, a.end_date) <= (b.start_date, b.end_date) {
        (a, b)
    } else {
        (b, a)
    };
    (second.start_date - first.end_date).num_days() < min_gap_days
}

/// Donations still allowed in the 365 days ending at `t` given the history.
pub fn annual_headroom(donor: &Donor, t: NaiveDate) -> i64 {
    i64::from(donor.annual_limit()) - i64::from(donor.donations_in_year_to(t))
}

/// Invitations left under a rolling cap, counting those sent in the year
/// up to `as_of`.
pub fn invite_budget(donor: &Donor, as_of: NaiveDate, cap: u32) -> u32 {
    cap.saturating_sub(donor.invitations_in_year_to(as_of))
}
