//! Scarcity-driven greedy assignment.
//!
//! Demand classes are served from the scarcest (fewest feasible pairs per
//! unit of residual demand) to the most abundant. Within a class, donors
//! without adverse reactions come first, then closer donors. A pair is
//! accepted only when every capacity, spacing, annual-limit and invitation
//! rule still holds with it added.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use chrono::NaiveDate;

use crate::bilp::{DemandMode, ModelConfig};
use crate::demand::DemandTargets;
use crate::eligibility::{
    annual_headroom, invite_budget, windows_conflict, ClassKey, EligibilityConfig, FeasiblePair, FeasiblePairs,
};
use crate::error::{Error, Result};
use crate::model::{count_in_year_to, DonorId, Registry, SessionId, SessionWindow};
use crate::plan::{Choice, InvitationPlan};

const TOL: f64 = 1e-9;

/// Demand class with its pair count and residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassSupply {
    pub key: ClassKey,
    pub pairs: usize,
    pub residual: f64,
}

impl ClassSupply {
    pub fn scarcity(&self) -> f64 {
        self.pairs as f64 / self.residual
    }
}

/// Classes with positive residual by increasing scarcity score; ties go to
/// the earlier month, then the canonical blood-group order.
pub fn scarcity_order(classes: &[ClassSupply]) -> Vec<ClassKey> {
    let mut v: Vec<&ClassSupply> = classes.iter().filter(|c| c.residual > 0.0).collect();
    v.sort_by(|a, b| a.scarcity().total_cmp(&b.scarcity()).then(a.key.cmp(&b.key)));
    v.into_iter().map(|c| c.key).collect()
}

/// Within-class order: non-adverse first, then distance, donor and session.
pub fn pair_order(a: &FeasiblePair, b: &FeasiblePair) -> Ordering {
    a.adverse
        .cmp(&b.adverse)
        .then(a.distance_km.total_cmp(&b.distance_km))
        .then_with(|| a.donor_id.cmp(&b.donor_id))
        .then_with(|| a.session_id.cmp(&b.session_id))
}

/// Mutable bookkeeping of the greedy pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GreedyState {
    pub fulfilled: BTreeMap<ClassKey, f64>,
    pub capacity_used: BTreeMap<SessionId, f64>,
    /// History plus planned dates, sorted; only donors touched so far.
    pub donor_assigned_dates: BTreeMap<DonorId, Vec<NaiveDate>>,
    pub invites_used: BTreeMap<DonorId, u32>,
    /// Sessions planned per donor, in acceptance order.
    pub planned: BTreeMap<DonorId, Vec<SessionId>>,
    /// Accepted pairs in acceptance order.
    pub accepted: Vec<FeasiblePair>,
}

struct Rules<'a> {
    registry: &'a Registry,
    cfg: &'a ModelConfig,
    min_gap: i64,
}

impl Rules<'_> {
    fn session(&self, id: &SessionId) -> Result<&SessionWindow> {
        self.registry
            .session(id)
            .ok_or_else(|| Error::UnknownReference(format!("session {id}")))
    }

    fn admits(&self, state: &GreedyState, pair: &FeasiblePair) -> Result<bool> {
        let donor = self
            .registry
            .donor(&pair.donor_id)
            .ok_or_else(|| Error::UnknownReference(format!("donor {}", pair.donor_id)))?;
        let session = self.session(&pair.session_id)?;

        let used = state.capacity_used.get(&session.id).copied().unwrap_or(0.0);
        if used + donor.attendance_probability > session.capacity + TOL * session.capacity.max(1.0) {
            return Ok(false);
        }

        if let Some(cap) = self.cfg.invite_cap() {
            let used = state.invites_used.get(&donor.id).copied().unwrap_or(0);
            if used >= invite_budget(donor, self.registry.as_of, cap) {
                return Ok(false);
            }
        }

        let planned: Vec<&SessionWindow> = state
            .planned
            .get(&donor.id)
            .into_iter()
            .flatten()
            .map(|id| self.session(id))
            .collect::<Result<_>>()?;
        if planned.iter().any(|s| windows_conflict(s, session, self.min_gap)) {
            return Ok(false);
        }

        let new_date = session.start_date;
        let history: Vec<NaiveDate> = match state.donor_assigned_dates.get(&donor.id) {
            Some(d) => d.clone(),
            None => donor.donations.iter().map(|d| d.date).collect(),
        };
        if history.iter().any(|d| (new_date - *d).num_days().abs() < self.min_gap) {
            return Ok(false);
        }
        let mut dates = history;
        dates.push(new_date);
        let limit = donor.annual_limit();
        if dates
            .iter()
            .any(|t| count_in_year_to(dates.iter().copied(), *t) > limit)
        {
            return Ok(false);
        }

        // Annual rows anchored at planned session end dates.
        let mut ends: Vec<NaiveDate> = planned.iter().map(|s| s.end_date).collect();
        ends.push(session.end_date);
        for &t in &ends {
            let planned_in_year = i64::from(count_in_year_to(ends.iter().copied(), t));
            if planned_in_year > annual_headroom(donor, t) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn accept(&self, state: &mut GreedyState, pair: &FeasiblePair) -> Result<()> {
        let donor = self.registry.donor(&pair.donor_id).expect("checked in admits");
        let session = self.session(&pair.session_id)?;
        *state.fulfilled.entry((pair.month, pair.blood_group)).or_insert(0.0) += donor.attendance_probability;
        *state.capacity_used.entry(session.id.clone()).or_insert(0.0) += donor.attendance_probability;
        let dates = state
            .donor_assigned_dates
            .entry(donor.id.clone())
            .or_insert_with(|| donor.donations.iter().map(|d| d.date).collect());
        dates.push(session.start_date);
        dates.sort();
        *state.invites_used.entry(donor.id.clone()).or_insert(0) += 1;
        state
            .planned
            .entry(donor.id.clone())
            .or_default()
            .push(session.id.clone());
        state.accepted.push(pair.clone());
        Ok(())
    }
}

/// Run the greedy pass and return the plan with the final state.
pub fn greedy_trace(
    pairs: &FeasiblePairs,
    targets: &DemandTargets,
    registry: &Registry,
    cfg: &ModelConfig,
    eligibility: &EligibilityConfig,
) -> Result<(InvitationPlan, GreedyState)> {
    let started = Instant::now();
    let rules = Rules {
        registry,
        cfg,
        min_gap: eligibility.min_gap_days,
    };
    let classes: Vec<ClassSupply> = targets
        .positive()
        .map(|t| {
            let key = (t.month, t.blood_group);
            ClassSupply {
                key,
                pairs: pairs.class(&key).len(),
                residual: t.residual,
            }
        })
        .collect();

    let mut state = GreedyState::default();
    let mut all_met = true;
    for key in scarcity_order(&classes) {
        let residual = targets.residual(&key);
        let mut candidates: Vec<&FeasiblePair> = pairs.class(&key).iter().collect();
        candidates.sort_by(|a, b| pair_order(a, b));
        for pair in candidates {
            if state.fulfilled.get(&key).copied().unwrap_or(0.0) >= residual - TOL * residual.max(1.0) {
                break;
            }
            if rules.admits(&state, pair)? {
                rules.accept(&mut state, pair)?;
            }
        }
        if state.fulfilled.get(&key).copied().unwrap_or(0.0) < residual - TOL * residual.max(1.0) {
            all_met = false;
        }
    }

    let choices = state
        .accepted
        .iter()
        .map(|p| Choice {
            donor_id: p.donor_id.clone(),
            session_id: p.session_id.clone(),
            distance_km: p.distance_km,
        })
        .collect();
    let status = match (all_met, cfg.demand_mode) {
        (true, _) => "complete",
        (false, DemandMode::Soft) => "partial",
        (false, DemandMode::Hard) => "infeasible",
    };
    let mut plan = InvitationPlan::from_choices("greedy", status, choices, registry, targets, cfg)?;
    plan.wall_time_s = started.elapsed().as_secs_f64();
    Ok((plan, state))
}

pub fn greedy_assign(
    pairs: &FeasiblePairs,
    targets: &DemandTargets,
    registry: &Registry,
    cfg: &ModelConfig,
    eligibility: &EligibilityConfig,
) -> Result<InvitationPlan> {
    greedy_trace(pairs, targets, registry, cfg, eligibility).map(|(plan, _)| plan)
}
