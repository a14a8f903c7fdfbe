//! Invitation plans, the independent plan validator and comparison metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bilp::{DemandMode, ModelConfig};
use crate::demand::DemandTargets;
use crate::eligibility::{failed_static_check, ClassKey, EligibilityConfig};
use crate::error::{Error, Result};
use crate::model::{count_in_year_to, Donor, DonorId, Registry, SessionId, SessionWindow};

const TOL: f64 = 1e-9;

fn tol(rhs: f64) -> f64 {
    TOL * rhs.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedInvitation {
    pub donor_id: DonorId,
    pub session_id: SessionId,
    pub planned_date: NaiveDate,
    pub distance_km: f64,
    pub probability: f64,
    pub adverse: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub distance: f64,
    pub invite_penalty: f64,
    pub adverse: f64,
    pub slack: f64,
}

impl ObjectiveBreakdown {
    pub fn total(&self) -> f64 {
        self.distance + self.invite_penalty + self.adverse + self.slack
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvitationPlan {
    pub solver: String,
    pub status: String,
    /// Sorted by (donor, session).
    pub invitations: Vec<PlannedInvitation>,
    pub fulfilled: BTreeMap<ClassKey, f64>,
    /// Unmet residual per class with positive residual.
    pub slacks: BTreeMap<ClassKey, f64>,
    pub objective: ObjectiveBreakdown,
    pub wall_time_s: f64,
    pub peak_memory_mb: Option<f64>,
}

/// A chosen (donor, session) edge and its distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub donor_id: DonorId,
    pub session_id: SessionId,
    pub distance_km: f64,
}

impl InvitationPlan {
    /// Assemble a plan from chosen pairs. Planned dates are the session
    /// start dates; fulfilment, slacks and the objective breakdown are
    /// derived from the choices.
    pub fn from_choices(
        solver: &str,
        status: &str,
        choices: Vec<Choice>,
        registry: &Registry,
        targets: &DemandTargets,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let mut invitations = Vec::with_capacity(choices.len());
        for c in choices {
            let donor = lookup_donor(registry, &c.donor_id)?;
            let session = lookup_session(registry, &c.session_id)?;
            invitations.push(PlannedInvitation {
                donor_id: c.donor_id,
                session_id: c.session_id,
                planned_date: session.start_date,
                distance_km: c.distance_km,
                probability: donor.attendance_probability,
                adverse: donor.adverse_reaction,
            });
        }
        invitations.sort_by(|a, b| (&a.donor_id, &a.session_id).cmp(&(&b.donor_id, &b.session_id)));
        let mut plan = Self {
            solver: solver.to_string(),
            status: status.to_string(),
            invitations,
            fulfilled: BTreeMap::new(),
            slacks: BTreeMap::new(),
            objective: ObjectiveBreakdown::default(),
            wall_time_s: 0.0,
            peak_memory_mb: None,
        };
        plan.fulfilled = fulfilled_by_class(&plan, registry)?;
        for t in targets.positive() {
            let key = (t.month, t.blood_group);
            let got = plan.fulfilled.get(&key).copied().unwrap_or(0.0);
            plan.slacks.insert(key, (t.residual - got).max(0.0));
        }
        plan.objective = breakdown(&plan, registry, cfg)?;
        Ok(plan)
    }

    pub fn empty(solver: &str, status: &str, targets: &DemandTargets, cfg: &ModelConfig) -> Self {
        let slacks: BTreeMap<ClassKey, f64> = targets
            .positive()
            .map(|t| ((t.month, t.blood_group), t.residual))
            .collect();
        let slack = match cfg.demand_mode {
            DemandMode::Soft => cfg.w_dem * slacks.values().sum::<f64>(),
            DemandMode::Hard => 0.0,
        };
        Self {
            solver: solver.to_string(),
            status: status.to_string(),
            invitations: Vec::new(),
            fulfilled: BTreeMap::new(),
            slacks,
            objective: ObjectiveBreakdown {
                slack,
                ..Default::default()
            },
            wall_time_s: 0.0,
            peak_memory_mb: None,
        }
    }

    pub fn len(&self) -> usize {
        self.invitations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.invitations.is_empty()
    }

    pub fn invited_donors(&self) -> BTreeSet<&DonorId> {
        self.invitations.iter().map(|i| &i.donor_id).collect()
    }
}

fn lookup_donor<'a>(registry: &'a Registry, id: &DonorId) -> Result<&'a Donor> {
    registry
        .donor(id)
        .ok_or_else(|| Error::UnknownReference(format!("donor {id}")))
}

fn lookup_session<'a>(registry: &'a Registry, id: &SessionId) -> Result<&'a SessionWindow> {
    registry
        .session(id)
        .ok_or_else(|| Error::UnknownReference(format!("session {id}")))
}

fn fulfilled_by_class(plan: &InvitationPlan, registry: &Registry) -> Result<BTreeMap<ClassKey, f64>> {
    let mut out = BTreeMap::new();
    for inv in &plan.invitations {
        let donor = lookup_donor(registry, &inv.donor_id)?;
        let session = lookup_session(registry, &inv.session_id)?;
        *out.entry((session.month(), donor.blood_group)).or_insert(0.0) += donor.attendance_probability;
    }
    Ok(out)
}

fn breakdown(plan: &InvitationPlan, registry: &Registry, cfg: &ModelConfig) -> Result<ObjectiveBreakdown> {
    let mut per_donor: BTreeMap<&DonorId, usize> = BTreeMap::new();
    let mut b = ObjectiveBreakdown::default();
    for inv in &plan.invitations {
        b.distance += cfg.w_dist * inv.distance_km;
        if inv.adverse {
            b.adverse += cfg.w_adv;
        }
        *per_donor.entry(&inv.donor_id).or_default() += 1;
    }
    for (id, n) in per_donor {
        if n >= 2 && !lookup_donor(registry, id)?.is_high_frequency(registry.as_of) {
            b.invite_penalty += cfg.w_inv;
        }
    }
    if cfg.demand_mode == DemandMode::Soft {
        b.slack = cfg.w_dem * plan.slacks.values().sum::<f64>();
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationFamily {
    Eligibility,
    PlannedDate,
    Duplicate,
    Capacity,
    DemandHard,
    Gap,
    AnnualLimit,
    InviteCap,
}

impl fmt::Display for ViolationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationFamily::Eligibility => "eligibility",
            ViolationFamily::PlannedDate => "planned_date",
            ViolationFamily::Duplicate => "duplicate",
            ViolationFamily::Capacity => "capacity",
            ViolationFamily::DemandHard => "demand_hard",
            ViolationFamily::Gap => "gap",
            ViolationFamily::AnnualLimit => "annual_limit",
            ViolationFamily::InviteCap => "invite_cap",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub family: ViolationFamily,
    pub subject: String,
    /// Amount by which the rule is exceeded, in the rule's own units.
    pub amount: f64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} (excess {})",
            self.family, self.subject, self.detail, self.amount
        )
    }
}

/// Re-check every rule against the raw registry data.
///
/// Capacities are the registry's session capacities. Demand rows are checked
/// only in hard mode and the invitation cap only when enabled.
pub fn validate_plan(
    plan: &InvitationPlan,
    registry: &Registry,
    targets: &DemandTargets,
    cfg: &ModelConfig,
    eligibility: &EligibilityConfig,
) -> Result<Vec<Violation>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut rows: Vec<(&Donor, &SessionWindow, &PlannedInvitation)> = Vec::new();
    for inv in &plan.invitations {
        let donor = lookup_donor(registry, &inv.donor_id)?;
        let session = lookup_session(registry, &inv.session_id)?;
        if !seen.insert((&inv.donor_id, &inv.session_id)) {
            out.push(Violation {
                family: ViolationFamily::Duplicate,
                subject: format!("{}/{}", inv.donor_id, inv.session_id),
                amount: 1.0,
                detail: "pair invited twice".into(),
            });
            continue;
        }
        rows.push((donor, session, inv));
    }
    // Fixed accumulation order keeps the sums independent of input order.
    rows.sort_by(|a, b| (&a.0.id, &a.1.id).cmp(&(&b.0.id, &b.1.id)));

    for (donor, session, inv) in &rows {
        if let Some(check) = failed_static_check(donor, session, eligibility)? {
            out.push(Violation {
                family: ViolationFamily::Eligibility,
                subject: format!("{}/{}", donor.id, session.id),
                amount: 1.0,
                detail: format!("fails {check:?} check"),
            });
        }
        if !session.is_admissible(inv.planned_date) {
            out.push(Violation {
                family: ViolationFamily::PlannedDate,
                subject: format!("{}/{}", donor.id, session.id),
                amount: 1.0,
                detail: format!("{} is not an admissible date", inv.planned_date),
            });
        }
    }

    let mut load: BTreeMap<&SessionId, f64> = BTreeMap::new();
    let mut supply: BTreeMap<ClassKey, f64> = BTreeMap::new();
    let mut by_donor: BTreeMap<&DonorId, Vec<(&Donor, &SessionWindow, &PlannedInvitation)>> = BTreeMap::new();
    for &(donor, session, inv) in &rows {
        *load.entry(&session.id).or_insert(0.0) += donor.attendance_probability;
        *supply.entry((session.month(), donor.blood_group)).or_insert(0.0) += donor.attendance_probability;
        by_donor.entry(&donor.id).or_default().push((donor, session, inv));
    }
    for (sid, used) in load {
        let cap = lookup_session(registry, sid)?.capacity;
        if used > cap + tol(cap) {
            out.push(Violation {
                family: ViolationFamily::Capacity,
                subject: sid.to_string(),
                amount: used - cap,
                detail: format!("expected attendance {used} exceeds capacity {cap}"),
            });
        }
    }
    if cfg.demand_mode == DemandMode::Hard {
        for t in targets.positive() {
            let got = supply.get(&(t.month, t.blood_group)).copied().unwrap_or(0.0);
            if got < t.residual - tol(t.residual) {
                out.push(Violation {
                    family: ViolationFamily::DemandHard,
                    subject: format!("{} {}", t.month, t.blood_group),
                    amount: t.residual - got,
                    detail: format!("covers {got} of {}", t.residual),
                });
            }
        }
    }

    for (id, mut list) in by_donor {
        list.sort_by_key(|(_, s, _)| (s.start_date, s.end_date, s.id.clone()));
        let donor = list[0].0;
        for a in 0..list.len() {
            for b in a + 1..list.len() {
                let (s1, s2) = (list[a].1, list[b].1);
                let gap = (s2.start_date - s1.end_date).num_days();
                if gap < eligibility.min_gap_days {
                    out.push(Violation {
                        family: ViolationFamily::Gap,
                        subject: format!("{id}: {}/{}", s1.id, s2.id),
                        amount: (eligibility.min_gap_days - gap) as f64,
                        detail: format!("{} opens {gap} days after {} closes", s2.id, s1.id),
                    });
                }
            }
        }

        let ends: Vec<NaiveDate> = list.iter().map(|(_, s, _)| s.end_date).collect();
        let limit = donor.annual_limit();
        let mut anchors = ends.clone();
        anchors.sort();
        anchors.dedup();
        for t in anchors {
            let total = count_in_year_to(ends.iter().copied(), t) + donor.donations_in_year_to(t);
            if total > limit {
                out.push(Violation {
                    family: ViolationFamily::AnnualLimit,
                    subject: format!("{id} @ {t}"),
                    amount: f64::from(total - limit),
                    detail: format!("{total} donations in the year to {t}, limit {limit}"),
                });
            }
        }

        if let Some(cap) = cfg.invite_cap() {
            let planned: Vec<NaiveDate> = list.iter().map(|(_, _, inv)| inv.planned_date).collect();
            let mut dates = planned.clone();
            dates.sort();
            dates.dedup();
            for d in dates {
                let total = count_in_year_to(planned.iter().copied(), d)
                    + count_in_year_to(donor.invitations_sent.iter().copied(), d);
                if total > cap {
                    out.push(Violation {
                        family: ViolationFamily::InviteCap,
                        subject: format!("{id} @ {d}"),
                        amount: f64::from(total - cap),
                        detail: format!("{total} invitations in the year to {d}, cap {cap}"),
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanMetrics {
    pub fulfillment_rate: f64,
    pub adverse_invited: usize,
    pub avg_distance_km: f64,
    pub avg_invites_per_non_hf: f64,
    pub runtime_s: f64,
    pub peak_memory_mb: Option<f64>,
}

/// The six comparison metrics. Fulfilment is the min-clamped share of
/// positive residual demand met, and 1 when there is none.
pub fn compute_metrics(plan: &InvitationPlan, registry: &Registry, targets: &DemandTargets) -> Result<PlanMetrics> {
    let supply = fulfilled_by_class(plan, registry)?;
    let (mut met, mut need) = (0.0, 0.0);
    for t in targets.positive() {
        need += t.residual;
        met += supply
            .get(&(t.month, t.blood_group))
            .copied()
            .unwrap_or(0.0)
            .min(t.residual);
    }
    let mut adverse = BTreeSet::new();
    let mut non_hf: BTreeMap<&DonorId, usize> = BTreeMap::new();
    for inv in &plan.invitations {
        let donor = lookup_donor(registry, &inv.donor_id)?;
        if donor.adverse_reaction {
            adverse.insert(&inv.donor_id);
        }
        if !donor.is_high_frequency(registry.as_of) {
            *non_hf.entry(&inv.donor_id).or_default() += 1;
        }
    }
    let n = plan.invitations.len();
    Ok(PlanMetrics {
        fulfillment_rate: if need > 0.0 { met / need } else { 1.0 },
        adverse_invited: adverse.len(),
        avg_distance_km: if n > 0 {
            plan.invitations.iter().map(|i| i.distance_km).sum::<f64>() / n as f64
        } else {
            0.0
        },
        avg_invites_per_non_hf: if non_hf.is_empty() {
            0.0
        } else {
            non_hf.values().sum::<usize>() as f64 / non_hf.len() as f64
        },
        runtime_s: plan.wall_time_s,
        peak_memory_mb: plan.peak_memory_mb,
    })
}
