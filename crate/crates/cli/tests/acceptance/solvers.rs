//! Exact solver, greedy heuristic and plan validator.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use donorsched::bilp::build_model;
use donorsched::datagen::{generate, random_instance, BoundingBox, GenHorizon, GenSpec, Instance, InstanceSpec};
use donorsched::exact::{exact_plan, ExactConfig, SolveStatus};
use donorsched::greedy::greedy_assign;
use donorsched::pipeline::{window_problem, SolverKind};
use donorsched::plan::{compute_metrics, validate_plan};
use donorsched::{
    ClassKey, DemandMode, Donation, DonorId, InvitationPlan, ModelConfig, PlannedInvitation, PlanningMonth, Registry,
    SessionId, SessionWindow, ViolationFamily, WindowConfig,
};

use crate::oracles::*;
use crate::{ensure, fail, Outcome};

const C1_INSTANCES: u64 = 100;
const C1_MAX_VARS: usize = 16;
const C1_FRACTIONAL_TOL: f64 = 1e-6;

const C2_CLEAN_PLANS: u64 = 1000;
const C2_INJECTIONS: usize = 500;

const C3_EXACT_TIME_LIMIT_S: f64 = 90.0;
const C3_DEMAND_SCALE: f64 = 2.0;
const C3_MAX_FULFILLMENT_GAP: f64 = 0.10;
const C3_RUNTIME_RATIO: f64 = 10.0;

const CAPACITY_TOL: f64 = 1e-9;

struct Item {
    donor: usize,
    session: usize,
    class: usize,
    p: f64,
    cost: f64,
    end: i64,
}

/// Keys of an index map ordered by their assigned index.
fn in_index_order<'a, K: Ord>(ix: &BTreeMap<&'a K, usize>) -> Vec<&'a K> {
    let mut v: Vec<_> = ix.iter().map(|(id, &k)| (k, *id)).collect();
    v.sort_by_key(|e| e.0);
    v.into_iter().map(|e| e.1).collect()
}

/// Minimum objective over every subset of the instance's pairs, with every
/// rule checked directly on the registry data. `None` when no subset is
/// feasible.
fn enumerate_optimum(inst: &Instance, cfg: &ModelConfig) -> Option<f64> {
    let reg = &inst.registry;
    let pairs = inst.pairs.sorted();
    let n = pairs.len();
    assert!(n <= C1_MAX_VARS);

    let mut donor_ix: BTreeMap<&DonorId, usize> = BTreeMap::new();
    let mut session_ix: BTreeMap<&SessionId, usize> = BTreeMap::new();
    let mut class_ix: BTreeMap<ClassKey, usize> = BTreeMap::new();
    let mut items = Vec::with_capacity(n);
    for p in &pairs {
        let donor = reg.donor(&p.donor_id).expect("known donor");
        let session = reg.session(&p.session_id).expect("known session");
        let nd = donor_ix.len();
        let d = *donor_ix.entry(&p.donor_id).or_insert(nd);
        let ns = session_ix.len();
        let s = *session_ix.entry(&p.session_id).or_insert(ns);
        let nc = class_ix.len();
        let c = *class_ix.entry((session.month(), donor.blood_group)).or_insert(nc);
        items.push(Item {
            donor: d,
            session: s,
            class: c,
            p: donor.attendance_probability,
            cost: cfg.w_dist * p.distance_km + if donor.adverse_reaction { cfg.w_adv } else { 0.0 },
            end: day_number(session.end_date),
        });
    }
    let donors: Vec<_> = in_index_order(&donor_ix)
        .into_iter()
        .map(|id| reg.donor(id).expect("known"))
        .collect();
    let sessions: Vec<_> = in_index_order(&session_ix)
        .into_iter()
        .map(|id| reg.session(id).expect("known"))
        .collect();

    let mut residual = vec![0.0; class_ix.len()];
    for t in inst.targets.iter().filter(|t| t.residual > 0.0) {
        match class_ix.get(&(t.month, t.blood_group)) {
            Some(&c) => residual[c] = t.residual,
            None => return None,
        }
    }
    let mut conflict = vec![0u32; n];
    for i in 0..n {
        for j in 0..n {
            if i != j
                && items[i].donor == items[j].donor
                && dates_conflict(sessions[items[i].session], sessions[items[j].session], MIN_GAP)
            {
                conflict[i] |= 1 << j;
            }
        }
    }
    let history: Vec<Vec<i64>> = donors
        .iter()
        .map(|d| d.donations.iter().map(|x| day_number(x.date)).collect())
        .collect();
    let hf: Vec<bool> = donors.iter().map(|d| is_high_frequency(d, reg.as_of)).collect();

    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let chosen: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        if chosen.iter().any(|&i| conflict[i] & mask != 0) {
            continue;
        }
        let mut load = vec![0.0; sessions.len()];
        let mut supply = vec![0.0; residual.len()];
        for &i in &chosen {
            load[items[i].session] += items[i].p;
            supply[items[i].class] += items[i].p;
        }
        if load
            .iter()
            .zip(&sessions)
            .any(|(l, s)| *l > s.capacity + CAPACITY_TOL * s.capacity.max(1.0))
        {
            continue;
        }
        if supply
            .iter()
            .zip(&residual)
            .any(|(s, r)| *s < r - CAPACITY_TOL * r.max(1.0))
        {
            continue;
        }
        let mut per_donor: Vec<Vec<i64>> = vec![Vec::new(); donors.len()];
        for &i in &chosen {
            per_donor[items[i].donor].push(items[i].end);
        }
        let over_limit = per_donor.iter().enumerate().any(|(d, ends)| {
            let mut events = history[d].clone();
            events.extend(ends);
            ends.iter()
                .any(|&t| count_in_year(&events, t) > annual_limit(donors[d]))
        });
        if over_limit {
            continue;
        }
        let mut obj: f64 = chosen.iter().map(|&i| items[i].cost).sum();
        for (d, ends) in per_donor.iter().enumerate() {
            if ends.len() >= 2 && !hf[d] {
                obj += cfg.w_inv;
            }
        }
        if best.is_none_or(|b| obj < b) {
            best = Some(obj);
        }
    }
    best
}

pub fn exactness() -> Outcome {
    let cfg = ModelConfig::default();
    let (mut optimal, mut infeasible, mut max_vars) = (0, 0, 0);
    for k in 0..C1_INSTANCES {
        let integral = k % 2 == 0;
        let inst = random_instance(&InstanceSpec {
            seed: 10_000 + k,
            n_donors: 8,
            n_sessions: 4,
            months: 2,
            n_groups: 2,
            integral,
            max_pairs: Some(C1_MAX_VARS),
            demand_factor: 0.2,
            adverse_rate: 0.3,
            ..InstanceSpec::default()
        })
        .map_err(fail)?;
        let model = build_model(
            &inst.pairs,
            &inst.targets,
            &inst.registry,
            &cfg,
            inst.eligibility.min_gap_days,
        )
        .map_err(fail)?;
        max_vars = max_vars.max(model.assignments.len());
        ensure(model.assignments.len() <= C1_MAX_VARS, || {
            format!("instance {k}: too many variables")
        })?;

        let oracle = enumerate_optimum(&inst, &cfg);
        let (plan, res) = exact_plan(
            &inst.pairs,
            &inst.targets,
            &inst.registry,
            &cfg,
            &inst.eligibility,
            &ExactConfig::default(),
        )
        .map_err(fail)?;
        match (oracle, res.objective) {
            (None, None) => {
                ensure(res.status == SolveStatus::Infeasible, || {
                    format!("instance {k}: status {}", res.status)
                })?;
                infeasible += 1;
            }
            (Some(want), Some(got)) => {
                ensure(res.status == SolveStatus::Optimal, || {
                    format!("instance {k}: status {}", res.status)
                })?;
                let matches = if integral {
                    got == want
                } else {
                    (got - want).abs() <= C1_FRACTIONAL_TOL * want.abs().max(1.0)
                };
                ensure(matches, || format!("instance {k}: solver {got}, enumeration {want}"))?;
                let violations =
                    validate_plan(&plan, &inst.registry, &inst.targets, &cfg, &inst.eligibility).map_err(fail)?;
                ensure(violations.is_empty(), || {
                    format!("instance {k}: optimal plan violates {:?}", violations[0])
                })?;
                optimal += 1;
            }
            (want, got) => return Err(format!("instance {k}: enumeration {want:?}, solver {got:?}")),
        }
    }
    Ok(format!(
        "{optimal} optimal and {infeasible} infeasible instances agree (up to {max_vars} variables)"
    ))
}

fn validator_instance(seed: u64) -> Instance {
    random_instance(&InstanceSpec {
        seed,
        n_donors: 60,
        n_sessions: 10,
        months: 3,
        n_groups: 3,
        extent_km: 5.0,
        radius_km: 3.0,
        demand_factor: 0.3,
        ..InstanceSpec::default()
    })
    .expect("valid instance spec")
}

/// Greedy plan and the mode it is validated in: hard when it met every
/// target, soft otherwise.
fn greedy_case(inst: &Instance, cap: bool) -> Result<(InvitationPlan, ModelConfig), String> {
    let solve_cfg = ModelConfig {
        invite_cap_enabled: cap,
        ..ModelConfig::default()
    };
    let plan = greedy_assign(
        &inst.pairs,
        &inst.targets,
        &inst.registry,
        &solve_cfg,
        &inst.eligibility,
    )
    .map_err(fail)?;
    let mode = if plan.status == "complete" {
        DemandMode::Hard
    } else {
        DemandMode::Soft
    };
    Ok((
        plan,
        ModelConfig {
            demand_mode: mode,
            ..solve_cfg
        },
    ))
}

const FAMILIES: [ViolationFamily; 8] = [
    ViolationFamily::Eligibility,
    ViolationFamily::PlannedDate,
    ViolationFamily::Duplicate,
    ViolationFamily::Capacity,
    ViolationFamily::DemandHard,
    ViolationFamily::Gap,
    ViolationFamily::AnnualLimit,
    ViolationFamily::InviteCap,
];

struct Injected {
    plan: InvitationPlan,
    registry: Registry,
    cfg: ModelConfig,
}

fn invitation(donor: &donorsched::Donor, session: &SessionWindow, km: f64) -> PlannedInvitation {
    PlannedInvitation {
        donor_id: donor.id.clone(),
        session_id: session.id.clone(),
        planned_date: session.start_date,
        distance_km: km,
        probability: donor.attendance_probability,
        adverse: donor.adverse_reaction,
    }
}

fn load(plan: &InvitationPlan, reg: &Registry, sid: &SessionId) -> f64 {
    plan.invitations
        .iter()
        .filter(|i| &i.session_id == sid)
        .map(|i| reg.donor(&i.donor_id).expect("known").attendance_probability)
        .sum()
}

fn history_days(donor: &donorsched::Donor) -> Vec<i64> {
    donor.donations.iter().map(|d| day_number(d.date)).collect()
}

fn fits(plan: &InvitationPlan, reg: &Registry, session: &SessionWindow, p: f64) -> bool {
    load(plan, reg, &session.id) + p <= session.capacity
}

/// Apply one violation of `family` to a clean plan, or `None` when the
/// instance offers no safe place to do it.
fn inject(family: ViolationFamily, inst: &Instance, plan: &InvitationPlan, cfg: &ModelConfig) -> Option<Injected> {
    let reg = &inst.registry;
    let mut out = plan.clone();
    let invited: BTreeSet<&DonorId> = plan.invitations.iter().map(|i| &i.donor_id).collect();
    let per_donor = |id: &DonorId| plan.invitations.iter().filter(|i| &i.donor_id == id).count();
    match family {
        ViolationFamily::Duplicate => {
            let first = plan.invitations.first()?.clone();
            out.invitations.push(first);
        }
        ViolationFamily::PlannedDate => {
            let inv = out.invitations.first_mut()?;
            inv.planned_date -= Duration::days(1);
        }
        ViolationFamily::Eligibility => {
            let radius = inst.eligibility.radius_km;
            let found = reg.donors().iter().filter(|d| !invited.contains(&d.id)).find_map(|d| {
                reg.sessions().iter().find_map(|s| {
                    let km = anchor_km(d, s)?;
                    let ok = km > radius + 0.01
                        && static_ok_ignoring_radius(d, s, inst.eligibility.min_age as i32)
                        && fits(plan, reg, s, d.attendance_probability)
                        && count_in_year(&history_days(d), day_number(s.end_date)) < annual_limit(d);
                    ok.then(|| invitation(d, s, km))
                })
            })?;
            out.invitations.push(found);
        }
        ViolationFamily::Capacity => {
            let added = reg.sessions().iter().find_map(|s| {
                let mut used = load(plan, reg, &s.id);
                let mut extra = Vec::new();
                for p in inst.pairs.sorted().into_iter().filter(|p| p.session_id == s.id) {
                    let d = reg.donor(&p.donor_id).expect("known");
                    if invited.contains(&d.id)
                        || count_in_year(&history_days(d), day_number(s.end_date)) >= annual_limit(d)
                    {
                        continue;
                    }
                    extra.push(invitation(d, s, p.distance_km));
                    used += d.attendance_probability;
                    if used > s.capacity + 1e-6 {
                        return Some(extra);
                    }
                }
                None
            })?;
            out.invitations.extend(added);
        }
        ViolationFamily::DemandHard => {
            if cfg.demand_mode != DemandMode::Hard {
                return None;
            }
            let (month, group) = inst.targets.iter().filter(|t| t.residual > 0.0).find_map(|t| {
                let hit = plan.invitations.iter().any(|i| {
                    let s = reg.session(&i.session_id).expect("known");
                    let d = reg.donor(&i.donor_id).expect("known");
                    s.month() == t.month && d.blood_group == t.blood_group
                });
                hit.then_some((t.month, t.blood_group))
            })?;
            out.invitations.retain(|i| {
                let s = reg.session(&i.session_id).expect("known");
                let d = reg.donor(&i.donor_id).expect("known");
                !(s.month() == month && d.blood_group == group)
            });
        }
        ViolationFamily::Gap => {
            let found = plan
                .invitations
                .iter()
                .filter(|i| per_donor(&i.donor_id) == 1)
                .find_map(|inv| {
                    let d = reg.donor(&inv.donor_id).expect("known");
                    let a = reg.session(&inv.session_id).expect("known");
                    inst.pairs.sorted().into_iter().find_map(|p| {
                        if p.donor_id != d.id || p.session_id == a.id {
                            return None;
                        }
                        let b = reg.session(&p.session_id).expect("known");
                        let mut events = history_days(d);
                        events.extend([day_number(a.end_date), day_number(b.end_date)]);
                        let within_limit = [a.end_date, b.end_date]
                            .iter()
                            .all(|t| count_in_year(&events, day_number(*t)) <= annual_limit(d));
                        (dates_conflict(a, b, MIN_GAP) && fits(plan, reg, b, d.attendance_probability) && within_limit)
                            .then(|| invitation(d, b, p.distance_km))
                    })
                })?;
            out.invitations.push(found);
        }
        ViolationFamily::AnnualLimit => {
            let inv = plan.invitations.first()?;
            let target = reg.donor(&inv.donor_id).expect("known");
            let planned: Vec<&SessionWindow> = plan
                .invitations
                .iter()
                .filter(|i| i.donor_id == target.id)
                .map(|i| reg.session(&i.session_id).expect("known"))
                .collect();
            let earliest = planned.iter().map(|s| s.start_date).min()?;
            let first_end = planned.iter().map(|s| s.end_date).min()?;
            let newest = (earliest - Duration::days(MIN_GAP)).min(reg.as_of - Duration::days(1));
            let limit = annual_limit(target);
            let mut dates: Vec<_> = (0..limit as i64)
                .map(|k| newest - Duration::days(MIN_GAP * k))
                .collect();
            dates.reverse();
            let days: Vec<i64> = dates.iter().map(|d| day_number(*d)).collect();
            if count_in_year(&days, day_number(first_end)) != limit {
                return None;
            }
            let donors = reg
                .donors()
                .iter()
                .cloned()
                .map(|mut d| {
                    if d.id == target.id {
                        d.donations = dates.iter().map(|&date| Donation { date, site_id: None }).collect();
                    }
                    d
                })
                .collect();
            let registry = reg.with_parts(reg.as_of, donors, reg.sessions().to_vec()).ok()?;
            return Some(Injected {
                plan: out,
                registry,
                cfg: *cfg,
            });
        }
        ViolationFamily::InviteCap => {
            if !cfg.invite_cap_enabled {
                return None;
            }
            let inv = plan.invitations.first()?;
            let sent: Vec<_> = (1..=cfg.invite_cap_per_year as i64)
                .rev()
                .map(|k| reg.as_of - Duration::days(k))
                .collect();
            let donors = reg
                .donors()
                .iter()
                .cloned()
                .map(|mut d| {
                    if d.id == inv.donor_id {
                        d.invitations_sent = sent.clone();
                    }
                    d
                })
                .collect();
            let registry = reg.with_parts(reg.as_of, donors, reg.sessions().to_vec()).ok()?;
            return Some(Injected {
                plan: out,
                registry,
                cfg: *cfg,
            });
        }
    }
    Some(Injected {
        plan: out,
        registry: reg.clone(),
        cfg: *cfg,
    })
}

pub fn validator() -> Outcome {
    let mut hard = 0;
    for seed in 0..C2_CLEAN_PLANS {
        let inst = validator_instance(seed);
        let (plan, cfg) = greedy_case(&inst, seed % 2 == 1)?;
        if cfg.demand_mode == DemandMode::Hard {
            hard += 1;
        }
        let v = validate_plan(&plan, &inst.registry, &inst.targets, &cfg, &inst.eligibility).map_err(fail)?;
        ensure(v.is_empty(), || format!("greedy plan {seed}: {}", v[0]))?;
    }

    let mut per_family: BTreeMap<String, usize> = BTreeMap::new();
    let mut seed = 1_000_000u64;
    for k in 0..C2_INJECTIONS {
        let family = FAMILIES[k % FAMILIES.len()];
        let mut tries = 0;
        let injected = loop {
            seed += 1;
            tries += 1;
            ensure(tries <= 500, || format!("no instance admits a {family} injection"))?;
            let inst = validator_instance(seed);
            let (plan, cfg) = greedy_case(&inst, family == ViolationFamily::InviteCap)?;
            if let Some(inj) = inject(family, &inst, &plan, &cfg) {
                break (inst, inj);
            }
        };
        let (inst, inj) = injected;
        let v = validate_plan(&inj.plan, &inj.registry, &inst.targets, &inj.cfg, &inst.eligibility).map_err(fail)?;
        ensure(!v.is_empty(), || format!("injection {k} ({family}) not detected"))?;
        if let Some(other) = v.iter().find(|x| x.family != family) {
            return Err(format!("injection {k} ({family}) also reported {other}"));
        }
        *per_family.entry(family.to_string()).or_default() += 1;
    }
    let summary: Vec<String> = per_family.iter().map(|(f, n)| format!("{f} {n}")).collect();
    Ok(format!(
        "{C2_CLEAN_PLANS} greedy plans clean ({hard} in hard mode); {C2_INJECTIONS} injections each flagged as exactly their family: {}",
        summary.join(", ")
    ))
}

/// Scenario for the greedy-versus-exact comparison: 10,000 donors and 100
/// session windows over four months in a region wide enough that each
/// session sees a few hundred donors.
pub fn desk_scale_spec() -> GenSpec {
    GenSpec {
        seed: 1,
        n_donors: 10_000,
        n_sessions: 100,
        horizon: GenHorizon {
            start: PlanningMonth { year: 2020, month: 1 },
            months: 4,
        },
        n_sites: 100,
        n_clusters: 100,
        cluster_spread_km: 0.0,
        n_postal_codes: 2000,
        monthly_demand: 400.0,
        extent: BoundingBox {
            lat_min: 38.45,
            lat_max: 39.00,
            lon_min: -9.50,
            lon_max: -8.80,
        },
        ..GenSpec::default()
    }
}

pub fn desk_scale() -> Outcome {
    let spec = desk_scale_spec();
    let data = generate(&spec).map_err(fail)?;
    let mut cfg = WindowConfig {
        window_months: 4,
        demand_scale: C3_DEMAND_SCALE,
        solver: SolverKind::Exact,
        ..WindowConfig::default()
    };
    cfg.model.demand_mode = DemandMode::Soft;
    cfg.exact.time_limit_s = Some(C3_EXACT_TIME_LIMIT_S);
    let problem = window_problem(
        &data.registry,
        &data.demand,
        Some(&data.first_time),
        &cfg,
        spec.horizon.start,
        None,
    )
    .map_err(fail)?;
    let greedy = greedy_assign(
        &problem.pairs,
        &problem.targets,
        &problem.registry,
        &cfg.model,
        &problem.eligibility,
    )
    .map_err(fail)?;
    let (exact, res) = exact_plan(
        &problem.pairs,
        &problem.targets,
        &problem.registry,
        &cfg.model,
        &problem.eligibility,
        &cfg.exact,
    )
    .map_err(fail)?;
    let g = compute_metrics(&greedy, &problem.registry, &problem.targets).map_err(fail)?;
    let e = compute_metrics(&exact, &problem.registry, &problem.targets).map_err(fail)?;
    let detail = format!(
        "{} pairs, residual {:.1}; fulfillment greedy {:.4} / exact {:.4}; avg km {:.3} / {:.3}; \
         adverse {} / {}; invites per non-HF {:.3} / {:.3}; runtime {:.3}s / {:.1}s; exact {} gap {:.4}",
        problem.pairs.len(),
        problem.targets.total_residual(),
        g.fulfillment_rate,
        e.fulfillment_rate,
        g.avg_distance_km,
        e.avg_distance_km,
        g.adverse_invited,
        e.adverse_invited,
        g.avg_invites_per_non_hf,
        e.avg_invites_per_non_hf,
        g.runtime_s,
        e.runtime_s,
        res.status,
        res.gap().unwrap_or(f64::NAN),
    );
    ensure(g.fulfillment_rate < 1.0, || format!("demand is not binding: {detail}"))?;
    ensure(g.fulfillment_rate <= e.fulfillment_rate, || {
        format!("greedy fulfils more: {detail}")
    })?;
    ensure(g.avg_distance_km >= e.avg_distance_km, || {
        format!("greedy travels less: {detail}")
    })?;
    ensure(g.runtime_s * C3_RUNTIME_RATIO <= e.runtime_s, || {
        format!("greedy not 10x faster: {detail}")
    })?;
    ensure(e.fulfillment_rate - g.fulfillment_rate < C3_MAX_FULFILLMENT_GAP, || {
        format!("fulfillment gap too wide: {detail}")
    })?;
    Ok(detail)
}
