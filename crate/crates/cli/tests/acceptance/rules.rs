//! Demand arithmetic, temporal eligibility rules and distances.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use donorsched::bilp::{build_model, RowTag};
use donorsched::demand::donation_equivalent;
use donorsched::eligibility::{annual_headroom, build_feasible_pairs, invite_budget, windows_conflict};
use donorsched::model::count_in_year_to;
use donorsched::plan::{validate_plan, Choice};
use donorsched::{
    haversine_km, BloodGroup, Component, DemandPanel, DemandTarget, DemandTargets, Donation, Donor, DonorId,
    EligibilityConfig, GeoPoint, InvitationPlan, ModelConfig, PlanningMonth, Registry, SessionId, SessionWindow, Sex,
    SiteId, ViolationFamily,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracles::*;
use crate::{ensure, fail, Outcome};

const C4_CE: [f64; 8] = [0.0, 10.0, 25.0, 50.0, 75.0, 100.0, 150.0, 200.0];
const C4_CPP: [f64; 8] = [0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0];

const C5_GAP_CASES: usize = 4000;
const C5_ANNUAL_CASES: usize = 3000;
const C5_CAP_CASES: usize = 3000;
const INVITE_CAP: u32 = 5;

const C6_PAIRS: usize = 1000;
const C6_REL_TOL: f64 = 1e-6;

pub fn demand_grid() -> Outcome {
    let mut panel = DemandPanel::new();
    let group = BloodGroup::ALL[0];
    let mut expected = Vec::new();
    for (i, &ce) in C4_CE.iter().enumerate() {
        for (j, &cpp) in C4_CPP.iter().enumerate() {
            // Five platelet pools per whole-blood donation.
            let want = if 5.0 * cpp > ce { 5.0 * cpp } else { ce };
            let got = donation_equivalent(ce, cpp).map_err(fail)?;
            ensure(got == want, || format!("ce={ce} cpp={cpp}: {got} != {want}"))?;
            let month = PlanningMonth::new(2010, 1).map_err(fail)?.plus((8 * i + j) as i32);
            panel.insert(month, group, Component::CE, ce).map_err(fail)?;
            panel.insert(month, group, Component::CPP, cpp).map_err(fail)?;
            expected.push(((month, group), want));
        }
    }
    let from_panel = panel.donation_equivalents();
    for (key, want) in &expected {
        let got = from_panel.get(key).copied();
        ensure(got == Some(*want), || {
            format!("{} panel value {got:?} != {want}", key.0)
        })?;
    }
    let headline = donation_equivalent(100.0, 30.0).map_err(fail)?;
    ensure(headline == 150.0, || format!("ce=100, cpp=30 gives {headline}"))?;
    Ok(format!(
        "{} grid cells exact, ce=100/cpp=30 -> {headline}",
        expected.len()
    ))
}

fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

const HOME: (f64, f64) = (38.72, -9.14);

/// One donor living at the session site with a random history, and a few
/// random session windows after the registry date.
fn random_case(rng: &mut ChaCha8Rng) -> Registry {
    let as_of = day(2021, 3, 1);
    let mut history: BTreeSet<NaiveDate> = BTreeSet::new();
    for _ in 0..rng.random_range(0..=6) {
        history.insert(as_of - Duration::days(rng.random_range(1..=500)));
    }
    let mut sent: Vec<NaiveDate> = (0..rng.random_range(0..=7))
        .map(|_| as_of - Duration::days(rng.random_range(0..=420)))
        .collect();
    sent.sort();
    let home = GeoPoint::new(HOME.0, HOME.1).expect("valid point");
    let donor = Donor {
        id: DonorId::new("d"),
        sex: if rng.random_bool(0.5) { Sex::Male } else { Sex::Female },
        birth_date: day(1980, 6, 15),
        max_eligible_age: 65,
        blood_group: BloodGroup::ALL[0],
        attendance_probability: 0.5,
        adverse_reaction: false,
        suspensions: Vec::new(),
        donations: history
            .into_iter()
            .map(|date| Donation { date, site_id: None })
            .collect(),
        postal_code: None,
        home_anchor: Some(home),
        last_brigade_anchor: None,
        invitations_sent: sent,
    };
    let sessions = (0..rng.random_range(2..=7))
        .map(|k| {
            let start = as_of + Duration::days(rng.random_range(0..=200));
            let span = rng.random_range(0..=13);
            let mut dates = vec![start, start + Duration::days(span)];
            for _ in 0..rng.random_range(0..=3) {
                if span > 1 {
                    dates.push(start + Duration::days(rng.random_range(1..span)));
                }
            }
            SessionWindow::new(SessionId::new(format!("s{k}")), SiteId::new("site"), home, dates, 10.0)
                .expect("valid session")
        })
        .collect();
    Registry::new(as_of, vec![donor], sessions, Vec::new()).expect("valid registry")
}

fn targets_for(reg: &Registry) -> DemandTargets {
    let months: BTreeSet<PlanningMonth> = reg.sessions().iter().map(|s| s.month()).collect();
    months
        .into_iter()
        .map(|m| DemandTarget::new(m, BloodGroup::ALL[0], 0.1, 0.1).expect("valid target"))
        .collect()
}

fn plan_of(reg: &Registry, chosen: &[&SessionWindow], cfg: &ModelConfig) -> InvitationPlan {
    let choices = chosen
        .iter()
        .map(|s| Choice {
            donor_id: DonorId::new("d"),
            session_id: s.id.clone(),
            distance_km: 0.0,
        })
        .collect();
    InvitationPlan::from_choices("test", "test", choices, reg, &DemandTargets::new(), cfg).expect("plan")
}

fn has_family(reg: &Registry, chosen: &[&SessionWindow], cfg: &ModelConfig, family: ViolationFamily) -> bool {
    let plan = plan_of(reg, chosen, cfg);
    validate_plan(&plan, reg, &DemandTargets::new(), cfg, &EligibilityConfig::default())
        .expect("validation runs")
        .iter()
        .any(|v| v.family == family)
}

/// Pair generation and pairwise gap rows against a scan over admissible dates.
fn gap_case(rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let reg = random_case(rng);
    let donor = &reg.donors()[0];
    let elig = EligibilityConfig::default();
    let pairs = build_feasible_pairs(&reg, &elig).map_err(fail)?;
    let got: BTreeSet<SessionId> = pairs.sorted().iter().map(|p| p.session_id.clone()).collect();
    let want: BTreeSet<SessionId> = reg
        .sessions()
        .iter()
        .filter(|s| static_ok_ignoring_radius(donor, s, elig.min_age as i32))
        .map(|s| s.id.clone())
        .collect();
    if got != want {
        return Ok(false);
    }

    let model = build_model(
        &pairs,
        &targets_for(&reg),
        &reg,
        &ModelConfig::default(),
        elig.min_gap_days,
    )
    .map_err(fail)?;
    let session_of = |var: usize| {
        model
            .assignments
            .iter()
            .find(|a| a.var == var)
            .map(|a| a.session_id.clone())
    };
    let rows: BTreeSet<(SessionId, SessionId)> = model
        .rows_with(RowTag::GapPair)
        .map(|r| {
            let a = session_of(r.terms[0].0).expect("assignment");
            let b = session_of(r.terms[1].0).expect("assignment");
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    let mut scan = BTreeSet::new();
    let all = reg.sessions();
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            let conflict = dates_conflict(a, b, MIN_GAP);
            if conflict != windows_conflict(a, b, MIN_GAP) {
                return Ok(false);
            }
            if conflict && want.contains(&a.id) && want.contains(&b.id) {
                scan.insert((a.id.clone(), b.id.clone()));
            }
        }
    }
    Ok(rows == scan)
}

fn subsets<'a, 'b>(sessions: &'b [&'a SessionWindow]) -> impl Iterator<Item = Vec<&'a SessionWindow>> + 'b {
    (0u32..1 << sessions.len()).map(move |mask| {
        sessions
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, s)| *s)
            .collect()
    })
}

/// Rolling annual limit: counters, model rows and validator against a
/// sliding-window count over every day.
fn annual_case(rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let reg = random_case(rng);
    let donor = &reg.donors()[0];
    let history: Vec<i64> = donor.donations.iter().map(|d| day_number(d.date)).collect();
    let limit = annual_limit(donor);

    for _ in 0..5 {
        let t = reg.as_of + Duration::days(rng.random_range(-400..=400));
        let want = count_in_year(&history, day_number(t));
        let lib = count_in_year_to(donor.donations.iter().map(|d| d.date), t) as usize;
        if lib != want
            || donor.donations_in_year_to(t) as usize != want
            || annual_headroom(donor, t) != limit as i64 - want as i64
        {
            return Ok(false);
        }
    }

    let elig = EligibilityConfig::default();
    let pairs = build_feasible_pairs(&reg, &elig).map_err(fail)?;
    let cfg = ModelConfig::default();
    let model = build_model(&pairs, &targets_for(&reg), &reg, &cfg, elig.min_gap_days).map_err(fail)?;
    let feasible: Vec<&SessionWindow> = pairs
        .sorted()
        .iter()
        .map(|p| reg.session(&p.session_id).expect("known"))
        .collect();
    let annual_rows: Vec<_> = model.rows_with(RowTag::AnnualLimit).collect();
    let pick = rng.random_range(0..1u32 << feasible.len());
    for (mask, chosen) in subsets(&feasible).enumerate() {
        let ends: Vec<i64> = chosen.iter().map(|s| day_number(s.end_date)).collect();
        let mut events = history.clone();
        events.extend(&ends);
        let brute = sliding_window_exceeds(&events, &ends, limit);

        let mut values = vec![0.0; model.variables.len()];
        for a in &model.assignments {
            if chosen.iter().any(|s| s.id == a.session_id) {
                values[a.var] = 1.0;
            }
        }
        let rows_violated = annual_rows.iter().any(|r| !r.is_satisfied(&values, 1e-9));
        if rows_violated != brute {
            return Ok(false);
        }
        if mask as u32 == pick && has_family(&reg, &chosen, &cfg, ViolationFamily::AnnualLimit) != brute {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Rolling invitation cap: budget, validator and the model's cap row.
fn cap_case(rng: &mut ChaCha8Rng) -> Result<(bool, bool), String> {
    let reg = random_case(rng);
    let donor = &reg.donors()[0];
    let sent: Vec<i64> = donor.invitations_sent.iter().map(|d| day_number(*d)).collect();
    let as_of = day_number(reg.as_of);
    let used = count_in_year(&sent, as_of) as u32;
    if invite_budget(donor, reg.as_of, INVITE_CAP) != INVITE_CAP.saturating_sub(used) {
        return Ok((false, false));
    }

    let elig = EligibilityConfig::default();
    let pairs = build_feasible_pairs(&reg, &elig).map_err(fail)?;
    let cfg = ModelConfig {
        invite_cap_enabled: true,
        invite_cap_per_year: INVITE_CAP,
        ..ModelConfig::default()
    };
    let model = build_model(&pairs, &targets_for(&reg), &reg, &cfg, elig.min_gap_days).map_err(fail)?;
    let feasible: Vec<&SessionWindow> = pairs
        .sorted()
        .iter()
        .map(|p| reg.session(&p.session_id).expect("known"))
        .collect();
    let cap_rows: Vec<_> = model.rows_with(RowTag::InviteCap).collect();
    let last_planned = feasible.iter().map(|s| day_number(s.start_date)).max();
    // When every earlier invitation is still inside the year before the last
    // planned date, the single cap row is exact rather than conservative.
    let tight = last_planned.is_none_or(|l| sent.iter().all(|&d| d > l - YEAR_DAYS));
    let pick = rng.random_range(0..1u32 << feasible.len());
    for (mask, chosen) in subsets(&feasible).enumerate() {
        let planned: Vec<i64> = chosen.iter().map(|s| day_number(s.start_date)).collect();
        let mut events: Vec<i64> = sent.iter().copied().filter(|&d| d <= as_of).collect();
        events.extend(&planned);
        let brute = sliding_window_exceeds(&events, &planned, INVITE_CAP as usize);

        let mut values = vec![0.0; model.variables.len()];
        for a in &model.assignments {
            if chosen.iter().any(|s| s.id == a.session_id) {
                values[a.var] = 1.0;
            }
        }
        let row_violated = cap_rows.iter().any(|r| !r.is_satisfied(&values, 1e-9));
        if brute && !row_violated {
            return Ok((false, tight));
        }
        if tight && brute != row_violated {
            return Ok((false, tight));
        }
        if mask as u32 == pick && has_family(&reg, &chosen, &cfg, ViolationFamily::InviteCap) != brute {
            return Ok((false, tight));
        }
    }
    Ok((true, tight))
}

pub fn temporal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = [0usize; 3];
    for _ in 0..C5_GAP_CASES {
        if !gap_case(&mut rng)? {
            bad[0] += 1;
        }
    }
    for _ in 0..C5_ANNUAL_CASES {
        if !annual_case(&mut rng)? {
            bad[1] += 1;
        }
    }
    let mut tight = 0;
    for _ in 0..C5_CAP_CASES {
        let (ok, exact) = cap_case(&mut rng)?;
        if !ok {
            bad[2] += 1;
        }
        tight += usize::from(exact);
    }
    let total = C5_GAP_CASES + C5_ANNUAL_CASES + C5_CAP_CASES;
    let detail = format!(
        "{total} cases: gap {} / {C5_GAP_CASES}, annual {} / {C5_ANNUAL_CASES}, cap {} / {C5_CAP_CASES} discrepancies \
         (cap row exact in {tight} cases, conservative otherwise)",
        bad[0], bad[1], bad[2]
    );
    ensure(bad.iter().sum::<usize>() == 0, || detail.clone())?;
    Ok(detail)
}

pub fn haversine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for k in 0..C6_PAIRS {
        // Half anywhere on the globe, half within a city.
        let (a, b) = if k % 2 == 0 {
            (
                (rng.random_range(-89.0..89.0), rng.random_range(-180.0..180.0)),
                (rng.random_range(-89.0..89.0), rng.random_range(-180.0..180.0)),
            )
        } else {
            let lat = rng.random_range(38.6..38.9);
            let lon = rng.random_range(-9.3..-9.0);
            (
                (lat, lon),
                (lat + rng.random_range(-0.1..0.1), lon + rng.random_range(-0.1..0.1)),
            )
        };
        let pa = GeoPoint::new(a.0, a.1).map_err(fail)?;
        let pb = GeoPoint::new(b.0, b.1).map_err(fail)?;
        let got = haversine_km(pa, pb);
        let want = chord_km(a.0, a.1, b.0, b.1);
        let rel = (got - want).abs() / want.max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        ensure(rel <= C6_REL_TOL, || format!("{a:?} -> {b:?}: {got} vs {want}"))?;
        ensure(haversine_km(pb, pa) == got, || format!("{a:?} <-> {b:?} asymmetric"))?;
        ensure(haversine_km(pa, pa) == 0.0 && haversine_km(pb, pb) == 0.0, || {
            format!("{a:?} self distance")
        })?;
    }
    Ok(format!(
        "{C6_PAIRS} pairs, worst relative error {worst:.2e}; symmetry and identity exact"
    ))
}
