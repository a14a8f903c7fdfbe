//! Compact random planning instances for solver tests and benchmarks.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{day, offset, CENTER};

use crate::demand::{DemandTarget, DemandTargets};
use crate::eligibility::{build_feasible_pairs, EligibilityConfig, FeasiblePairs};
use crate::error::{invalid, Result};
use crate::model::{BloodGroup, Donation, Donor, DonorId, Registry, SessionId, SessionWindow, Sex, SiteId};

/// Shape of a compact random planning instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub seed: u64,
    pub n_donors: usize,
    pub n_sessions: usize,
    /// Sessions start within this many months from January 2020.
    pub months: u32,
    /// Number of distinct blood groups drawn (from the start of the canonical order).
    pub n_groups: usize,
    pub adverse_rate: f64,
    /// Half-width of the square holding donors and sessions, in km.
    pub extent_km: f64,
    pub radius_km: f64,
    /// Keep at most this many pairs, dropping a random subset.
    pub max_pairs: Option<usize>,
    /// Probabilities, capacities, residuals and distances all integral.
    pub integral: bool,
    /// Residual per class as a multiple of its mean expected supply.
    pub demand_factor: f64,
    pub invitation_history: bool,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_donors: 40,
            n_sessions: 8,
            months: 2,
            n_groups: 2,
            adverse_rate: 0.1,
            extent_km: 3.0,
            radius_km: 3.0,
            max_pairs: None,
            integral: false,
            demand_factor: 0.4,
            invitation_history: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub registry: Registry,
    pub pairs: FeasiblePairs,
    pub targets: DemandTargets,
    pub eligibility: EligibilityConfig,
}

/// Donation dates ending before `until`, spaced at least `gap` days apart
/// and at most `limit` in any 365-day window.
fn spaced_history(rng: &mut impl Rng, until: NaiveDate, count: usize, gap: i64) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(count);
    let mut t = until - Duration::days(rng.random_range(1..=120));
    for _ in 0..count {
        dates.push(t);
        t -= Duration::days(gap + rng.random_range(0..=150));
    }
    dates.reverse();
    dates
}

pub fn random_instance(spec: &InstanceSpec) -> Result<Instance> {
    if spec.n_groups == 0 || spec.n_groups > 8 || !(0.0..=1.0).contains(&spec.adverse_rate) {
        return Err(invalid("instance spec out of range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let as_of = day(2020, 1, 1);
    let e = spec.extent_km;

    let donors: Vec<Donor> = (0..spec.n_donors)
        .map(|k| {
            let sex = if rng.random_bool(0.5) { Sex::Male } else { Sex::Female };
            let birth = as_of - Duration::days(rng.random_range(19 * 366..64 * 365));
            let history = match rng.random_range(0..10) {
                0..=4 => 0,
                5..=7 => 1,
                8 => 2,
                _ => 3,
            };
            let donations = spaced_history(&mut rng, as_of, history, 60)
                .into_iter()
                .map(|date| Donation { date, site_id: None })
                .collect();
            let invitations_sent = if spec.invitation_history {
                let n = rng.random_range(0..=4);
                let mut v: Vec<NaiveDate> = (0..n)
                    .map(|_| as_of - Duration::days(rng.random_range(0..365)))
                    .collect();
                v.sort();
                v
            } else {
                Vec::new()
            };
            let p = if spec.integral {
                1.0
            } else {
                [0.05, 0.2, 0.5, 0.8, 1.0][rng.random_range(0..5)]
            };
            let home = offset(CENTER.0, CENTER.1, rng.random_range(-e..e), rng.random_range(-e..e));
            let brigade = rng
                .random_bool(0.3)
                .then(|| offset(CENTER.0, CENTER.1, rng.random_range(-e..e), rng.random_range(-e..e)));
            Donor {
                id: DonorId::new(format!("d{k:05}")),
                sex,
                birth_date: birth,
                max_eligible_age: 65,
                blood_group: BloodGroup::ALL[rng.random_range(0..spec.n_groups)],
                attendance_probability: p,
                adverse_reaction: rng.random_bool(spec.adverse_rate),
                suspensions: Vec::new(),
                donations,
                postal_code: None,
                home_anchor: Some(home),
                last_brigade_anchor: brigade,
                invitations_sent,
            }
        })
        .collect();

    let horizon_days = (30 * spec.months.max(1)) as i64;
    let sessions: Vec<SessionWindow> = (0..spec.n_sessions)
        .map(|k| {
            let start = as_of + Duration::days(rng.random_range(0..horizon_days));
            let len = rng.random_range(0..=13);
            let mut dates = vec![start, start + Duration::days(len)];
            if len > 2 {
                dates.push(start + Duration::days(rng.random_range(1..len)));
            }
            let cap = if spec.integral {
                rng.random_range(1..=4) as f64
            } else {
                rng.random_range(1.0..6.0f64).round()
            };
            SessionWindow::new(
                SessionId::new(format!("s{k:03}")),
                SiteId::new(format!("site{}", k % 5)),
                offset(CENTER.0, CENTER.1, rng.random_range(-e..e), rng.random_range(-e..e)),
                dates,
                cap,
            )
        })
        .collect::<Result<_>>()?;

    let registry = Registry::new(as_of, donors, sessions, Vec::new())?;
    let eligibility = EligibilityConfig {
        radius_km: spec.radius_km,
        ..EligibilityConfig::default()
    };
    let mut pairs = build_feasible_pairs(&registry, &eligibility)?;
    if let Some(max) = spec.max_pairs {
        let all = pairs.sorted();
        if all.len() > max {
            let mut idx: Vec<usize> = (0..all.len()).collect();
            idx.shuffle(&mut rng);
            let keep: std::collections::HashSet<(DonorId, SessionId)> = idx[..max]
                .iter()
                .map(|&i| (all[i].donor_id.clone(), all[i].session_id.clone()))
                .collect();
            pairs.retain(|p| keep.contains(&(p.donor_id.clone(), p.session_id.clone())));
        }
    }
    if spec.integral {
        let rounded: Vec<_> = pairs
            .sorted()
            .into_iter()
            .cloned()
            .map(|mut p| {
                p.distance_km = p.distance_km.round();
                p
            })
            .collect();
        pairs = FeasiblePairs::from_pairs(rounded);
    }

    let mut targets = DemandTargets::new();
    for (key, class) in pairs.classes() {
        let supply: f64 = class.iter().map(|p| p.donor_probability).sum();
        let mut r = supply * spec.demand_factor * rng.random_range(0.5..1.5);
        if spec.integral {
            r = r.round().max(1.0);
        }
        targets.insert(DemandTarget::new(key.0, key.1, r, r)?);
    }
    Ok(Instance {
        registry,
        pairs,
        targets,
        eligibility,
    })
}
