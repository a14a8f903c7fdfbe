use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::eligibility::ClassKey;
use crate::error::{invalid, Result};
use crate::geo::nearest;
use crate::model::{BloodGroup, DonorId, PlanningMonth, RecencyStatus, Registry, SessionId, SessionWindow, SiteId};

/// Blood-group shares of first-time donors, summing to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<BloodGroup, f64>", into = "BTreeMap<BloodGroup, f64>")]
pub struct BloodShares([f64; 8]);

impl BloodShares {
    pub fn new(shares: [f64; 8]) -> Result<Self> {
        if shares.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(invalid("blood-group shares must be non-negative"));
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(invalid(format!("blood-group shares sum to {sum}, not 1")));
        }
        Ok(Self(shares))
    }

    pub fn share(&self, g: BloodGroup) -> f64 {
        self.0[g.index()]
    }
}

impl Default for BloodShares {
    /// Three-year trailing first-time donor proportions.
    fn default() -> Self {
        use crate::model::{Abo::*, Rh::*};
        let mut s = [0.0; 8];
        for (abo, rh, v) in [
            (A, Positive, 0.379),
            (O, Positive, 0.350),
            (B, Positive, 0.079),
            (O, Negative, 0.075),
            (A, Negative, 0.062),
            (AB, Positive, 0.036),
            (B, Negative, 0.014),
            (AB, Negative, 0.005),
        ] {
            s[BloodGroup::new(abo, rh).index()] = v;
        }
        Self(s)
    }
}

impl TryFrom<BTreeMap<BloodGroup, f64>> for BloodShares {
    type Error = crate::error::Error;
    fn try_from(map: BTreeMap<BloodGroup, f64>) -> Result<Self> {
        let mut s = [0.0; 8];
        for (g, v) in map {
            s[g.index()] = v;
        }
        Self::new(s)
    }
}

impl From<BloodShares> for BTreeMap<BloodGroup, f64> {
    fn from(s: BloodShares) -> Self {
        BloodGroup::ALL.iter().map(|g| (*g, s.share(*g))).collect()
    }
}

/// Split `total` across blood groups in proportion to `shares`.
pub fn allocate_by_blood_shares(total: f64, shares: &BloodShares) -> Result<BTreeMap<BloodGroup, f64>> {
    if !(total >= 0.0 && total.is_finite()) {
        return Err(invalid(format!("cannot allocate total {total}")));
    }
    let sum: f64 = shares.0.iter().sum();
    Ok(BloodGroup::ALL
        .iter()
        .map(|g| (*g, total * shares.share(*g) / sum))
        .collect())
}

/// Source of per-donor probabilities of donating without an invitation.
pub trait OrganicProvider: Send + Sync {
    fn name(&self) -> &str;

    /// `result[d][m]` is the probability that donor `d` (registry order)
    /// donates organically in `months[m]`.
    fn probabilities(&self, registry: &Registry, months: &[PlanningMonth]) -> Vec<Vec<f64>>;
}

/// Every donor active at the registry date gets the same probability in
/// every month; everyone else gets zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantProvider {
    pub probability: f64,
}

impl ConstantProvider {
    pub fn new(probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(invalid(format!("organic probability {probability} outside [0, 1]")));
        }
        Ok(Self { probability })
    }
}

impl OrganicProvider for ConstantProvider {
    fn name(&self) -> &str {
        "constant"
    }

    fn probabilities(&self, registry: &Registry, months: &[PlanningMonth]) -> Vec<Vec<f64>> {
        registry
            .donors()
            .iter()
            .map(|d| {
                let p = if d.recency_status(registry.as_of) == RecencyStatus::Active {
                    self.probability
                } else {
                    0.0
                };
                vec![p; months.len()]
            })
            .collect()
    }
}

/// Historical same-calendar-month attendance rate of each recency cohort.
///
/// For a target month the rate of a cohort is the fraction of
/// (donor, year) slots over the previous `lookback_years` years in which a
/// cohort member donated during that calendar month.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortShareProvider {
    pub lookback_years: usize,
}

impl Default for CohortShareProvider {
    fn default() -> Self {
        Self { lookback_years: 3 }
    }
}

impl OrganicProvider for CohortShareProvider {
    fn name(&self) -> &str {
        "cohort-share"
    }

    fn probabilities(&self, registry: &Registry, months: &[PlanningMonth]) -> Vec<Vec<f64>> {
        let as_of_month = PlanningMonth::of(registry.as_of);
        let status: Vec<RecencyStatus> = registry
            .donors()
            .iter()
            .map(|d| d.recency_status(registry.as_of))
            .collect();
        let mut rates: Vec<HashMap<RecencyStatus, f64>> = Vec::with_capacity(months.len());
        for &m in months {
            // Only fully observed months strictly before the registry month.
            let past: Vec<PlanningMonth> = (1..)
                .map(|j| m.plus(-12 * j))
                .filter(|p| *p < as_of_month)
                .take(self.lookback_years)
                .collect();
            let mut hits: HashMap<RecencyStatus, (f64, f64)> = HashMap::new();
            for (d, st) in registry.donors().iter().zip(&status) {
                let e = hits.entry(*st).or_default();
                e.1 += past.len() as f64;
                e.0 += past
                    .iter()
                    .filter(|p| d.donations.iter().any(|x| PlanningMonth::of(x.date) == **p))
                    .count() as f64;
            }
            rates.push(
                hits.into_iter()
                    .map(|(st, (h, n))| (st, if n > 0.0 { h / n } else { 0.0 }))
                    .collect(),
            );
        }
        status
            .iter()
            .map(|st| rates.iter().map(|r| r.get(st).copied().unwrap_or(0.0)).collect())
            .collect()
    }
}

/// Expected organic donations by demand class and by session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrganicSupplyEstimate {
    pub by_class: BTreeMap<ClassKey, f64>,
    pub by_session: BTreeMap<SessionId, f64>,
    /// Highest monthly organic probability of each donor with a positive one.
    pub donor_probability: BTreeMap<DonorId, f64>,
}

impl OrganicSupplyEstimate {
    pub fn class(&self, key: &ClassKey) -> f64 {
        self.by_class.get(key).copied().unwrap_or(0.0)
    }

    pub fn session(&self, id: &SessionId) -> f64 {
        self.by_session.get(id).copied().unwrap_or(0.0)
    }

    /// Donors expected to attend anyway, who should not be invited.
    pub fn excluded_donors(&self, threshold: f64) -> BTreeSet<DonorId> {
        self.donor_probability
            .iter()
            .filter(|(_, p)| **p >= threshold)
            .map(|(d, _)| d.clone())
            .collect()
    }
}

/// Spread `amount` over `sessions` in proportion to capacity, or evenly
/// when every capacity is zero.
fn spread(out: &mut BTreeMap<SessionId, f64>, sessions: &[&SessionWindow], amount: f64) {
    if sessions.is_empty() || amount == 0.0 {
        return;
    }
    let cap: f64 = sessions.iter().map(|s| s.capacity).sum();
    for s in sessions {
        let w = if cap > 0.0 {
            s.capacity / cap
        } else {
            1.0 / sessions.len() as f64
        };
        *out.entry(s.id.clone()).or_insert(0.0) += amount * w;
    }
}

/// Combine provider expectations with the first-time forecast.
///
/// Returning donors are placed at their modal historical site, moved to the
/// nearest site with a session that month when the modal site has none, and
/// pooled proportionally over the month's sessions when neither works.
/// First-time donors are split by blood-group share and spread over the
/// month's sessions by capacity.
pub fn organic_estimate(
    provider: &dyn OrganicProvider,
    registry: &Registry,
    months: &[PlanningMonth],
    first_time: &[f64],
    shares: &BloodShares,
) -> Result<OrganicSupplyEstimate> {
    let probs = provider.probabilities(registry, months);
    let mut est = OrganicSupplyEstimate::default();

    for (k, &m) in months.iter().enumerate() {
        let sessions: Vec<&SessionWindow> = registry.sessions().iter().filter(|s| s.month() == m).collect();
        let mut by_site: BTreeMap<&SiteId, Vec<&SessionWindow>> = BTreeMap::new();
        for s in &sessions {
            by_site.entry(&s.site_id).or_default().push(s);
        }
        let active: Vec<(&SiteId, crate::geo::GeoPoint)> = by_site
            .iter()
            .filter_map(|(id, ss)| registry.site_location(id).or(Some(ss[0].location)).map(|p| (*id, p)))
            .collect();

        let mut site_total: BTreeMap<&SiteId, f64> = BTreeMap::new();
        let mut remap_cache: HashMap<&SiteId, Option<&SiteId>> = HashMap::new();
        let mut pooled = 0.0;

        for (d, donor) in registry.donors().iter().enumerate() {
            let p = probs[d][k];
            if p <= 0.0 {
                continue;
            }
            *est.by_class.entry((m, donor.blood_group)).or_insert(0.0) += p;
            let best = est.donor_probability.entry(donor.id.clone()).or_insert(0.0);
            *best = best.max(p);

            let target = donor.modal_site().and_then(|site| {
                *remap_cache.entry(site).or_insert_with(|| {
                    if by_site.contains_key(site) {
                        return Some(site);
                    }
                    let from = registry.site_location(site)?;
                    nearest(from, active.iter().map(|(id, p)| (*id, *p))).map(|(id, _)| id)
                })
            });
            match target {
                Some(site) => *site_total.entry(site).or_insert(0.0) += p,
                None => pooled += p,
            }
        }

        let ft = first_time.get(k).copied().unwrap_or(0.0).max(0.0);
        for (g, v) in allocate_by_blood_shares(ft, shares)? {
            if v > 0.0 {
                *est.by_class.entry((m, g)).or_insert(0.0) += v;
            }
        }
        for (site, total) in site_total {
            spread(&mut est.by_session, &by_site[site], total);
        }
        spread(&mut est.by_session, &sessions, pooled + ft);
    }
    Ok(est)
}
