//! Seeded synthetic data: full registries with demand and first-time series
//! for the pipeline, and compact random planning instances for solver tests
//! and benchmarks.

mod instance;

pub use instance::{random_instance, Instance, InstanceSpec};

use std::f64::consts::PI;

use chrono::{Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{Component, DemandPanel};
use crate::error::{invalid, Result};
use crate::forecast::{BloodShares, MonthlySeries};
use crate::geo::{haversine_km, GeoPoint, PostalCodeTable};
use crate::model::{
    BloodGroup, Donation, Donor, DonorId, PlanningMonth, Registry, SessionId, SessionWindow, Sex, Site, SiteId,
    Suspension, MAX_WINDOW_SPAN_DAYS, ROLLING_YEAR_DAYS,
};

pub(crate) const CENTER: (f64, f64) = (38.72, -9.14);
const KM_PER_DEG_LAT: f64 = 111.195;
const MIN_GAP_DAYS: i64 = 60;

pub(crate) fn offset(lat0: f64, lon0: f64, dx_km: f64, dy_km: f64) -> GeoPoint {
    let lat = lat0 + dy_km / KM_PER_DEG_LAT;
    let lon = lon0 + dx_km / (KM_PER_DEG_LAT * lat0.to_radians().cos());
    GeoPoint::new(lat, lon).expect("offsets stay in range")
}

pub(crate) fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// Share of donors in each recency cohort at the horizon start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusMix {
    pub active: f64,
    pub lapsing: f64,
    pub inactive: f64,
}

impl Default for StatusMix {
    fn default() -> Self {
        Self {
            active: 0.25,
            lapsing: 0.15,
            inactive: 0.60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Default for BoundingBox {
    /// Roughly the city of Lisbon.
    fn default() -> Self {
        Self {
            lat_min: 38.69,
            lat_max: 38.80,
            lon_min: -9.23,
            lon_max: -9.09,
        }
    }
}

impl BoundingBox {
    fn sample(&self, rng: &mut impl Rng) -> GeoPoint {
        point(
            rng.random_range(self.lat_min..=self.lat_max),
            rng.random_range(self.lon_min..=self.lon_max),
        )
    }

    fn clamp(&self, p: GeoPoint) -> GeoPoint {
        point(
            p.lat().clamp(self.lat_min, self.lat_max),
            p.lon().clamp(self.lon_min, self.lon_max),
        )
    }
}

/// Six decimals, about 10 cm, so coordinates survive a text round trip.
fn point(lat: f64, lon: f64) -> GeoPoint {
    let r = |v: f64| (v * 1e6).round() / 1e6;
    GeoPoint::new(r(lat), r(lon)).expect("inside the box")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenHorizon {
    pub start: PlanningMonth,
    pub months: usize,
}

impl Default for GenHorizon {
    fn default() -> Self {
        Self {
            start: PlanningMonth { year: 2020, month: 1 },
            months: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub seed: u64,
    pub n_donors: usize,
    pub n_sessions: usize,
    /// Registry date is the first day of the horizon; sessions start inside it.
    pub horizon: GenHorizon,
    pub blood_shares: BloodShares,
    pub status_mix: StatusMix,
    pub adverse_rate: f64,
    pub suspension_rate: f64,
    pub extent: BoundingBox,
    pub n_clusters: usize,
    pub n_sites: usize,
    /// Spread of sites around their cluster centre, km.
    pub cluster_spread_km: f64,
    pub n_postal_codes: usize,
    pub capacity_min: f64,
    pub capacity_max: f64,
    /// Years of demand and first-time history before the horizon.
    pub history_years: usize,
    /// Mean total erythrocyte units per month over all groups.
    pub monthly_demand: f64,
    pub seasonal_amplitude: f64,
    /// Relative change in demand per year.
    pub trend_per_year: f64,
    /// Relative noise half-width on each demand cell.
    pub demand_noise: f64,
    /// Platelet pools per erythrocyte unit.
    pub platelet_ratio: f64,
    pub first_time_level: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_donors: 2000,
            n_sessions: 120,
            horizon: GenHorizon::default(),
            blood_shares: BloodShares::default(),
            status_mix: StatusMix::default(),
            adverse_rate: 0.03,
            suspension_rate: 0.02,
            extent: BoundingBox::default(),
            n_clusters: 6,
            n_sites: 20,
            cluster_spread_km: 1.5,
            n_postal_codes: 200,
            capacity_min: 10.0,
            capacity_max: 40.0,
            history_years: 6,
            monthly_demand: 120.0,
            seasonal_amplitude: 0.1,
            trend_per_year: 0.0,
            demand_noise: 0.05,
            platelet_ratio: 0.15,
            first_time_level: 8.0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let mix = self.status_mix;
        let parts = [mix.active, mix.lapsing, mix.inactive];
        if parts.iter().any(|v| !(0.0..=1.0).contains(v)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("status mix must be rates summing to 1"));
        }
        for (name, v) in [
            ("adverse_rate", self.adverse_rate),
            ("suspension_rate", self.suspension_rate),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("demand_noise", self.demand_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        let b = self.extent;
        if !(b.lat_min < b.lat_max && b.lon_min < b.lon_max)
            || GeoPoint::new(b.lat_min, b.lon_min).is_err()
            || GeoPoint::new(b.lat_max, b.lon_max).is_err()
        {
            return Err(invalid("bounding box is empty or out of range"));
        }
        if self.horizon.months == 0 {
            return Err(invalid("horizon must span at least one month"));
        }
        if (self.n_sessions > 0 && self.n_sites == 0) || (self.n_sites > 0 && self.n_clusters == 0) {
            return Err(invalid("sessions need sites and sites need clusters"));
        }
        if self.n_postal_codes == 0 && self.n_donors > 0 {
            return Err(invalid("donors need at least one postal code"));
        }
        if !(self.capacity_min > 0.0 && self.capacity_min <= self.capacity_max) {
            return Err(invalid("capacity range must be positive and ordered"));
        }
        if !(self.monthly_demand >= 0.0 && self.first_time_level >= 0.0 && self.platelet_ratio >= 0.0) {
            return Err(invalid("demand levels must be non-negative"));
        }
        if self.trend_per_year.abs() >= 0.5 || self.cluster_spread_km < 0.0 {
            return Err(invalid("trend or cluster spread out of range"));
        }
        Ok(())
    }

    pub fn as_of(&self) -> NaiveDate {
        self.horizon.start.first_day()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub registry: Registry,
    pub demand: DemandPanel,
    pub first_time: MonthlySeries,
    pub postal_codes: PostalCodeTable,
}

pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let as_of = spec.as_of();

    let postal: Vec<(String, GeoPoint)> = (0..spec.n_postal_codes)
        .map(|k| {
            (
                format!("{:04}-{:03}", 1000 + k / 1000, k % 1000),
                spec.extent.sample(&mut rng),
            )
        })
        .collect();
    let mut postal_codes = PostalCodeTable::new();
    for (code, p) in &postal {
        postal_codes.insert(code.clone(), *p)?;
    }

    let centres: Vec<GeoPoint> = (0..spec.n_clusters).map(|_| spec.extent.sample(&mut rng)).collect();
    let sites: Vec<Site> = (0..spec.n_sites)
        .map(|k| {
            let c = centres[k % centres.len().max(1)];
            let s = spec.cluster_spread_km;
            let p = offset(c.lat(), c.lon(), rng.random_range(-s..=s), rng.random_range(-s..=s));
            Site {
                id: SiteId::new(format!("SITE{k:03}")),
                postal_code: None,
                location: Some(spec.extent.clamp(p)),
            }
        })
        .collect();

    let sessions = gen_sessions(spec, &sites, &mut rng)?;
    let donors = (0..spec.n_donors)
        .map(|k| gen_donor(spec, k, &postal, &sites, &mut rng))
        .collect();
    let registry = Registry::new(as_of, donors, sessions, sites)?;
    let (demand, first_time) = gen_series(spec, &mut rng)?;
    Ok(Dataset {
        registry,
        demand,
        first_time,
        postal_codes,
    })
}

fn gen_sessions(spec: &GenSpec, sites: &[Site], rng: &mut impl Rng) -> Result<Vec<SessionWindow>> {
    let first = spec.as_of();
    let days = (spec.horizon.start.plus(spec.horizon.months as i32).first_day() - first).num_days();
    (0..spec.n_sessions)
        .map(|k| {
            let site = &sites[rng.random_range(0..sites.len())];
            let start = first + Duration::days(rng.random_range(0..days));
            let span = rng.random_range(0..MAX_WINDOW_SPAN_DAYS);
            let mut dates = vec![start];
            for d in 1..=span {
                if d == span || rng.random_bool(0.3) {
                    dates.push(start + Duration::days(d));
                }
            }
            let cap = rng.random_range(spec.capacity_min..=spec.capacity_max).round().max(1.0);
            SessionWindow::new(
                SessionId::new(format!("S{k:05}")),
                site.id.clone(),
                site.location.expect("generated sites are located"),
                dates,
                cap,
            )
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Cohort {
    Active,
    Lapsing,
    Inactive,
}

fn gen_donor(spec: &GenSpec, k: usize, postal: &[(String, GeoPoint)], sites: &[Site], rng: &mut impl Rng) -> Donor {
    let as_of = spec.as_of();
    let sex = if rng.random_bool(0.5) { Sex::Male } else { Sex::Female };
    let limit = match sex {
        Sex::Male => 4,
        Sex::Female => 3,
    };
    let groups = WeightedIndex::new(BloodGroup::ALL.map(|g| spec.blood_shares.share(g))).expect("valid shares");
    let blood_group = BloodGroup::ALL[groups.sample(rng)];
    let (code, home) = postal[rng.random_range(0..postal.len())].clone();

    let u: f64 = rng.random();
    let mix = spec.status_mix;
    let cohort = if u < mix.active {
        Cohort::Active
    } else if u < mix.active + mix.lapsing {
        Cohort::Lapsing
    } else {
        Cohort::Inactive
    };
    let last = match cohort {
        Cohort::Active => Some(rng.random_range(1..ROLLING_YEAR_DAYS)),
        Cohort::Lapsing => Some(rng.random_range(ROLLING_YEAR_DAYS..2 * ROLLING_YEAR_DAYS)),
        Cohort::Inactive => rng
            .random_bool(0.5)
            .then(|| rng.random_range(2 * ROLLING_YEAR_DAYS..6 * ROLLING_YEAR_DAYS)),
    }
    .map(|back| as_of - Duration::days(back));

    let dates = last.map(|l| history(l, limit, rng)).unwrap_or_default();
    // Old enough to have been an adult at the first donation.
    let min_age = dates.first().map_or(18, |d| 19 + (as_of - *d).num_days() / 365);
    let age_years = rng.random_range(min_age..=64);
    let birth_date = as_of - Duration::days(age_years * 365 + rng.random_range(0..365));

    let nearest_site = sites
        .iter()
        .min_by(|a, b| {
            let da = haversine_km(home, a.location.expect("located"));
            let db = haversine_km(home, b.location.expect("located"));
            da.total_cmp(&db)
        })
        .map(|s| s.id.clone());
    let donations: Vec<Donation> = dates
        .into_iter()
        .map(|date| {
            let site_id = if sites.is_empty() {
                None
            } else if rng.random_bool(0.7) {
                nearest_site.clone()
            } else {
                Some(sites[rng.random_range(0..sites.len())].id.clone())
            };
            Donation { date, site_id }
        })
        .collect();
    let last_brigade_anchor = donations
        .last()
        .and_then(|d| d.site_id.as_ref())
        .and_then(|id| sites.iter().find(|s| &s.id == id))
        .and_then(|s| s.location);

    let attendance_probability = match cohort {
        Cohort::Active => rng.random_range(0.3..0.9f64),
        Cohort::Lapsing => rng.random_range(0.1..0.4f64),
        Cohort::Inactive => rng.random_range(0.02..0.15f64),
    };
    let attendance_probability = (attendance_probability * 1000.0).round() / 1000.0;

    let suspensions = if rng.random_bool(spec.suspension_rate) {
        let floor = donations
            .last()
            .map_or(as_of - Duration::days(30), |d| d.date.max(as_of - Duration::days(30)));
        let start = floor + Duration::days(rng.random_range(1..=120));
        vec![Suspension {
            start,
            end: start + Duration::days(rng.random_range(7..=120)),
        }]
    } else {
        Vec::new()
    };

    let mut invitations_sent: Vec<NaiveDate> = (0..rng.random_range(0..=3))
        .map(|_| as_of - Duration::days(rng.random_range(1..ROLLING_YEAR_DAYS)))
        .collect();
    invitations_sent.sort();

    Donor {
        id: DonorId::new(format!("D{k:07}")),
        sex,
        birth_date,
        max_eligible_age: 65,
        blood_group,
        attendance_probability,
        adverse_reaction: rng.random_bool(spec.adverse_rate),
        suspensions,
        donations,
        postal_code: Some(code),
        home_anchor: Some(home),
        last_brigade_anchor,
        invitations_sent,
    }
}

/// Donation dates ending at `last`, built backwards with at least the
/// minimum gap between consecutive dates and at most `limit` in any
/// rolling year. Spans at most about five years.
fn history(last: NaiveDate, limit: usize, rng: &mut impl Rng) -> Vec<NaiveDate> {
    let floor = last - Duration::days(5 * ROLLING_YEAR_DAYS);
    let mut dates = vec![last];
    while rng.random_bool(0.7) {
        let mut d = *dates.last().expect("non-empty") - Duration::days(MIN_GAP_DAYS + rng.random_range(0..=200));
        // Dates are descending; the window starting at `d` holds d and the
        // later dates within 364 days.
        while dates
            .iter()
            .filter(|x| (**x - d).num_days() < ROLLING_YEAR_DAYS)
            .count()
            + 1
            > limit
        {
            d -= Duration::days(30);
        }
        if d < floor {
            break;
        }
        dates.push(d);
    }
    dates.reverse();
    dates
}

fn seasonal(spec: &GenSpec, m: PlanningMonth) -> f64 {
    1.0 + spec.seasonal_amplitude * (2.0 * PI * (m.month as f64 - 1.0) / 12.0).cos()
}

fn gen_series(spec: &GenSpec, rng: &mut impl Rng) -> Result<(DemandPanel, MonthlySeries)> {
    let start = spec.horizon.start.plus(-12 * spec.history_years as i32);
    let n_months = 12 * spec.history_years + spec.horizon.months;
    let noise = |rng: &mut dyn rand::RngCore| {
        if spec.demand_noise > 0.0 {
            1.0 + rng.random_range(-spec.demand_noise..=spec.demand_noise)
        } else {
            1.0
        }
    };

    let mut panel = DemandPanel::new();
    for m in start.range(n_months) {
        let years = start.months_until(m) as f64 / 12.0;
        let level = spec.monthly_demand * seasonal(spec, m) * (1.0 + spec.trend_per_year * years).max(0.0);
        for g in BloodGroup::ALL {
            let ce = (level * spec.blood_shares.share(g) * noise(rng)).round().max(0.0);
            let cpp = (ce * spec.platelet_ratio * noise(rng)).round().max(0.0);
            panel.insert(m, g, Component::CE, ce)?;
            panel.insert(m, g, Component::CPP, cpp)?;
        }
    }

    let values = start
        .range(12 * spec.history_years)
        .into_iter()
        .map(|m| {
            (spec.first_time_level * seasonal(spec, m) * noise(rng))
                .round()
                .max(0.0)
        })
        .collect();
    Ok((panel, MonthlySeries::new(start, values)?))
}
