//! Domain types shared by every stage of the planner: blood groups, donors,
//! session windows, planning months and the in-memory registry.
//!
//! All collections inside a [`Registry`] are kept sorted by identifier so that
//! any iteration over donors, sessions or blood groups is deterministic.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geo::GeoPoint;

/// Length of every rolling "year" window, in days. Leap days are ignored.
pub const ROLLING_YEAR_DAYS: i64 = 365;

/// Longest admissible span of a grouped session window, in days.
pub const MAX_WINDOW_SPAN_DAYS: i64 = 14;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Registry identifier of a donor.
    DonorId
);
string_id!(
    /// Identifier of a grouped session window.
    SessionId
);
string_id!(
    /// Identifier of a collection site (fixed centre or mobile brigade location).
    SiteId
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Abo {
    A,
    B,
    AB,
    O,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rh {
    Positive,
    Negative,
}

/// ABO/Rh blood group. The derived ordering is the canonical iteration order
/// A+, A-, B+, B-, AB+, AB-, O+, O-.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BloodGroup {
    pub abo: Abo,
    pub rh: Rh,
}

impl BloodGroup {
    pub const fn new(abo: Abo, rh: Rh) -> Self {
        Self { abo, rh }
    }

    pub const ALL: [BloodGroup; 8] = [
        BloodGroup::new(Abo::A, Rh::Positive),
        BloodGroup::new(Abo::A, Rh::Negative),
        BloodGroup::new(Abo::B, Rh::Positive),
        BloodGroup::new(Abo::B, Rh::Negative),
        BloodGroup::new(Abo::AB, Rh::Positive),
        BloodGroup::new(Abo::AB, Rh::Negative),
        BloodGroup::new(Abo::O, Rh::Positive),
        BloodGroup::new(Abo::O, Rh::Negative),
    ];

    /// Position in [`BloodGroup::ALL`].
    pub fn index(self) -> usize {
        let abo = match self.abo {
            Abo::A => 0,
            Abo::B => 1,
            Abo::AB => 2,
            Abo::O => 3,
        };
        abo * 2 + usize::from(self.rh == Rh::Negative)
    }

    fn abo_str(self) -> &'static str {
        match self.abo {
            Abo::A => "A",
            Abo::B => "B",
            Abo::AB => "AB",
            Abo::O => "O",
        }
    }

    /// Identifier-safe spelling used in model variable names, e.g. `ABneg`.
    pub fn tag(self) -> String {
        let rh = match self.rh {
            Rh::Positive => "pos",
            Rh::Negative => "neg",
        };
        format!("{}{}", self.abo_str(), rh)
    }
}

impl fmt::Display for BloodGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rh = match self.rh {
            Rh::Positive => '+',
            Rh::Negative => '-',
        };
        write!(f, "{}{}", self.abo_str(), rh)
    }
}

impl FromStr for BloodGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (abo, rh) = if let Some(rest) = s.strip_suffix("pos") {
            (rest, Rh::Positive)
        } else if let Some(rest) = s.strip_suffix("neg") {
            (rest, Rh::Negative)
        } else if let Some(rest) = s.strip_suffix('+') {
            (rest, Rh::Positive)
        } else if let Some(rest) = s.strip_suffix('-').or_else(|| s.strip_suffix('\u{2212}')) {
            (rest, Rh::Negative)
        } else {
            return Err(invalid(format!("unrecognised blood group {s:?}")));
        };
        let abo = match abo.to_ascii_uppercase().as_str() {
            "A" => Abo::A,
            "B" => Abo::B,
            "AB" => Abo::AB,
            "O" | "0" => Abo::O,
            _ => return Err(invalid(format!("unrecognised blood group {s:?}"))),
        };
        Ok(Self { abo, rh })
    }
}

impl From<BloodGroup> for String {
    fn from(g: BloodGroup) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for BloodGroup {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl FromStr for Sex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Sex::Male),
            "f" | "female" => Ok(Sex::Female),
            other => Err(invalid(format!("unrecognised sex {other:?}"))),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "M",
            Sex::Female => "F",
        })
    }
}

/// Calendar month of the planning horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PlanningMonth {
    pub year: i32,
    pub month: u32,
}

impl PlanningMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(invalid(format!("month {month} outside 1..=12")));
        }
        Ok(Self { year, month })
    }

    /// The month containing `date`.
    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn last_day(self) -> NaiveDate {
        self.plus(1).first_day().pred_opt().expect("date in range")
    }

    /// Shift by a (possibly negative) number of months.
    pub fn plus(self, months: i32) -> Self {
        let idx = self.year * 12 + self.month as i32 - 1 + months;
        Self {
            year: idx.div_euclid(12),
            month: (idx.rem_euclid(12) + 1) as u32,
        }
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: PlanningMonth) -> i32 {
        (other.year - self.year) * 12 + other.month as i32 - self.month as i32
    }

    /// `count` consecutive months starting at `self`.
    pub fn range(self, count: usize) -> Vec<PlanningMonth> {
        (0..count as i32).map(|k| self.plus(k)).collect()
    }
}

impl fmt::Display for PlanningMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for PlanningMonth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| invalid(format!("expected YYYY-MM, got {s:?}")))?;
        let year = y.parse().map_err(|_| invalid(format!("bad year in {s:?}")))?;
        let month = m.parse().map_err(|_| invalid(format!("bad month in {s:?}")))?;
        Self::new(year, month)
    }
}

impl From<PlanningMonth> for String {
    fn from(m: PlanningMonth) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for PlanningMonth {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A historical donation, optionally tagged with the site where it happened.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Donation {
    pub date: NaiveDate,
    pub site_id: Option<SiteId>,
}

/// Closed interval of medical deferral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Suspension {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Suspension {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Donor {
    pub id: DonorId,
    pub sex: Sex,
    pub birth_date: NaiveDate,
    pub max_eligible_age: u32,
    pub blood_group: BloodGroup,
    /// Expected show-up probability when invited, in (0, 1].
    pub attendance_probability: f64,
    pub adverse_reaction: bool,
    pub suspensions: Vec<Suspension>,
    /// Strictly increasing by date.
    pub donations: Vec<Donation>,
    pub postal_code: Option<String>,
    pub home_anchor: Option<GeoPoint>,
    pub last_brigade_anchor: Option<GeoPoint>,
    /// Sorted, duplicates allowed (several invitations on one day).
    pub invitations_sent: Vec<NaiveDate>,
}

impl Donor {
    /// Whole years elapsed since birth; the age increments on the birthday.
    pub fn age_at(&self, date: NaiveDate) -> Result<u32> {
        age_between(self.birth_date, date)
    }

    /// Sex-specific high-frequency rule: at least 3 (male) or 2 (female)
    /// donations in the 365 days ending at `as_of`.
    pub fn is_high_frequency(&self, as_of: NaiveDate) -> bool {
        let needed = match self.sex {
            Sex::Male => 3,
            Sex::Female => 2,
        };
        self.donations_in_year_to(as_of) >= needed
    }

    /// Maximum number of donations in any rolling 365-day window.
    pub fn annual_limit(&self) -> u32 {
        match self.sex {
            Sex::Male => 4,
            Sex::Female => 3,
        }
    }

    /// Historical donations in `(t - 365, t]`.
    pub fn donations_in_year_to(&self, t: NaiveDate) -> u32 {
        count_in_year_to(self.donations.iter().map(|d| d.date), t)
    }

    /// Invitations already sent in `(t - 365, t]`.
    pub fn invitations_in_year_to(&self, t: NaiveDate) -> u32 {
        count_in_year_to(self.invitations_sent.iter().copied(), t)
    }

    pub fn last_donation(&self) -> Option<NaiveDate> {
        self.donations.last().map(|d| d.date)
    }

    /// Most recent donation on or before `date`.
    pub fn last_donation_on_or_before(&self, date: NaiveDate) -> Option<NaiveDate> {
        self.donations.iter().rev().map(|d| d.date).find(|d| *d <= date)
    }

    pub fn is_suspended_at(&self, date: NaiveDate) -> bool {
        self.suspensions.iter().any(|s| s.contains(date))
    }

    pub fn anchors(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        self.last_brigade_anchor.iter().chain(self.home_anchor.iter()).copied()
    }

    pub fn has_anchor(&self) -> bool {
        self.home_anchor.is_some() || self.last_brigade_anchor.is_some()
    }

    /// Most frequent donation site; ties go to the most recently used site.
    pub fn modal_site(&self) -> Option<&SiteId> {
        let mut counts: HashMap<&SiteId, (usize, usize)> = HashMap::new();
        for (pos, d) in self.donations.iter().enumerate() {
            if let Some(site) = &d.site_id {
                let e = counts.entry(site).or_insert((0, 0));
                e.0 += 1;
                e.1 = pos;
            }
        }
        counts.into_iter().max_by(|a, b| a.1.cmp(&b.1)).map(|(site, _)| site)
    }

    /// Site of the most recent donation that carries site metadata.
    pub fn last_site(&self) -> Option<&SiteId> {
        self.donations.iter().rev().find_map(|d| d.site_id.as_ref())
    }

    pub fn recency_status(&self, as_of: NaiveDate) -> RecencyStatus {
        match self.last_donation_on_or_before(as_of) {
            Some(d) if (as_of - d).num_days() < ROLLING_YEAR_DAYS => RecencyStatus::Active,
            Some(d) if (as_of - d).num_days() < 2 * ROLLING_YEAR_DAYS => RecencyStatus::Lapsing,
            _ => RecencyStatus::Inactive,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let p = self.attendance_probability;
        if !(p > 0.0 && p <= 1.0) {
            return Err(invalid(format!(
                "donor {}: attendance probability {p} outside (0, 1]",
                self.id
            )));
        }
        if self.donations.windows(2).any(|w| w[0].date >= w[1].date) {
            return Err(invalid(format!(
                "donor {}: donation history not strictly increasing",
                self.id
            )));
        }
        if self.invitations_sent.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid(format!("donor {}: invitations not sorted", self.id)));
        }
        if self.suspensions.iter().any(|s| s.start > s.end) {
            return Err(invalid(format!("donor {}: inverted suspension", self.id)));
        }
        Ok(())
    }
}

/// Donor status by recency of the last donation: within 12 months, within
/// 24 months, or neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecencyStatus {
    Active,
    Lapsing,
    Inactive,
}

pub fn age_between(birth: NaiveDate, date: NaiveDate) -> Result<u32> {
    if date < birth {
        return Err(invalid(format!("date {date} precedes birth date {birth}")));
    }
    let mut years = date.year() - birth.year();
    if (date.month(), date.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    Ok(years as u32)
}

/// Number of dates `d` with `t - 365 < d <= t`.
pub fn count_in_year_to(dates: impl Iterator<Item = NaiveDate>, t: NaiveDate) -> u32 {
    dates
        .filter(|d| {
            let age = (t - *d).num_days();
            (0..ROLLING_YEAR_DAYS).contains(&age)
        })
        .count() as u32
}

/// Collection events at one site grouped into a window of at most 14 days.
///
/// The first and last admissible dates coincide with `start_date` and
/// `end_date`; the window is defined by the events it groups.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionWindow {
    pub id: SessionId,
    pub site_id: SiteId,
    pub location: GeoPoint,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub admissible_dates: Vec<NaiveDate>,
    /// Capacity in expected-attendance units.
    pub capacity: f64,
}

impl SessionWindow {
    pub fn new(
        id: SessionId,
        site_id: SiteId,
        location: GeoPoint,
        mut admissible_dates: Vec<NaiveDate>,
        capacity: f64,
    ) -> Result<Self> {
        admissible_dates.sort();
        admissible_dates.dedup();
        let (Some(&start_date), Some(&end_date)) = (admissible_dates.first(), admissible_dates.last()) else {
            return Err(invalid(format!("session {id}: no admissible dates")));
        };
        let s = Self {
            id,
            site_id,
            location,
            start_date,
            end_date,
            admissible_dates,
            capacity,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn month(&self) -> PlanningMonth {
        PlanningMonth::of(self.start_date)
    }

    pub fn earliest_admissible(&self) -> NaiveDate {
        self.admissible_dates[0]
    }

    pub fn is_admissible(&self, date: NaiveDate) -> bool {
        self.admissible_dates.binary_search(&date).is_ok()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.start_date > self.end_date {
            return Err(invalid(format!("session {}: start after end", self.id)));
        }
        if (self.end_date - self.start_date).num_days() > MAX_WINDOW_SPAN_DAYS {
            return Err(invalid(format!(
                "session {}: window spans more than {MAX_WINDOW_SPAN_DAYS} days",
                self.id
            )));
        }
        if self.admissible_dates.first() != Some(&self.start_date)
            || self.admissible_dates.last() != Some(&self.end_date)
            || self.admissible_dates.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(invalid(format!(
                "session {}: admissible dates must be sorted and span exactly [start, end]",
                self.id
            )));
        }
        if !(self.capacity >= 0.0 && self.capacity.is_finite()) {
            return Err(invalid(format!(
                "session {}: capacity {} must be finite and non-negative",
                self.id, self.capacity
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Site {
    pub id: SiteId,
    pub postal_code: Option<String>,
    pub location: Option<GeoPoint>,
}

/// Canonical in-memory registry. Donors and sessions are sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct Registry {
    pub as_of: NaiveDate,
    donors: Vec<Donor>,
    sessions: Vec<SessionWindow>,
    sites: BTreeMap<SiteId, Site>,
    donor_index: HashMap<DonorId, usize>,
    session_index: HashMap<SessionId, usize>,
}

impl Registry {
    pub fn new(
        as_of: NaiveDate,
        mut donors: Vec<Donor>,
        mut sessions: Vec<SessionWindow>,
        sites: Vec<Site>,
    ) -> Result<Self> {
        donors.sort_by(|a, b| a.id.cmp(&b.id));
        sessions.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = donors.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(invalid(format!("duplicate donor id {}", w[0].id)));
        }
        if let Some(w) = sessions.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(invalid(format!("duplicate session id {}", w[0].id)));
        }
        for d in &donors {
            d.validate()?;
        }
        for s in &sessions {
            s.validate()?;
        }
        let mut site_map = BTreeMap::new();
        for site in sites {
            if site_map.insert(site.id.clone(), site).is_some() {
                return Err(invalid("duplicate site id"));
            }
        }
        let donor_index = donors.iter().enumerate().map(|(k, d)| (d.id.clone(), k)).collect();
        let session_index = sessions.iter().enumerate().map(|(k, s)| (s.id.clone(), k)).collect();
        Ok(Self {
            as_of,
            donors,
            sessions,
            sites: site_map,
            donor_index,
            session_index,
        })
    }

    pub fn donors(&self) -> &[Donor] {
        &self.donors
    }

    pub fn sessions(&self) -> &[SessionWindow] {
        &self.sessions
    }

    pub fn sites(&self) -> &BTreeMap<SiteId, Site> {
        &self.sites
    }

    pub fn donor(&self, id: &DonorId) -> Option<&Donor> {
        self.donor_index.get(id).map(|&k| &self.donors[k])
    }

    pub fn session(&self, id: &SessionId) -> Option<&SessionWindow> {
        self.session_index.get(id).map(|&k| &self.sessions[k])
    }

    pub fn donor_position(&self, id: &DonorId) -> Option<usize> {
        self.donor_index.get(id).copied()
    }

    pub fn session_position(&self, id: &SessionId) -> Option<usize> {
        self.session_index.get(id).copied()
    }

    /// Location of a site, falling back to any session held there.
    pub fn site_location(&self, id: &SiteId) -> Option<GeoPoint> {
        self.sites
            .get(id)
            .and_then(|s| s.location)
            .or_else(|| self.sessions.iter().find(|s| &s.site_id == id).map(|s| s.location))
    }

    /// True when no donation or invitation is after `as_of`.
    pub fn histories_precede_as_of(&self) -> bool {
        self.donors.iter().all(|d| {
            d.donations.iter().all(|x| x.date <= self.as_of) && d.invitations_sent.iter().all(|x| *x <= self.as_of)
        })
    }

    /// Rebuild with modified donors or sessions; re-validates.
    pub fn with_parts(&self, as_of: NaiveDate, donors: Vec<Donor>, sessions: Vec<SessionWindow>) -> Result<Self> {
        Registry::new(as_of, donors, sessions, self.sites.values().cloned().collect())
    }

    pub fn into_parts(self) -> (NaiveDate, Vec<Donor>, Vec<SessionWindow>, Vec<Site>) {
        (
            self.as_of,
            self.donors,
            self.sessions,
            self.sites.into_values().collect(),
        )
    }

    #[cfg(test)]
    pub(crate) fn sessions_mut(&mut self) -> &mut Vec<SessionWindow> {
        &mut self.sessions
    }

    /// Sessions whose start date falls in one of `months`.
    pub fn sessions_in(&self, months: &[PlanningMonth]) -> impl Iterator<Item = &SessionWindow> {
        let months = months.to_vec();
        self.sessions.iter().filter(move |s| months.contains(&s.month()))
    }
}
