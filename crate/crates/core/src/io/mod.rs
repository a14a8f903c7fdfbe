//! Delimited-text ingestion and output.
//!
//! All tables are comma-separated UTF-8 with a header row and ISO-8601
//! dates. Columns are matched by name, so their order is free.
//!
//! | file | columns |
//! |---|---|
//! | donors.csv | donor_id, sex, birth_date, max_eligible_age?, blood_group, attendance_probability, adverse_reaction, postal_code?, home_lat?, home_lon?, brigade_lat?, brigade_lon? |
//! | donations.csv | donor_id, date, site_id? |
//! | suspensions.csv | donor_id, start, end |
//! | invitations.csv | donor_id, date |
//! | sessions.csv | session_id, site_id, lat, lon, admissible_dates (`;`-separated), capacity |
//! | sites.csv | site_id, postal_code?, lat?, lon? |
//! | demand_panel.csv | month (`YYYY-MM`), blood_group, component (`CE`/`CPP`), units |
//! | first_time.csv | month, count |
//! | postal_codes.csv | postal_code, lat, lon |
//! | plan.csv | donor_id, session_id, planned_date, distance_km, attendance_probability, adverse |
//! | report.csv | window_start, month, status, radius_km, target, organic, residual, planned, fulfillment |
//!
//! A `?` marks optional columns. Malformed rows are rejected one by one and
//! recorded with their line; unreadable or misshapen files abort.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::demand::{Component, DemandPanel};
use crate::error::{Error, Result};
use crate::forecast::MonthlySeries;
use crate::geo::{GeoPoint, PostalCodeTable};
use crate::model::{
    BloodGroup, Donation, Donor, DonorId, PlanningMonth, Registry, SessionId, SessionWindow, Sex, Site, SiteId,
    Suspension,
};
use crate::pipeline::ScenarioResult;
use crate::plan::{InvitationPlan, ObjectiveBreakdown, PlannedInvitation};

pub const DONORS: &str = "donors.csv";
pub const DONATIONS: &str = "donations.csv";
pub const SUSPENSIONS: &str = "suspensions.csv";
pub const INVITATIONS: &str = "invitations.csv";
pub const SESSIONS: &str = "sessions.csv";
pub const SITES: &str = "sites.csv";
pub const DEMAND_PANEL: &str = "demand_panel.csv";
pub const FIRST_TIME: &str = "first_time.csv";
pub const POSTAL_CODES: &str = "postal_codes.csv";
pub const PLAN: &str = "plan.csv";
pub const REPORT: &str = "report.csv";

/// Input file locations. Optional files may be absent.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPaths {
    pub donors: PathBuf,
    pub donations: PathBuf,
    pub sessions: PathBuf,
    pub demand_panel: PathBuf,
    pub suspensions: Option<PathBuf>,
    pub invitations: Option<PathBuf>,
    pub sites: Option<PathBuf>,
    pub first_time: Option<PathBuf>,
    pub postal_codes: Option<PathBuf>,
}

impl DataPaths {
    /// Standard file names inside `dir`; optional files only if present.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            donors: dir.join(DONORS),
            donations: dir.join(DONATIONS),
            sessions: dir.join(SESSIONS),
            demand_panel: dir.join(DEMAND_PANEL),
            suspensions: opt(SUSPENSIONS),
            invitations: opt(INVITATIONS),
            sites: opt(SITES),
            first_time: opt(FIRST_TIME),
            postal_codes: opt(POSTAL_CODES),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rejection {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EntityCount {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IngestionReport {
    /// Keyed by file name.
    pub counts: BTreeMap<String, EntityCount>,
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
    /// SHA-256 of each file read, hex.
    pub checksums: BTreeMap<String, String>,
}

impl IngestionReport {
    pub fn total_rejected(&self) -> usize {
        self.rejections.len()
    }

    fn accept(&mut self, file: &str) {
        self.counts.entry(file.to_string()).or_default().accepted += 1;
    }

    fn reject(&mut self, file: &str, line: u64, reason: impl Into<String>) {
        self.counts.entry(file.to_string()).or_default().rejected += 1;
        self.rejections.push(Rejection {
            file: file.to_string(),
            line,
            reason: reason.into(),
        });
    }

    /// Undo an acceptance, for rows dropped during assembly.
    fn demote(&mut self, file: &str, line: u64, reason: impl Into<String>) {
        let c = self.counts.entry(file.to_string()).or_default();
        c.accepted -= 1;
        self.reject(file, line, reason);
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub registry: Registry,
    pub demand: DemandPanel,
    pub first_time: Option<MonthlySeries>,
    pub postal_codes: PostalCodeTable,
    pub report: IngestionReport,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_checksum(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

struct Table {
    name: String,
    cols: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    cols: &'a HashMap<String, usize>,
}

type RowResult<T> = std::result::Result<T, String>;

impl Row<'_> {
    fn opt(&self, col: &str) -> Option<&str> {
        self.cols
            .get(col)
            .and_then(|&i| self.rec.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }

    fn req(&self, col: &str) -> RowResult<&str> {
        self.opt(col).ok_or_else(|| format!("missing {col}"))
    }

    fn parse<T: FromStr>(&self, col: &str) -> RowResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.req(col)?;
        raw.parse().map_err(|e| format!("bad {col} {raw:?}: {e}"))
    }

    fn parse_opt<T: FromStr>(&self, col: &str) -> RowResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(col).map(|_| self.parse(col)).transpose()
    }

    fn date(&self, col: &str) -> RowResult<NaiveDate> {
        parse_date(self.req(col)?).map_err(|e| format!("bad {col}: {e}"))
    }

    fn point(&self, lat: &str, lon: &str) -> RowResult<Option<GeoPoint>> {
        match (self.parse_opt::<f64>(lat)?, self.parse_opt::<f64>(lon)?) {
            (Some(a), Some(b)) => GeoPoint::new(a, b).map(Some).map_err(|e| e.to_string()),
            (None, None) => Ok(None),
            _ => Err(format!("{lat} and {lon} must be given together")),
        }
    }

    fn flag(&self, col: &str) -> RowResult<bool> {
        match self.req(col)?.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => Ok(true),
            "0" | "false" | "no" => Ok(false),
            other => Err(format!("bad {col} {other:?}")),
        }
    }
}

fn parse_date(s: &str) -> RowResult<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("{s:?}: {e}"))
}

impl Table {
    fn read(path: &Path, required: &[&str], report: &mut IngestionReport) -> Result<Self> {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        let bytes = fs::read(path).map_err(|e| Error::Parse {
            file: name.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        report.checksums.insert(name.clone(), sha256_hex(&bytes));
        report.counts.entry(name.clone()).or_default();

        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(bytes.as_slice());
        let broken = |line: u64, message: String| Error::Parse {
            file: name.clone(),
            line,
            message,
        };
        let headers = reader.headers().map_err(|e| broken(1, e.to_string()))?.clone();
        let cols: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for col in required {
            if !cols.contains_key(*col) {
                return Err(broken(1, format!("missing column {col}")));
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                broken(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self { name, cols, rows })
    }

    fn each(&self) -> impl Iterator<Item = (u64, Row<'_>)> {
        self.rows
            .iter()
            .map(|(line, rec)| (*line, Row { rec, cols: &self.cols }))
    }
}

/// Read, validate and assemble every input table.
pub fn ingest(paths: &DataPaths, as_of: NaiveDate) -> Result<Ingested> {
    let mut report = IngestionReport::default();

    let mut postal_codes = PostalCodeTable::new();
    if let Some(path) = &paths.postal_codes {
        let t = Table::read(path, &["postal_code", "lat", "lon"], &mut report)?;
        for (line, row) in t.each() {
            let got = (|| -> RowResult<_> {
                let code = row.req("postal_code")?.to_string();
                let p = row.point("lat", "lon")?.ok_or("missing coordinates")?;
                postal_codes.insert(code, p).map_err(|e| e.to_string())
            })();
            record(&mut report, &t.name, line, got);
        }
    }

    let mut sites: BTreeMap<SiteId, Site> = BTreeMap::new();
    if let Some(path) = &paths.sites {
        let t = Table::read(path, &["site_id"], &mut report)?;
        for (line, row) in t.each() {
            let got = (|| -> RowResult<_> {
                let id = SiteId::new(row.req("site_id")?);
                if sites.contains_key(&id) {
                    return Err(format!("duplicate site {id}"));
                }
                let postal_code = row.opt("postal_code").map(str::to_string);
                let location = row
                    .point("lat", "lon")?
                    .or_else(|| postal_code.as_deref().and_then(|c| postal_codes.get(c)));
                sites.insert(
                    id.clone(),
                    Site {
                        id,
                        postal_code,
                        location,
                    },
                );
                Ok(())
            })();
            record(&mut report, &t.name, line, got);
        }
    }

    let mut donors: BTreeMap<DonorId, (u64, Donor)> = BTreeMap::new();
    let t = Table::read(
        &paths.donors,
        &[
            "donor_id",
            "sex",
            "birth_date",
            "blood_group",
            "attendance_probability",
            "adverse_reaction",
        ],
        &mut report,
    )?;
    for (line, row) in t.each() {
        let got = parse_donor(&row).and_then(|d| {
            if donors.contains_key(&d.id) {
                return Err(format!("duplicate donor {}", d.id));
            }
            donors.insert(d.id.clone(), (line, d));
            Ok(())
        });
        record(&mut report, &t.name, line, got);
    }

    // Donation rows keep their line so duplicates can be reported.
    let mut donation_lines: BTreeMap<DonorId, Vec<(NaiveDate, u64)>> = BTreeMap::new();
    let t = Table::read(&paths.donations, &["donor_id", "date"], &mut report)?;
    for (line, row) in t.each() {
        let got = (|| -> RowResult<_> {
            let id = DonorId::new(row.req("donor_id")?);
            let (_, d) = donors.get_mut(&id).ok_or_else(|| format!("unknown donor {id}"))?;
            let date = row.date("date")?;
            if date > as_of {
                return Err(format!("donation {date} after the registry date {as_of}"));
            }
            let site_id = row.opt("site_id").map(SiteId::new);
            d.donations.push(Donation { date, site_id });
            donation_lines.entry(id).or_default().push((date, line));
            Ok(())
        })();
        record(&mut report, &t.name, line, got);
    }

    if let Some(path) = &paths.suspensions {
        let t = Table::read(path, &["donor_id", "start", "end"], &mut report)?;
        for (line, row) in t.each() {
            let got = (|| -> RowResult<_> {
                let id = DonorId::new(row.req("donor_id")?);
                let (_, d) = donors.get_mut(&id).ok_or_else(|| format!("unknown donor {id}"))?;
                let (start, end) = (row.date("start")?, row.date("end")?);
                if start > end {
                    return Err(format!("suspension starts {start} after it ends {end}"));
                }
                d.suspensions.push(Suspension { start, end });
                Ok(())
            })();
            record(&mut report, &t.name, line, got);
        }
    }

    if let Some(path) = &paths.invitations {
        let t = Table::read(path, &["donor_id", "date"], &mut report)?;
        for (line, row) in t.each() {
            let got = (|| -> RowResult<_> {
                let id = DonorId::new(row.req("donor_id")?);
                let (_, d) = donors.get_mut(&id).ok_or_else(|| format!("unknown donor {id}"))?;
                d.invitations_sent.push(row.date("date")?);
                Ok(())
            })();
            record(&mut report, &t.name, line, got);
        }
    }

    let donations_file = file_name(&paths.donations);
    let mut ghost_sites = 0usize;
    let mut assembled = Vec::with_capacity(donors.len());
    for (id, (_, mut d)) in donors {
        d.donations.sort_by_key(|x| x.date);
        if let Some(lines) = donation_lines.get_mut(&id) {
            lines.sort();
            for w in lines.windows(2) {
                if w[0].0 == w[1].0 {
                    report.demote(
                        &donations_file,
                        w[1].1,
                        format!("duplicate donation {} for {id}", w[1].0),
                    );
                }
            }
        }
        d.donations.dedup_by_key(|x| x.date);
        d.invitations_sent.sort();
        d.suspensions.sort_by_key(|s| (s.start, s.end));
        ghost_sites += d
            .donations
            .iter()
            .filter(|x| x.site_id.as_ref().is_some_and(|s| !sites.contains_key(s)))
            .count();

        if d.home_anchor.is_none() {
            match d.postal_code.as_deref() {
                Some(code) => match postal_codes.get(code) {
                    Some(p) => d.home_anchor = Some(p),
                    None => report.warnings.push(format!("donor {id}: unknown postal code {code}")),
                },
                None => report.warnings.push(format!("donor {id}: no postal code")),
            }
        }
        if d.last_brigade_anchor.is_none() {
            d.last_brigade_anchor = d
                .donations
                .last()
                .and_then(|x| x.site_id.as_ref())
                .and_then(|s| sites.get(s))
                .and_then(|s| s.location);
        }
        if !d.has_anchor() {
            report.warnings.push(format!("donor {id}: no geographic anchor"));
        }
        assembled.push(d);
    }
    if ghost_sites > 0 {
        report
            .warnings
            .push(format!("{ghost_sites} donations reference sites without a location"));
    }

    let mut sessions: BTreeMap<SessionId, SessionWindow> = BTreeMap::new();
    let t = Table::read(
        &paths.sessions,
        &["session_id", "site_id", "lat", "lon", "admissible_dates", "capacity"],
        &mut report,
    )?;
    for (line, row) in t.each() {
        let got = parse_session(&row).and_then(|s| {
            if sessions.contains_key(&s.id) {
                return Err(format!("duplicate session {}", s.id));
            }
            sessions.insert(s.id.clone(), s);
            Ok(())
        });
        record(&mut report, &t.name, line, got);
    }

    let registry = Registry::new(
        as_of,
        assembled,
        sessions.into_values().collect(),
        sites.into_values().collect(),
    )?;

    let mut demand = DemandPanel::new();
    let t = Table::read(
        &paths.demand_panel,
        &["month", "blood_group", "component", "units"],
        &mut report,
    )?;
    for (line, row) in t.each() {
        let got = (|| -> RowResult<_> {
            let m: PlanningMonth = row.parse("month")?;
            let g: BloodGroup = row.parse("blood_group")?;
            let c: Component = row.parse("component")?;
            let units: f64 = row.parse("units")?;
            demand.insert(m, g, c, units).map_err(|e| e.to_string())
        })();
        record(&mut report, &t.name, line, got);
    }

    let mut first_time = None;
    if let Some(path) = &paths.first_time {
        let t = Table::read(path, &["month", "count"], &mut report)?;
        let mut rows = Vec::new();
        for (line, row) in t.each() {
            let got = (|| -> RowResult<_> {
                let m: PlanningMonth = row.parse("month")?;
                let v: f64 = row.parse("count")?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(format!("bad count {v}"));
                }
                rows.push((m.year, m.month, v));
                Ok(())
            })();
            record(&mut report, &t.name, line, got);
        }
        if !rows.is_empty() {
            rows.sort_by_key(|r| (r.0, r.1));
            first_time = Some(MonthlySeries::from_rows(&rows).map_err(|e| Error::Parse {
                file: t.name.clone(),
                line: 0,
                message: e.to_string(),
            })?);
        }
    }

    Ok(Ingested {
        registry,
        demand,
        first_time,
        postal_codes,
        report,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn record(report: &mut IngestionReport, file: &str, line: u64, got: RowResult<()>) {
    match got {
        Ok(()) => report.accept(file),
        Err(reason) => report.reject(file, line, reason),
    }
}

fn parse_donor(row: &Row<'_>) -> RowResult<Donor> {
    let p: f64 = row.parse("attendance_probability")?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(format!("attendance_probability {p} outside (0, 1]"));
    }
    Ok(Donor {
        id: DonorId::new(row.req("donor_id")?),
        sex: row.parse::<Sex>("sex")?,
        birth_date: row.date("birth_date")?,
        max_eligible_age: row.parse_opt("max_eligible_age")?.unwrap_or(65),
        blood_group: row.parse("blood_group")?,
        attendance_probability: p,
        adverse_reaction: row.flag("adverse_reaction")?,
        suspensions: Vec::new(),
        donations: Vec::new(),
        postal_code: row.opt("postal_code").map(str::to_string),
        home_anchor: row.point("home_lat", "home_lon")?,
        last_brigade_anchor: row.point("brigade_lat", "brigade_lon")?,
        invitations_sent: Vec::new(),
    })
}

fn parse_session(row: &Row<'_>) -> RowResult<SessionWindow> {
    let dates = row
        .req("admissible_dates")?
        .split(';')
        .map(parse_date)
        .collect::<RowResult<Vec<_>>>()?;
    SessionWindow::new(
        SessionId::new(row.req("session_id")?),
        SiteId::new(row.req("site_id")?),
        row.point("lat", "lon")?.ok_or("missing coordinates")?,
        dates,
        row.parse("capacity")?,
    )
    .map_err(|e| e.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write the registry, demand and reference tables under the standard names.
pub fn write_dataset(
    dir: &Path,
    registry: &Registry,
    demand: &DemandPanel,
    first_time: Option<&MonthlySeries>,
    postal_codes: &PostalCodeTable,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = writer(&dir.join(DONORS))?;
    w.write_record([
        "donor_id",
        "sex",
        "birth_date",
        "max_eligible_age",
        "blood_group",
        "attendance_probability",
        "adverse_reaction",
        "postal_code",
        "home_lat",
        "home_lon",
        "brigade_lat",
        "brigade_lon",
    ])?;
    for d in registry.donors() {
        w.write_record([
            d.id.to_string(),
            d.sex.to_string(),
            d.birth_date.to_string(),
            d.max_eligible_age.to_string(),
            d.blood_group.to_string(),
            d.attendance_probability.to_string(),
            u8::from(d.adverse_reaction).to_string(),
            d.postal_code.clone().unwrap_or_default(),
            opt_str(d.home_anchor.map(|p| p.lat())),
            opt_str(d.home_anchor.map(|p| p.lon())),
            opt_str(d.last_brigade_anchor.map(|p| p.lat())),
            opt_str(d.last_brigade_anchor.map(|p| p.lon())),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(DONATIONS))?;
    w.write_record(["donor_id", "date", "site_id"])?;
    for d in registry.donors() {
        for x in &d.donations {
            w.write_record([d.id.to_string(), x.date.to_string(), opt_str(x.site_id.as_ref())])?;
        }
    }
    w.flush()?;

    let mut w = writer(&dir.join(SUSPENSIONS))?;
    w.write_record(["donor_id", "start", "end"])?;
    for d in registry.donors() {
        for s in &d.suspensions {
            w.write_record([d.id.to_string(), s.start.to_string(), s.end.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = writer(&dir.join(INVITATIONS))?;
    w.write_record(["donor_id", "date"])?;
    for d in registry.donors() {
        for x in &d.invitations_sent {
            w.write_record([d.id.to_string(), x.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = writer(&dir.join(SESSIONS))?;
    w.write_record(["session_id", "site_id", "lat", "lon", "admissible_dates", "capacity"])?;
    for s in registry.sessions() {
        let dates: Vec<String> = s.admissible_dates.iter().map(|d| d.to_string()).collect();
        w.write_record([
            s.id.to_string(),
            s.site_id.to_string(),
            s.location.lat().to_string(),
            s.location.lon().to_string(),
            dates.join(";"),
            s.capacity.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(SITES))?;
    w.write_record(["site_id", "postal_code", "lat", "lon"])?;
    for s in registry.sites().values() {
        w.write_record([
            s.id.to_string(),
            s.postal_code.clone().unwrap_or_default(),
            opt_str(s.location.map(|p| p.lat())),
            opt_str(s.location.map(|p| p.lon())),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(DEMAND_PANEL))?;
    w.write_record(["month", "blood_group", "component", "units"])?;
    for ((m, g, c), v) in demand.iter() {
        w.write_record([m.to_string(), g.to_string(), c.to_string(), v.to_string()])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(FIRST_TIME))?;
    w.write_record(["month", "count"])?;
    if let Some(series) = first_time {
        for (k, v) in series.values().iter().enumerate() {
            w.write_record([series.start().plus(k as i32).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = writer(&dir.join(POSTAL_CODES))?;
    w.write_record(["postal_code", "lat", "lon"])?;
    for (code, p) in postal_codes.iter() {
        w.write_record([code.clone(), p.lat().to_string(), p.lon().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_plan(path: &Path, invitations: &[PlannedInvitation]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "donor_id",
        "session_id",
        "planned_date",
        "distance_km",
        "attendance_probability",
        "adverse",
    ])?;
    for i in invitations {
        w.write_record([
            i.donor_id.to_string(),
            i.session_id.to_string(),
            i.planned_date.to_string(),
            i.distance_km.to_string(),
            i.probability.to_string(),
            u8::from(i.adverse).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a saved plan. Any malformed row is an error.
pub fn read_plan(path: &Path) -> Result<InvitationPlan> {
    let mut report = IngestionReport::default();
    let t = Table::read(
        path,
        &[
            "donor_id",
            "session_id",
            "planned_date",
            "distance_km",
            "attendance_probability",
            "adverse",
        ],
        &mut report,
    )?;
    let mut invitations = Vec::with_capacity(t.rows.len());
    for (line, row) in t.each() {
        let inv = (|| -> RowResult<_> {
            Ok(PlannedInvitation {
                donor_id: DonorId::new(row.req("donor_id")?),
                session_id: SessionId::new(row.req("session_id")?),
                planned_date: row.date("planned_date")?,
                distance_km: row.parse("distance_km")?,
                probability: row.parse("attendance_probability")?,
                adverse: row.flag("adverse")?,
            })
        })()
        .map_err(|message| Error::Parse {
            file: t.name.clone(),
            line,
            message,
        })?;
        invitations.push(inv);
    }
    Ok(InvitationPlan {
        solver: "file".into(),
        status: "loaded".into(),
        invitations,
        fulfilled: BTreeMap::new(),
        slacks: BTreeMap::new(),
        objective: ObjectiveBreakdown::default(),
        wall_time_s: 0.0,
        peak_memory_mb: None,
    })
}

/// Monthly rows of a scenario. Timings are left out so reruns compare
/// byte for byte.
pub fn write_report(path: &Path, result: &ScenarioResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "window_start",
        "month",
        "status",
        "radius_km",
        "target",
        "organic",
        "residual",
        "planned",
        "fulfillment",
    ])?;
    let f = |v: f64| format!("{v:.6}");
    for win in &result.windows {
        for m in &win.monthly {
            w.write_record([
                win.start.to_string(),
                m.month.to_string(),
                win.plan.status.clone(),
                opt_str(win.radius_km),
                f(m.target),
                f(m.organic),
                f(m.residual),
                f(m.planned),
                f(m.fulfillment),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
