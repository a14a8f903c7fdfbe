//! Rolling-window planning: demand targets, organic subtraction, residual
//! capacity, the radius sweep, solving and simulated history updates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bilp::{DemandMode, ModelConfig};
use crate::demand::{quantile_target, residual_demand, DemandPanel, DemandTarget, DemandTargets, QuantileConfig};
use crate::eligibility::{build_feasible_pairs, ClassKey, EligibilityConfig, FeasiblePairs};
use crate::error::{invalid, Error, Result};
use crate::exact::{exact_plan, ExactConfig};
use crate::forecast::{
    organic_estimate, BloodShares, CohortShareProvider, ConstantProvider, ForecastMethod, MonthlySeries,
    OrganicProvider,
};
use crate::greedy::greedy_assign;
use crate::model::{Donation, DonorId, PlanningMonth, Registry, SessionId};
use crate::plan::{compute_metrics, validate_plan, InvitationPlan, PlanMetrics, Violation};
use crate::resources::{peak_rss_mb, reset_peak_rss};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Greedy,
    Exact,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Greedy => "greedy",
            SolverKind::Exact => "exact",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "exact" => Ok(Self::Exact),
            other => Err(invalid(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderConfig {
    Constant { probability: f64 },
    CohortShare { lookback_years: usize },
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::CohortShare { lookback_years: 3 }
    }
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn OrganicProvider>> {
        Ok(match *self {
            ProviderConfig::Constant { probability } => Box::new(ConstantProvider::new(probability)?),
            ProviderConfig::CohortShare { lookback_years } => Box::new(CohortShareProvider { lookback_years }),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMethod {
    #[default]
    Quantile,
    /// Same month of the previous year.
    CarryForward,
}

/// Where the coverage factor enters the residual computation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageStage {
    /// `rho * max(0, target - organic)`.
    #[default]
    AfterOrganic,
    /// `max(0, rho * target - organic)`.
    BeforeOrganic,
}

/// How planned invitations turn into history between windows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realization {
    /// Every invited donor attends.
    #[default]
    Simulated,
    /// Each invited donor attends with probability p, seeded.
    Bernoulli,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_months: usize,
    pub target_method: TargetMethod,
    pub quantile: QuantileConfig,
    /// Multiplier on every target, for stress scenarios.
    pub demand_scale: f64,
    /// Demand coverage rho in (0, 1].
    pub coverage: f64,
    pub coverage_stage: CoverageStage,
    /// Radii tried in order in hard mode; soft mode uses the first.
    pub radius_sweep: Vec<f64>,
    pub provider: ProviderConfig,
    /// Donors at or above this organic probability are not invited.
    pub organic_exclusion_threshold: f64,
    pub first_time_method: ForecastMethod,
    pub blood_shares: BloodShares,
    pub solver: SolverKind,
    pub realization: Realization,
    pub seed: u64,
    pub eligibility: EligibilityConfig,
    pub model: ModelConfig,
    pub exact: ExactConfig,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_months: 4,
            target_method: TargetMethod::Quantile,
            quantile: QuantileConfig::default(),
            demand_scale: 1.0,
            coverage: 1.0,
            coverage_stage: CoverageStage::AfterOrganic,
            radius_sweep: vec![3.0, 4.0, 5.0, 6.0],
            provider: ProviderConfig::default(),
            organic_exclusion_threshold: 0.5,
            first_time_method: ForecastMethod::HoltWinters,
            blood_shares: BloodShares::default(),
            solver: SolverKind::Greedy,
            realization: Realization::Simulated,
            seed: 0,
            eligibility: EligibilityConfig::default(),
            model: ModelConfig::default(),
            exact: ExactConfig::default(),
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.window_months) {
            return Err(invalid("window_months must be between 1 and 4"));
        }
        if self.radius_sweep.is_empty()
            || self.radius_sweep[0] <= 0.0
            || self.radius_sweep.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(invalid(
                "radius_sweep must be non-empty, positive and strictly increasing",
            ));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(invalid(format!("coverage {} outside (0, 1]", self.coverage)));
        }
        if !(self.demand_scale > 0.0 && self.demand_scale.is_finite()) {
            return Err(invalid("demand_scale must be positive"));
        }
        if !(self.organic_exclusion_threshold > 0.0 && self.organic_exclusion_threshold <= 1.0) {
            return Err(invalid("organic_exclusion_threshold outside (0, 1]"));
        }
        self.quantile.validate()?;
        self.model.validate()?;
        self.eligibility.validate()
    }

    /// Radii actually tried for a window.
    pub fn radii(&self) -> &[f64] {
        match self.model.demand_mode {
            DemandMode::Hard => &self.radius_sweep,
            DemandMode::Soft => &self.radius_sweep[..1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub start: PlanningMonth,
    pub n_windows: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            start: PlanningMonth { year: 2020, month: 1 },
            n_windows: 3,
        }
    }
}

/// Scenario file: horizon plus every window setting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub horizon: HorizonConfig,
    pub window: WindowConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(format!("scenario config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon.n_windows == 0 {
            return Err(invalid("n_windows must be at least 1"));
        }
        self.window.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusAttempt {
    pub radius_km: f64,
    pub pairs: usize,
    pub status: String,
    pub feasible: bool,
}

/// Per-month totals over blood groups.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonthSummary {
    pub month: PlanningMonth,
    pub target: f64,
    pub organic: f64,
    pub residual: f64,
    pub planned: f64,
    /// Share of positive residual demand met, min-clamped per class.
    pub fulfillment: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowResult {
    pub start: PlanningMonth,
    pub months: Vec<PlanningMonth>,
    pub feasible: bool,
    pub radius_km: Option<f64>,
    pub trail: Vec<RadiusAttempt>,
    pub targets: DemandTargets,
    pub organic: BTreeMap<ClassKey, f64>,
    pub excluded: BTreeSet<DonorId>,
    pub residual_capacity: BTreeMap<SessionId, f64>,
    pub plan: InvitationPlan,
    pub metrics: PlanMetrics,
    pub monthly: Vec<MonthSummary>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioResult {
    pub windows: Vec<WindowResult>,
}

impl ScenarioResult {
    pub fn feasible(&self) -> bool {
        self.windows.iter().all(|w| w.feasible)
    }

    pub fn monthly(&self) -> impl Iterator<Item = &MonthSummary> {
        self.windows.iter().flat_map(|w| w.monthly.iter())
    }

    /// All windows' invitations as one plan.
    pub fn combined_plan(&self) -> InvitationPlan {
        let mut plan = InvitationPlan::empty("combined", "combined", &DemandTargets::new(), &ModelConfig::default());
        for w in &self.windows {
            plan.invitations.extend(w.plan.invitations.iter().cloned());
        }
        plan.invitations
            .sort_by(|a, b| (&a.donor_id, &a.session_id).cmp(&(&b.donor_id, &b.session_id)));
        plan
    }
}

/// Raw donation-equivalent targets for every (month, group) in the panel's
/// groups, computed only from panel data before each month's year.
pub fn window_targets(
    panel: &DemandPanel,
    months: &[PlanningMonth],
    cfg: &WindowConfig,
) -> Result<BTreeMap<ClassKey, f64>> {
    let de = panel.donation_equivalents();
    let groups: BTreeSet<_> = de.keys().map(|k| k.1).collect();
    let mut out = BTreeMap::new();
    for &m in months {
        for &g in &groups {
            let target = match cfg.target_method {
                TargetMethod::Quantile => {
                    let history: Vec<(i32, f64)> = de
                        .iter()
                        .filter(|((pm, pg), _)| *pg == g && pm.month == m.month && pm.year < m.year)
                        .map(|((pm, _), v)| (pm.year, *v))
                        .collect();
                    quantile_target(&history, m.year, &cfg.quantile)?
                }
                TargetMethod::CarryForward => de
                    .get(&(m.plus(-12), g))
                    .copied()
                    .ok_or_else(|| Error::InsufficientData(format!("no demand for {} {g}", m.plus(-12))))?,
            };
            out.insert((m, g), target * cfg.demand_scale);
        }
    }
    Ok(out)
}

/// First-time donor forecast for the window, zero without a series.
pub fn first_time_forecast(
    series: Option<&MonthlySeries>,
    start: PlanningMonth,
    horizon: usize,
    method: ForecastMethod,
) -> Result<Vec<f64>> {
    let Some(series) = series.filter(|s| !s.is_empty()) else {
        return Ok(vec![0.0; horizon]);
    };
    let past = series.before(start);
    if past.is_empty() {
        return Ok(vec![0.0; horizon]);
    }
    // The series may stop before the window; forecast across the gap.
    let gap = past.end().months_until(start).max(0) as usize;
    let values = method.forecast(&past, gap + horizon)?;
    Ok(values[gap..].iter().map(|v| v.max(0.0)).collect())
}

fn residual_targets(
    raw: &BTreeMap<ClassKey, f64>,
    organic: &BTreeMap<ClassKey, f64>,
    cfg: &WindowConfig,
) -> Result<DemandTargets> {
    let mut targets = DemandTargets::new();
    for (&(m, g), &t) in raw {
        let o = organic.get(&(m, g)).copied().unwrap_or(0.0);
        let (target, residual) = match cfg.coverage_stage {
            CoverageStage::AfterOrganic => (t, cfg.coverage * residual_demand(t, o)),
            CoverageStage::BeforeOrganic => {
                let scaled = cfg.coverage * t;
                (scaled, residual_demand(scaled, o))
            }
        };
        targets.insert(DemandTarget::new(m, g, target, residual)?);
    }
    Ok(targets)
}

fn solve(
    registry: &Registry,
    targets: &DemandTargets,
    cfg: &WindowConfig,
    eligibility: &EligibilityConfig,
    excluded: &BTreeSet<DonorId>,
) -> Result<(InvitationPlan, usize, bool)> {
    let mut pairs = build_feasible_pairs(registry, eligibility)?;
    pairs.retain(|p| !excluded.contains(&p.donor_id));
    reset_peak_rss();
    let soft = cfg.model.demand_mode == DemandMode::Soft;
    let (mut plan, feasible) = match cfg.solver {
        SolverKind::Greedy => {
            let plan = greedy_assign(&pairs, targets, registry, &cfg.model, eligibility)?;
            let ok = soft || plan.status == "complete";
            (plan, ok)
        }
        SolverKind::Exact => {
            let (plan, res) = exact_plan(&pairs, targets, registry, &cfg.model, eligibility, &cfg.exact)?;
            (plan, res.objective.is_some())
        }
    };
    plan.peak_memory_mb = peak_rss_mb();
    Ok((plan, pairs.len(), feasible))
}

/// Inputs of a window after the organic side has been estimated.
struct WindowInputs {
    start: PlanningMonth,
    months: Vec<PlanningMonth>,
    raw: BTreeMap<ClassKey, f64>,
    organic_class: BTreeMap<ClassKey, f64>,
    organic_session: BTreeMap<SessionId, f64>,
    excluded: BTreeSet<DonorId>,
}

/// Window sessions with capacity net of organic attendance.
fn residual_registry(registry: &Registry, inputs: &WindowInputs) -> Result<Registry> {
    let sessions: Vec<_> = registry
        .sessions_in(&inputs.months)
        .map(|s| {
            let mut s = s.clone();
            s.capacity = (s.capacity - inputs.organic_session.get(&s.id).copied().unwrap_or(0.0)).max(0.0);
            s
        })
        .collect();
    registry.with_parts(registry.as_of, registry.donors().to_vec(), sessions)
}

fn plan_window(registry: &Registry, inputs: WindowInputs, cfg: &WindowConfig) -> Result<WindowResult> {
    let targets = residual_targets(&inputs.raw, &inputs.organic_class, cfg)?;
    let window_reg = residual_registry(registry, &inputs)?;
    let residual_capacity = window_reg
        .sessions()
        .iter()
        .map(|s| (s.id.clone(), s.capacity))
        .collect();

    let mut trail = Vec::new();
    let mut chosen = None;
    for &radius in cfg.radii() {
        let elig = EligibilityConfig {
            radius_km: radius,
            ..cfg.eligibility
        };
        let (plan, pairs, feasible) = solve(&window_reg, &targets, cfg, &elig, &inputs.excluded)?;
        trail.push(RadiusAttempt {
            radius_km: radius,
            pairs,
            status: plan.status.clone(),
            feasible,
        });
        if feasible {
            chosen = Some((radius, plan));
            break;
        }
    }
    let feasible = chosen.is_some();
    let (radius_km, plan) = match chosen {
        Some((r, p)) => (Some(r), p),
        None => (
            None,
            InvitationPlan::empty(&cfg.solver.to_string(), "infeasible", &targets, &cfg.model),
        ),
    };
    let metrics = compute_metrics(&plan, &window_reg, &targets)?;

    let monthly = inputs
        .months
        .iter()
        .map(|&m| {
            let (mut target, mut organic, mut residual, mut planned, mut met) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for t in targets.iter().filter(|t| t.month == m) {
                let key = (m, t.blood_group);
                let got = plan.fulfilled.get(&key).copied().unwrap_or(0.0);
                target += t.target;
                organic += inputs.organic_class.get(&key).copied().unwrap_or(0.0);
                residual += t.residual;
                planned += got;
                met += got.min(t.residual);
            }
            MonthSummary {
                month: m,
                target,
                organic,
                residual,
                planned,
                fulfillment: if residual > 0.0 { met / residual } else { 1.0 },
            }
        })
        .collect();

    Ok(WindowResult {
        start: inputs.start,
        months: inputs.months,
        feasible,
        radius_km,
        trail,
        targets,
        organic: inputs.organic_class,
        excluded: inputs.excluded,
        residual_capacity,
        plan,
        metrics,
        monthly,
    })
}

/// Record the plan in donor histories and move the registry to `as_of`.
/// Attended invitations become donations dated at the session end, tagged
/// with the session site; every invitation is logged at its planned date.
pub fn apply_plan(
    registry: &Registry,
    plan: &InvitationPlan,
    as_of: NaiveDate,
    realization: Realization,
    seed: u64,
) -> Result<Registry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut donors = registry.donors().to_vec();
    for inv in &plan.invitations {
        let pos = registry
            .donor_position(&inv.donor_id)
            .ok_or_else(|| Error::UnknownReference(format!("donor {}", inv.donor_id)))?;
        let session = registry
            .session(&inv.session_id)
            .ok_or_else(|| Error::UnknownReference(format!("session {}", inv.session_id)))?;
        let donor = &mut donors[pos];
        donor.invitations_sent.push(inv.planned_date);
        let attended = match realization {
            Realization::Simulated => true,
            Realization::Bernoulli => rng.random_bool(donor.attendance_probability.clamp(0.0, 1.0)),
        };
        if attended {
            donor.donations.push(Donation {
                date: session.end_date,
                site_id: Some(session.site_id.clone()),
            });
        }
    }
    for d in &mut donors {
        d.donations.sort_by_key(|x| x.date);
        d.invitations_sent.sort();
    }
    registry.with_parts(as_of, donors, registry.sessions().to_vec())
}

fn window_seed(cfg: &WindowConfig, start: PlanningMonth) -> u64 {
    cfg.seed ^ (start.year as u64 * 12 + start.month as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn window_inputs(
    registry: &Registry,
    panel: &DemandPanel,
    first_time: Option<&MonthlySeries>,
    cfg: &WindowConfig,
    start: PlanningMonth,
) -> Result<WindowInputs> {
    cfg.validate()?;
    if registry.as_of != start.first_day() {
        return Err(invalid(format!(
            "registry date {} is not the window start {}",
            registry.as_of,
            start.first_day()
        )));
    }
    let months = start.range(cfg.window_months);
    let raw = window_targets(panel, &months, cfg)?;
    let ft = first_time_forecast(first_time, start, months.len(), cfg.first_time_method)?;
    let window_reg = registry.with_parts(
        registry.as_of,
        registry.donors().to_vec(),
        registry.sessions_in(&months).cloned().collect(),
    )?;
    let provider = cfg.provider.build()?;
    let est = organic_estimate(provider.as_ref(), &window_reg, &months, &ft, &cfg.blood_shares)?;
    let excluded = est.excluded_donors(cfg.organic_exclusion_threshold);
    Ok(WindowInputs {
        start,
        months,
        raw,
        organic_class: est.by_class,
        organic_session: est.by_session,
        excluded,
    })
}

/// Everything a solver needs for one window at one radius.
#[derive(Clone, Debug)]
pub struct WindowProblem {
    /// Window sessions only, with residual capacities.
    pub registry: Registry,
    pub targets: DemandTargets,
    /// Organic-excluded donors already removed.
    pub pairs: FeasiblePairs,
    pub eligibility: EligibilityConfig,
}

/// Build the window's optimization inputs at `radius_km`, or at the first
/// swept radius.
pub fn window_problem(
    registry: &Registry,
    panel: &DemandPanel,
    first_time: Option<&MonthlySeries>,
    cfg: &WindowConfig,
    start: PlanningMonth,
    radius_km: Option<f64>,
) -> Result<WindowProblem> {
    let inputs = window_inputs(registry, panel, first_time, cfg, start)?;
    let targets = residual_targets(&inputs.raw, &inputs.organic_class, cfg)?;
    let window_reg = residual_registry(registry, &inputs)?;
    let eligibility = EligibilityConfig {
        radius_km: radius_km.unwrap_or(cfg.radius_sweep[0]),
        ..cfg.eligibility
    };
    let mut pairs = build_feasible_pairs(&window_reg, &eligibility)?;
    pairs.retain(|p| !inputs.excluded.contains(&p.donor_id));
    Ok(WindowProblem {
        registry: window_reg,
        targets,
        pairs,
        eligibility,
    })
}

/// Plan one window starting at `start` and return the result with the
/// registry advanced to the next window.
pub fn run_window(
    registry: &Registry,
    panel: &DemandPanel,
    first_time: Option<&MonthlySeries>,
    cfg: &WindowConfig,
    start: PlanningMonth,
) -> Result<(WindowResult, Registry)> {
    let inputs = window_inputs(registry, panel, first_time, cfg, start)?;
    let months = inputs.months.clone();
    let result = plan_window(registry, inputs, cfg)?;
    let next = start.plus(months.len() as i32);
    let updated = apply_plan(
        registry,
        &result.plan,
        next.first_day(),
        cfg.realization,
        window_seed(cfg, start),
    )?;
    Ok((result, updated))
}

/// Sequential windows from `start`; infeasible windows are recorded and the
/// run continues.
pub fn run_horizon(
    registry: &Registry,
    panel: &DemandPanel,
    first_time: Option<&MonthlySeries>,
    cfg: &WindowConfig,
    start: PlanningMonth,
    n_windows: usize,
) -> Result<(ScenarioResult, Registry)> {
    if n_windows == 0 {
        return Err(invalid("n_windows must be at least 1"));
    }
    let mut current = registry.clone();
    let mut result = ScenarioResult::default();
    let mut month = start;
    for _ in 0..n_windows {
        let (w, next) = run_window(&current, panel, first_time, cfg, month)?;
        month = month.plus(w.months.len() as i32);
        result.windows.push(w);
        current = next;
    }
    Ok((result, current))
}

/// Re-check every window's invitations together against the original
/// registry. Demand rows are not checked; the radius is the largest tried.
pub fn revalidate(result: &ScenarioResult, original: &Registry, cfg: &WindowConfig) -> Result<Vec<Violation>> {
    let model = ModelConfig {
        demand_mode: DemandMode::Soft,
        ..cfg.model
    };
    let radius = cfg.radii().last().copied().unwrap_or(cfg.eligibility.radius_km);
    let elig = EligibilityConfig {
        radius_km: radius,
        ..cfg.eligibility
    };
    validate_plan(&result.combined_plan(), original, &DemandTargets::new(), &model, &elig)
}

/// Retrospective complement: observed donations in the horizon are fixed
/// as supply, and only donors without any donation in the horizon are
/// invited, each with attendance probability `p_invite`.
pub fn retrospective_complement(
    registry: &Registry,
    panel: &DemandPanel,
    cfg: &WindowConfig,
    start: PlanningMonth,
    n_windows: usize,
    p_invite: f64,
) -> Result<ScenarioResult> {
    cfg.validate()?;
    if !(p_invite > 0.0 && p_invite <= 1.0) {
        return Err(invalid(format!("attendance probability {p_invite} outside (0, 1]")));
    }
    if n_windows == 0 {
        return Err(invalid("n_windows must be at least 1"));
    }
    let first = start.first_day();
    let last = start.plus((n_windows * cfg.window_months) as i32 - 1).last_day();
    let in_horizon = |d: NaiveDate| d >= first && d <= last;

    let observed: Vec<(&crate::model::Donor, &Donation)> = registry
        .donors()
        .iter()
        .flat_map(|d| d.donations.iter().filter(|x| in_horizon(x.date)).map(move |x| (d, x)))
        .collect();
    let pool: Vec<_> = registry
        .donors()
        .iter()
        .filter(|d| !d.donations.iter().any(|x| in_horizon(x.date)))
        .map(|d| {
            let mut d = d.clone();
            d.attendance_probability = p_invite;
            d.donations.retain(|x| x.date < first);
            d.invitations_sent.retain(|x| *x < first);
            d
        })
        .collect();
    let mut current = registry.with_parts(first, pool, registry.sessions().to_vec())?;

    let mut result = ScenarioResult::default();
    let mut month = start;
    for _ in 0..n_windows {
        let months = month.range(cfg.window_months);
        let raw = window_targets(panel, &months, cfg)?;
        let mut organic_class: BTreeMap<ClassKey, f64> = BTreeMap::new();
        let mut organic_session: BTreeMap<SessionId, f64> = BTreeMap::new();
        for (donor, donation) in &observed {
            let m = PlanningMonth::of(donation.date);
            if !months.contains(&m) {
                continue;
            }
            *organic_class.entry((m, donor.blood_group)).or_insert(0.0) += 1.0;
            if let Some(site) = &donation.site_id {
                if let Some(s) = registry
                    .sessions_in(&months)
                    .find(|s| &s.site_id == site && s.start_date <= donation.date && donation.date <= s.end_date)
                {
                    *organic_session.entry(s.id.clone()).or_insert(0.0) += 1.0;
                }
            }
        }
        let w = plan_window(
            &current,
            WindowInputs {
                start: month,
                months: months.clone(),
                raw,
                organic_class,
                organic_session,
                excluded: BTreeSet::new(),
            },
            cfg,
        )?;
        let next = month.plus(months.len() as i32);
        current = apply_plan(
            &current,
            &w.plan,
            next.first_day(),
            cfg.realization,
            window_seed(cfg, month),
        )?;
        result.windows.push(w);
        month = next;
    }
    Ok(result)
}
