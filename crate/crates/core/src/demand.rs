//! Demand targets: donation-equivalent conversion, trend-corrected quantile
//! targets, the prior-year carry-forward baseline and residual demand.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::eligibility::ClassKey;
use crate::error::{invalid, Error, Result};
use crate::model::{BloodGroup, PlanningMonth};

/// Whole-blood donations needed per pooled platelet concentrate.
pub const DONATIONS_PER_PLATELET_POOL: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    /// Erythrocyte concentrate (with and without buffy coat).
    CE,
    /// Pooled platelet concentrate.
    CPP,
}

impl FromStr for Component {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CE" => Ok(Component::CE),
            "CPP" => Ok(Component::CPP),
            other => Err(invalid(format!("unknown component {other:?}"))),
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::CE => "CE",
            Component::CPP => "CPP",
        })
    }
}

/// Monthly consumption per blood group and component.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandPanel {
    observations: BTreeMap<(PlanningMonth, BloodGroup, Component), f64>,
}

impl DemandPanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, month: PlanningMonth, group: BloodGroup, component: Component, units: f64) -> Result<()> {
        if !(units >= 0.0 && units.is_finite()) {
            return Err(invalid(format!("negative or non-finite units {units}")));
        }
        if self.observations.insert((month, group, component), units).is_some() {
            return Err(invalid(format!(
                "duplicate demand observation {month} {group} {component}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, month: PlanningMonth, group: BloodGroup, component: Component) -> Option<f64> {
        self.observations.get(&(month, group, component)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(PlanningMonth, BloodGroup, Component), &f64)> {
        self.observations.iter()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Donation-equivalent demand for every (month, group) with at least one
    /// observed component. A missing component counts as zero.
    pub fn donation_equivalents(&self) -> BTreeMap<ClassKey, f64> {
        let mut out = BTreeMap::new();
        for &(m, g, _) in self.observations.keys() {
            out.entry((m, g)).or_insert_with(|| {
                let ce = self.get(m, g, Component::CE).unwrap_or(0.0);
                let cpp = self.get(m, g, Component::CPP).unwrap_or(0.0);
                ce.max(DONATIONS_PER_PLATELET_POOL * cpp)
            });
        }
        out
    }

    /// Multiply every observation by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            observations: self.observations.iter().map(|(k, v)| (*k, v * factor)).collect(),
        }
    }
}

/// `max(ce, 5 * cpp)`.
pub fn donation_equivalent(ce: f64, cpp: f64) -> Result<f64> {
    if !(ce >= 0.0) || !(cpp >= 0.0) {
        return Err(invalid(format!("negative demand (ce={ce}, cpp={cpp})")));
    }
    Ok(ce.max(DONATIONS_PER_PLATELET_POOL * cpp))
}

/// `max(0, target - predicted_organic)`.
pub fn residual_demand(target: f64, predicted_organic: f64) -> f64 {
    (target - predicted_organic).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantileConfig {
    pub alpha: f64,
    pub trend_significance: f64,
    pub min_history_years: usize,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            trend_significance: 0.10,
            min_history_years: 3,
        }
    }
}

impl QuantileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * alpha;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Least-squares line through `(x, y)` with the two-sided p-value of its slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearTrend {
    pub intercept: f64,
    pub slope: f64,
    pub p_value: f64,
}

impl LinearTrend {
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(Error::InsufficientData(format!(
                "trend test needs at least 3 points, got {n}"
            )));
        }
        let nf = n as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
        let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx == 0.0 {
            return Err(Error::DegenerateFit("all x values identical".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let df = nf - 2.0;
        let se = (sse / df / sxx).sqrt();
        let p_value = if slope == 0.0 {
            1.0
        } else if se == 0.0 {
            0.0
        } else {
            let t = (slope / se).abs();
            let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::DegenerateFit(e.to_string()))?;
            2.0 * (1.0 - dist.cdf(t))
        };
        Ok(Self {
            intercept,
            slope,
            p_value,
        })
    }

    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Month-specific quantile target with selective linear trend correction.
///
/// `history` holds one value per year for a fixed (calendar month, group);
/// only years strictly before `target_year` are used.
pub fn quantile_target(history: &[(i32, f64)], target_year: i32, cfg: &QuantileConfig) -> Result<f64> {
    cfg.validate()?;
    let past: Vec<(f64, f64)> = history
        .iter()
        .filter(|(y, _)| *y < target_year)
        .map(|&(y, v)| (y as f64, v))
        .collect();
    if past.len() < cfg.min_history_years.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} years of history before {target_year}, need {}",
            past.len(),
            cfg.min_history_years
        )));
    }
    let values: Vec<f64> = past.iter().map(|p| p.1).collect();
    let trend = if past.len() >= 3 {
        LinearTrend::fit(&past).ok()
    } else {
        None
    };
    let target = match trend {
        Some(t) if t.p_value < cfg.trend_significance => {
            let residuals: Vec<f64> = past.iter().map(|&(x, y)| y - t.at(x)).collect();
            t.at(target_year as f64) + empirical_quantile(&residuals, cfg.alpha)
        }
        _ => empirical_quantile(&values, cfg.alpha),
    };
    Ok(target.max(0.0))
}

/// Prior-year same-month value.
pub fn carry_forward_target(history: &BTreeMap<PlanningMonth, f64>, target: PlanningMonth) -> Result<f64> {
    let prior = target.plus(-12);
    history
        .get(&prior)
        .copied()
        .ok_or_else(|| Error::InsufficientData(format!("no value for {prior}")))
}

/// Per-class target and residual, both in donation-equivalent units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandTarget {
    pub month: PlanningMonth,
    pub blood_group: BloodGroup,
    pub target: f64,
    pub residual: f64,
}

impl DemandTarget {
    pub fn new(month: PlanningMonth, blood_group: BloodGroup, target: f64, residual: f64) -> Result<Self> {
        if !(target >= 0.0 && residual >= 0.0 && residual <= target + 1e-9) {
            return Err(invalid(format!(
                "target {target} / residual {residual} for {month} {blood_group} violate 0 <= residual <= target"
            )));
        }
        Ok(Self {
            month,
            blood_group,
            target,
            residual,
        })
    }
}

/// Targets keyed by demand class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandTargets {
    by_class: BTreeMap<ClassKey, DemandTarget>,
}

impl DemandTargets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: DemandTarget) {
        self.by_class.insert((t.month, t.blood_group), t);
    }

    /// Residual for a class, zero when absent.
    pub fn residual(&self, key: &ClassKey) -> f64 {
        self.by_class.get(key).map_or(0.0, |t| t.residual)
    }

    pub fn get(&self, key: &ClassKey) -> Option<&DemandTarget> {
        self.by_class.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DemandTarget> {
        self.by_class.values()
    }

    /// Classes with strictly positive residual demand.
    pub fn positive(&self) -> impl Iterator<Item = &DemandTarget> {
        self.by_class.values().filter(|t| t.residual > 0.0)
    }

    pub fn total_residual(&self) -> f64 {
        self.by_class.values().map(|t| t.residual).sum()
    }

    pub fn len(&self) -> usize {
        self.by_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_class.is_empty()
    }

    /// Residuals multiplied by `factor`; targets are raised when needed so the
    /// residual never exceeds its target.
    pub fn scaled_residuals(&self, factor: f64) -> Self {
        let by_class = self
            .by_class
            .iter()
            .map(|(k, t)| {
                let residual = t.residual * factor;
                (
                    *k,
                    DemandTarget {
                        target: t.target.max(residual),
                        residual,
                        ..*t
                    },
                )
            })
            .collect();
        Self { by_class }
    }
}

impl FromIterator<DemandTarget> for DemandTargets {
    fn from_iter<I: IntoIterator<Item = DemandTarget>>(iter: I) -> Self {
        let mut t = Self::new();
        for x in iter {
            t.insert(x);
        }
        t
    }
}
