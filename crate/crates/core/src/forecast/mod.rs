//! First-time donor inflow forecasting, the leave-one-year-out backtest and
//! organic supply aggregation.

mod backtest;
mod baselines;
mod holt_winters;
mod ols;
mod organic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::PlanningMonth;

pub use backtest::{backtest_loyo, BacktestCell, BacktestReport, MethodSummary};
pub use baselines::{same_month_mean, seasonal_naive};
pub use holt_winters::{holt_winters_additive, HoltWintersFit, HoltWintersParams};
pub use ols::{ols_trend_seasonal, OlsFit};
pub use organic::{
    allocate_by_blood_shares, organic_estimate, BloodShares, CohortShareProvider, ConstantProvider, OrganicProvider,
    OrganicSupplyEstimate,
};

/// Gap-free monthly series of non-negative values.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlySeries {
    start: PlanningMonth,
    values: Vec<f64>,
}

impl MonthlySeries {
    pub fn new(start: PlanningMonth, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("series value {v} is negative or non-finite")));
        }
        Ok(Self { start, values })
    }

    /// Build from `(year, month, value)` rows that must be strictly
    /// increasing and contiguous.
    pub fn from_rows(rows: &[(i32, u32, f64)]) -> Result<Self> {
        let Some(&(y0, m0, _)) = rows.first() else {
            return Err(Error::InsufficientData("empty series".into()));
        };
        let start = PlanningMonth::new(y0, m0)?;
        for (k, &(y, m, _)) in rows.iter().enumerate() {
            let expected = start.plus(k as i32);
            let got = PlanningMonth::new(y, m)?;
            if got != expected {
                return Err(invalid(format!(
                    "series not contiguous: expected {expected}, found {got}"
                )));
            }
        }
        Self::new(start, rows.iter().map(|r| r.2).collect())
    }

    pub fn start(&self) -> PlanningMonth {
        self.start
    }

    /// First month after the last observation.
    pub fn end(&self) -> PlanningMonth {
        self.start.plus(self.values.len() as i32)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn month_at(&self, k: usize) -> PlanningMonth {
        self.start.plus(k as i32)
    }

    pub fn get(&self, month: PlanningMonth) -> Option<f64> {
        let k = self.start.months_until(month);
        (k >= 0).then(|| self.values.get(k as usize).copied()).flatten()
    }

    /// Observations strictly before `origin`.
    pub fn before(&self, origin: PlanningMonth) -> Self {
        let k = self.start.months_until(origin).clamp(0, self.values.len() as i32) as usize;
        Self {
            start: self.start,
            values: self.values[..k].to_vec(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PlanningMonth, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| (self.start.plus(k as i32), *v))
    }
}

/// Forecasting methods compared in the backtest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ForecastMethod {
    /// Additive Holt-Winters with parameters chosen by grid search.
    HoltWinters,
    SeasonalNaive,
    SameMonthMean {
        years: usize,
    },
    OlsTrendSeasonal,
}

impl ForecastMethod {
    pub const STANDARD_SET: [ForecastMethod; 4] = [
        ForecastMethod::HoltWinters,
        ForecastMethod::SameMonthMean { years: 3 },
        ForecastMethod::SeasonalNaive,
        ForecastMethod::OlsTrendSeasonal,
    ];

    pub fn forecast(&self, series: &MonthlySeries, horizon: usize) -> Result<Vec<f64>> {
        match *self {
            ForecastMethod::HoltWinters => {
                let fit = HoltWintersFit::grid_search(series)?;
                Ok(fit.forecast(horizon))
            }
            ForecastMethod::SeasonalNaive => seasonal_naive(series, horizon),
            ForecastMethod::SameMonthMean { years } => same_month_mean(series, horizon, years),
            ForecastMethod::OlsTrendSeasonal => ols_trend_seasonal(series, horizon),
        }
    }
}

impl fmt::Display for ForecastMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForecastMethod::HoltWinters => f.write_str("holt-winters"),
            ForecastMethod::SeasonalNaive => f.write_str("seasonal-naive"),
            ForecastMethod::SameMonthMean { years } => write!(f, "same-month-mean-{years}y"),
            ForecastMethod::OlsTrendSeasonal => f.write_str("ols-trend-seasonal"),
        }
    }
}

impl From<ForecastMethod> for String {
    fn from(m: ForecastMethod) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for ForecastMethod {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ForecastMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "holt-winters" => Ok(Self::HoltWinters),
            "seasonal-naive" => Ok(Self::SeasonalNaive),
            "ols-trend-seasonal" => Ok(Self::OlsTrendSeasonal),
            other => other
                .strip_prefix("same-month-mean-")
                .and_then(|r| r.strip_suffix('y'))
                .and_then(|n| n.parse().ok())
                .map(|years| Self::SameMonthMean { years })
                .ok_or_else(|| invalid(format!("unknown forecast method {other:?}"))),
        }
    }
}
