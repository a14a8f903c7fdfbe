use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{ForecastMethod, MonthlySeries};
use crate::error::{Error, Result};
use crate::model::PlanningMonth;

/// Outcome of one method on one held-out year.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BacktestCell {
    pub method: String,
    pub year: i32,
    /// `None` when the method could not produce a forecast.
    pub mae: Option<f64>,
    pub relative_mae: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    abs_errors: Vec<f64>,
    #[serde(skip)]
    actuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub years_evaluated: usize,
    /// Mean absolute error pooled over all evaluated months.
    pub mae: Option<f64>,
    /// Pooled MAE divided by the mean actual value over the same months.
    pub relative_mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BacktestReport {
    pub cells: Vec<BacktestCell>,
    pub summaries: Vec<MethodSummary>,
}

impl BacktestReport {
    pub fn summary(&self, method: ForecastMethod) -> Option<&MethodSummary> {
        let name = method.to_string();
        self.summaries.iter().find(|s| s.method == name)
    }

    pub fn cell(&self, method: ForecastMethod, year: i32) -> Option<&BacktestCell> {
        let name = method.to_string();
        self.cells.iter().find(|c| c.method == name && c.year == year)
    }

    /// Method with the lowest pooled MAE; earlier methods win ties.
    pub fn best(&self) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .filter(|s| s.mae.is_some())
            .fold(None, |best: Option<&MethodSummary>, s| match best {
                Some(b) if b.mae <= s.mae => Some(b),
                _ => Some(s),
            })
    }
}

fn evaluate(series: &MonthlySeries, method: ForecastMethod, year: i32) -> BacktestCell {
    let origin = PlanningMonth { year, month: 1 };
    let actuals: Option<Vec<f64>> = origin.range(12).into_iter().map(|m| series.get(m)).collect();
    let mut cell = BacktestCell {
        method: method.to_string(),
        year,
        mae: None,
        relative_mae: None,
        error: None,
        abs_errors: Vec::new(),
        actuals: Vec::new(),
    };
    let Some(actuals) = actuals else {
        cell.error = Some(format!("no complete actuals for {year}"));
        return cell;
    };
    match method.forecast(&series.before(origin), 12) {
        Ok(fc) => {
            cell.abs_errors = fc.iter().zip(&actuals).map(|(f, a)| (f - a).abs()).collect();
            let mae = cell.abs_errors.iter().sum::<f64>() / 12.0;
            let mean_actual = actuals.iter().sum::<f64>() / 12.0;
            cell.mae = Some(mae);
            cell.relative_mae = (mean_actual > 0.0).then(|| mae / mean_actual);
            cell.actuals = actuals;
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Leave-one-year-out backtest: for each year, fit on everything before
/// January of that year and score the 12 monthly forecasts.
pub fn backtest_loyo(series: &MonthlySeries, methods: &[ForecastMethod], years: &[i32]) -> Result<BacktestReport> {
    if methods.is_empty() || years.is_empty() {
        return Err(Error::InvalidInput("backtest needs methods and years".into()));
    }
    let jobs: Vec<(usize, i32)> = (0..methods.len())
        .flat_map(|m| years.iter().map(move |&y| (m, y)))
        .collect();
    let cells: Vec<BacktestCell> = jobs.par_iter().map(|&(m, y)| evaluate(series, methods[m], y)).collect();

    let mut grouped: BTreeMap<usize, (usize, f64, f64, usize)> = BTreeMap::new();
    for (k, cell) in cells.iter().enumerate() {
        let entry = grouped.entry(k / years.len()).or_default();
        if cell.mae.is_some() {
            entry.0 += 1;
            entry.1 += cell.abs_errors.iter().sum::<f64>();
            entry.2 += cell.actuals.iter().sum::<f64>();
            entry.3 += cell.abs_errors.len();
        }
    }
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let (n_years, err, act, n) = grouped[&m];
            let mae = (n > 0).then(|| err / n as f64);
            MethodSummary {
                method: method.to_string(),
                years_evaluated: n_years,
                mae,
                relative_mae: mae.filter(|_| act > 0.0).map(|e| e / (act / n as f64)),
            }
        })
        .collect();
    Ok(BacktestReport { cells, summaries })
}
