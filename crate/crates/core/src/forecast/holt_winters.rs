use serde::{Deserialize, Serialize};

use super::MonthlySeries;
use crate::error::{invalid, Error, Result};

const PERIOD: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoltWintersParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl HoltWintersParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// The 9 x 9 x 9 search grid over {0.1, ..., 0.9}.
    pub fn grid() -> impl Iterator<Item = HoltWintersParams> {
        let steps = || (1..=9).map(|k| k as f64 / 10.0);
        steps().flat_map(move |a| {
            steps().flat_map(move |b| {
                steps().map(move |g| HoltWintersParams {
                    alpha: a,
                    beta: b,
                    gamma: g,
                })
            })
        })
    }
}

/// Final smoothing state of an additive Holt-Winters run.
#[derive(Clone, Debug, PartialEq)]
pub struct HoltWintersFit {
    pub params: HoltWintersParams,
    pub level: f64,
    pub trend: f64,
    /// Seasonal components indexed by position modulo 12 from the series start.
    pub seasonal: [f64; PERIOD],
    /// Mean absolute one-step-ahead error over the second season onwards.
    pub in_sample_mae: f64,
    n: usize,
}

impl HoltWintersFit {
    pub fn fit(series: &MonthlySeries, params: HoltWintersParams) -> Result<Self> {
        let y = series.values();
        if y.len() < 2 * PERIOD {
            return Err(Error::InsufficientData(format!(
                "holt-winters needs at least {} months, got {}",
                2 * PERIOD,
                y.len()
            )));
        }
        let mean1 = y[..PERIOD].iter().sum::<f64>() / PERIOD as f64;
        let mean2 = y[PERIOD..2 * PERIOD].iter().sum::<f64>() / PERIOD as f64;
        let mut trend = (mean2 - mean1) / PERIOD as f64;
        let mut level = mean1;
        let mut seasonal = [0.0; PERIOD];
        for (k, s) in seasonal.iter_mut().enumerate() {
            *s = y[k] - mean1;
        }

        let HoltWintersParams { alpha, beta, gamma } = params;
        let mut abs_err = 0.0;
        for (t, &obs) in y.iter().enumerate().skip(PERIOD) {
            let k = t % PERIOD;
            let s_prev = seasonal[k];
            abs_err += (obs - (level + trend + s_prev)).abs();
            let prev_level = level;
            level = alpha * (obs - s_prev) + (1.0 - alpha) * (level + trend);
            trend = beta * (level - prev_level) + (1.0 - beta) * trend;
            seasonal[k] = gamma * (obs - level) + (1.0 - gamma) * s_prev;
        }

        Ok(Self {
            params,
            level,
            trend,
            seasonal,
            in_sample_mae: abs_err / (y.len() - PERIOD) as f64,
            n: y.len(),
        })
    }

    /// Fit every grid point and keep the lowest in-sample MAE; the first
    /// point in grid order wins ties.
    pub fn grid_search(series: &MonthlySeries) -> Result<Self> {
        let mut best: Option<Self> = None;
        for p in HoltWintersParams::grid() {
            let fit = Self::fit(series, p)?;
            if best.as_ref().is_none_or(|b| fit.in_sample_mae < b.in_sample_mae) {
                best = Some(fit);
            }
        }
        Ok(best.expect("grid is non-empty"))
    }

    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        (1..=horizon)
            .map(|h| self.level + h as f64 * self.trend + self.seasonal[(self.n - 1 + h) % PERIOD])
            .collect()
    }
}

/// Additive Holt-Winters forecast with fixed smoothing parameters.
pub fn holt_winters_additive(series: &MonthlySeries, horizon: usize, params: HoltWintersParams) -> Result<Vec<f64>> {
    Ok(HoltWintersFit::fit(series, params)?.forecast(horizon))
}
