use nalgebra::{DMatrix, DVector};

use super::MonthlySeries;
use crate::error::{Error, Result};

const N_COEF: usize = 13;

/// Linear trend plus January-baseline calendar-month dummies.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    /// Intercept, slope per month, then dummies for February..December.
    pub coefficients: Vec<f64>,
    start_month0: usize,
    n: usize,
}

fn design_row(t: usize, start_month0: usize) -> [f64; N_COEF] {
    let mut row = [0.0; N_COEF];
    row[0] = 1.0;
    row[1] = t as f64;
    let cal = (start_month0 + t) % 12;
    if cal > 0 {
        row[1 + cal] = 1.0;
    }
    row
}

impl OlsFit {
    pub fn fit(series: &MonthlySeries) -> Result<Self> {
        let y = series.values();
        let n = y.len();
        if n < 24 {
            return Err(Error::InsufficientData(format!(
                "trend-seasonal regression needs 24 months, got {n}"
            )));
        }
        let start_month0 = series.start().month as usize - 1;
        let x = DMatrix::from_fn(n, N_COEF, |t, j| design_row(t, start_month0)[j]);
        let qr = x.qr();
        let r = qr.r();
        let scale = r.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if r.diagonal().iter().any(|d| d.abs() <= 1e-10 * scale) {
            return Err(Error::DegenerateFit("design matrix is rank deficient".into()));
        }
        let qty = qr.q().transpose() * DVector::from_column_slice(y);
        let beta = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::DegenerateFit("triangular solve failed".into()))?;
        Ok(Self {
            coefficients: beta.iter().copied().collect(),
            start_month0,
            n,
        })
    }

    pub fn predict(&self, t: usize) -> f64 {
        design_row(t, self.start_month0)
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        (self.n..self.n + horizon).map(|t| self.predict(t)).collect()
    }
}

pub fn ols_trend_seasonal(series: &MonthlySeries, horizon: usize) -> Result<Vec<f64>> {
    Ok(OlsFit::fit(series)?.forecast(horizon))
}
