use super::MonthlySeries;
use crate::error::{invalid, Error, Result};

/// Repeat the last observed 12 months.
pub fn seasonal_naive(series: &MonthlySeries, horizon: usize) -> Result<Vec<f64>> {
    let y = series.values();
    let n = y.len();
    if n < 12 {
        return Err(Error::InsufficientData(format!(
            "seasonal naive needs 12 months, got {n}"
        )));
    }
    Ok((0..horizon).map(|h| y[n - 12 + h % 12]).collect())
}

/// Mean of the last `years` observations of the same calendar month.
pub fn same_month_mean(series: &MonthlySeries, horizon: usize, years: usize) -> Result<Vec<f64>> {
    if years == 0 {
        return Err(invalid("same-month mean needs at least one year"));
    }
    let y = series.values();
    let n = y.len();
    (1..=horizon)
        .map(|h| {
            let t = n - 1 + h;
            // Most recent observed index with the same phase as t.
            let back = (t - (n - 1)).div_ceil(12) * 12;
            let vals: Vec<f64> = (0..years)
                .map_while(|j| t.checked_sub(back + 12 * j).map(|k| y[k]))
                .collect();
            if vals.len() < years {
                return Err(Error::InsufficientData(format!(
                    "same-month mean needs {years} years of history"
                )));
            }
            Ok(vals.iter().sum::<f64>() / years as f64)
        })
        .collect()
}
