//! Forecast methods against reference recursions, the backtest harness and
//! quantile target coverage.

use donorsched::demand::{quantile_target, QuantileConfig};
use donorsched::forecast::{
    backtest_loyo, holt_winters_additive, ols_trend_seasonal, same_month_mean, seasonal_naive, HoltWintersFit,
    HoltWintersParams,
};
use donorsched::{ForecastMethod, MonthlySeries, PlanningMonth};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, fail, Outcome};

const C7_TOL: f64 = 1e-8;
const C7_SERIES: usize = 20;
const C8_PANELS: usize = 1000;
const C8_YEARS: usize = 12;
const C8_ALPHAS: [f64; 3] = [0.5, 0.8, 0.9];
const C8_TOL: f64 = 0.10;

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= C7_TOL * x.abs().max(y.abs()).max(1.0))
}

/// Level, trend and seasonal components kept for every time step.
struct HwReference {
    level: Vec<f64>,
    trend: Vec<f64>,
    season: Vec<f64>,
    mae: f64,
}

fn hw_reference(y: &[f64], a: f64, b: f64, g: f64) -> HwReference {
    let n = y.len();
    let first = y[..12].iter().sum::<f64>() / 12.0;
    let second = y[12..24].iter().sum::<f64>() / 12.0;
    let mut level = vec![0.0; n];
    let mut trend = vec![0.0; n];
    let mut season = vec![0.0; n];
    level[11] = first;
    trend[11] = (second - first) / 12.0;
    for k in 0..12 {
        season[k] = y[k] - first;
    }
    let mut err = 0.0;
    for t in 12..n {
        err += (y[t] - (level[t - 1] + trend[t - 1] + season[t - 12])).abs();
        level[t] = a * (y[t] - season[t - 12]) + (1.0 - a) * (level[t - 1] + trend[t - 1]);
        trend[t] = b * (level[t] - level[t - 1]) + (1.0 - b) * trend[t - 1];
        season[t] = g * (y[t] - level[t]) + (1.0 - g) * season[t - 12];
    }
    HwReference {
        level,
        trend,
        season,
        mae: err / (n - 12) as f64,
    }
}

fn hw_reference_forecast(y: &[f64], a: f64, b: f64, g: f64, horizon: usize) -> (Vec<f64>, f64) {
    let r = hw_reference(y, a, b, g);
    let n = y.len();
    let fc = (1..=horizon)
        .map(|h| {
            let back = h.div_ceil(12) * 12;
            r.level[n - 1] + h as f64 * r.trend[n - 1] + r.season[n - 1 + h - back]
        })
        .collect();
    (fc, r.mae)
}

fn hw_reference_grid(y: &[f64], horizon: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for a in 1..=9 {
        for b in 1..=9 {
            for g in 1..=9 {
                let (fc, mae) = hw_reference_forecast(y, a as f64 / 10.0, b as f64 / 10.0, g as f64 / 10.0, horizon);
                if best.as_ref().is_none_or(|(m, _)| mae < *m) {
                    best = Some((mae, fc));
                }
            }
        }
    }
    best.expect("non-empty grid").1
}

fn naive_reference(y: &[f64], horizon: usize) -> Vec<f64> {
    (1..=horizon).map(|h| y[y.len() - 12 + (h - 1) % 12]).collect()
}

fn same_month_reference(y: &[f64], horizon: usize, years: usize) -> Vec<f64> {
    let n = y.len();
    (1..=horizon)
        .map(|h| {
            let latest = n - 1 + h - h.div_ceil(12) * 12;
            (0..years).map(|j| y[latest - 12 * j]).sum::<f64>() / years as f64
        })
        .collect()
}

/// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
fn ols_reference(y: &[f64], start_month: u32, horizon: usize) -> Vec<f64> {
    const P: usize = 13;
    let row = |t: usize| {
        let mut r = [0.0; P];
        r[0] = 1.0;
        r[1] = t as f64;
        let cal = (start_month as usize - 1 + t) % 12;
        if cal != 0 {
            r[1 + cal] = 1.0;
        }
        r
    };
    let mut m = vec![[0.0; P + 1]; P];
    for (t, &v) in y.iter().enumerate() {
        let r = row(t);
        for i in 0..P {
            for j in 0..P {
                m[i][j] += r[i] * r[j];
            }
            m[i][P] += r[i] * v;
        }
    }
    for c in 0..P {
        let piv = (c..P)
            .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
            .expect("rows");
        m.swap(c, piv);
        let d = m[c][c];
        for j in 0..=P {
            m[c][j] /= d;
        }
        for i in 0..P {
            if i != c {
                let f = m[i][c];
                for j in 0..=P {
                    m[i][j] -= f * m[c][j];
                }
            }
        }
    }
    let beta: Vec<f64> = m.iter().map(|r| r[P]).collect();
    (y.len()..y.len() + horizon)
        .map(|t| row(t).iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect()
}

fn random_series(rng: &mut ChaCha8Rng, months: usize) -> Vec<f64> {
    let base = rng.random_range(50.0..500.0);
    let slope = rng.random_range(-1.0..2.0);
    let amp = rng.random_range(0.0..60.0);
    (0..months)
        .map(|t| {
            let phase = (t % 12) as f64 / 12.0 * std::f64::consts::TAU;
            base + slope * t as f64 + amp * phase.sin() + rng.random_range(-20.0..20.0)
        })
        .collect()
}

fn method_oracles() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checks = 0;
    for k in 0..C7_SERIES {
        let start = PlanningMonth::new(2010 + (k % 3) as i32, 1 + (k % 12) as u32).map_err(fail)?;
        let months = 24 + rng.random_range(0..60);
        let y = random_series(&mut rng, months);
        let series = MonthlySeries::new(start, y.clone()).map_err(fail)?;
        let h = 1 + rng.random_range(0..24);

        let (a, b, g) = (
            rng.random_range(0.0..=1.0),
            rng.random_range(0.0..=1.0),
            rng.random_range(0.0..=1.0),
        );
        let got = holt_winters_additive(&series, h, HoltWintersParams::new(a, b, g).map_err(fail)?).map_err(fail)?;
        let (want, mae) = hw_reference_forecast(&y, a, b, g, h);
        ensure(close(&got, &want), || {
            format!("holt-winters ({a:.3},{b:.3},{g:.3}) on series {k}")
        })?;
        let fit = HoltWintersFit::fit(&series, HoltWintersParams::new(a, b, g).map_err(fail)?).map_err(fail)?;
        ensure(close(&[fit.in_sample_mae], &[mae]), || {
            format!("holt-winters in-sample error, series {k}")
        })?;
        let got = ForecastMethod::HoltWinters.forecast(&series, h).map_err(fail)?;
        ensure(close(&got, &hw_reference_grid(&y, h)), || {
            format!("holt-winters grid search, series {k}")
        })?;

        let got = seasonal_naive(&series, h).map_err(fail)?;
        ensure(close(&got, &naive_reference(&y, h)), || {
            format!("seasonal naive, series {k}")
        })?;
        let years = 1 + months / 12;
        for yrs in 1..years {
            let got = same_month_mean(&series, h, yrs).map_err(fail)?;
            ensure(close(&got, &same_month_reference(&y, h, yrs)), || {
                format!("same-month mean {yrs}y, series {k}")
            })?;
        }
        let got = ols_trend_seasonal(&series, h).map_err(fail)?;
        ensure(close(&got, &ols_reference(&y, start.month, h)), || {
            format!("ols, series {k}")
        })?;
        checks += 4 + years - 1;
    }
    Ok(checks)
}

/// Toy panel: y = 100 + 10 * (year - 2016) + month index, with a +6 bump in
/// June 2018, scored on 2018 and 2019.
fn toy_backtest() -> Result<(), String> {
    let start = PlanningMonth::new(2016, 1).map_err(fail)?;
    let mut y: Vec<f64> = (0..48)
        .map(|t| 100.0 + 10.0 * (t / 12) as f64 + (t % 12) as f64)
        .collect();
    y[24 + 5] += 6.0;
    let series = MonthlySeries::new(start, y).map_err(fail)?;
    let methods = [
        ForecastMethod::SeasonalNaive,
        ForecastMethod::SameMonthMean { years: 2 },
        ForecastMethod::SameMonthMean { years: 3 },
    ];
    let report = backtest_loyo(&series, &methods, &[2018, 2019]).map_err(fail)?;
    let cell = |m: ForecastMethod, year: i32| report.cell(m, year).and_then(|c| c.mae);
    let pooled = |m: ForecastMethod| report.summary(m).map(|s| (s.mae, s.years_evaluated));
    let expected_cells = [
        (methods[0], 2018, Some(126.0 / 12.0)),
        (methods[0], 2019, Some(114.0 / 12.0)),
        (methods[1], 2018, Some(186.0 / 12.0)),
        (methods[1], 2019, Some(177.0 / 12.0)),
        (methods[2], 2018, None),
        (methods[2], 2019, Some(238.0 / 12.0)),
    ];
    for (m, year, want) in expected_cells {
        let got = cell(m, year);
        ensure(got == want, || format!("toy backtest {m} {year}: {got:?} != {want:?}"))?;
    }
    let expected_pooled = [
        (methods[0], Some(240.0 / 24.0), 2),
        (methods[1], Some(363.0 / 24.0), 2),
        (methods[2], Some(238.0 / 12.0), 1),
    ];
    for (m, mae, n) in expected_pooled {
        let got = pooled(m);
        ensure(got == Some((mae, n)), || {
            format!("toy pooled {m}: {got:?} != {:?}", (mae, n))
        })?;
    }
    Ok(())
}

/// Values after the held-out year are replaced by huge sentinels; every cell
/// must still equal the error of a forecast built from the pre-origin months.
fn sentinel() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let start = PlanningMonth::new(2012, 1).map_err(fail)?;
    let clean = random_series(&mut rng, 9 * 12);
    let methods = [
        ForecastMethod::HoltWinters,
        ForecastMethod::SeasonalNaive,
        ForecastMethod::SameMonthMean { years: 3 },
        ForecastMethod::OlsTrendSeasonal,
    ];
    for year in [2017, 2018, 2019] {
        let origin = (year - 2012) as usize * 12;
        let mut tampered = clean.clone();
        for (k, v) in tampered.iter_mut().enumerate().skip(origin + 12) {
            *v = 1e6 + k as f64;
        }
        let series = MonthlySeries::new(start, tampered).map_err(fail)?;
        let report = backtest_loyo(&series, &methods, &[year]).map_err(fail)?;
        let past = &clean[..origin];
        let actual = &clean[origin..origin + 12];
        let references = [
            hw_reference_grid(past, 12),
            naive_reference(past, 12),
            same_month_reference(past, 12, 3),
            ols_reference(past, start.month, 12),
        ];
        for (m, fc) in methods.iter().zip(&references) {
            let want = fc.iter().zip(actual).map(|(f, a)| (f - a).abs()).sum::<f64>() / 12.0;
            let got = report.cell(*m, year).and_then(|c| c.mae);
            ensure(got.is_some_and(|g| close(&[g], &[want])), || {
                format!("sentinel {m} {year}: {got:?} vs {want}")
            })?;
        }
    }
    Ok(())
}

pub fn oracles() -> Outcome {
    let checks = method_oracles()?;
    toy_backtest()?;
    sentinel()?;
    Ok(format!(
        "{checks} method checks within {C7_TOL:e}, toy backtest exact, no look-ahead"
    ))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut covered = [0usize; C8_ALPHAS.len()];
    let mut total = 0usize;
    for _ in 0..C8_PANELS {
        // One stationary yearly series per calendar month.
        for _month in 0..12 {
            let values: Vec<(i32, f64)> = (0..=C8_YEARS as i32)
                .map(|k| (2008 + k, 100.0 + 15.0 * standard_normal(&mut rng)))
                .collect();
            let (history, actual) = values.split_at(C8_YEARS);
            let (target_year, actual) = actual[0];
            for (i, &alpha) in C8_ALPHAS.iter().enumerate() {
                let cfg = QuantileConfig {
                    alpha,
                    ..QuantileConfig::default()
                };
                let q = quantile_target(history, target_year, &cfg).map_err(fail)?;
                covered[i] += usize::from(actual <= q);
            }
            total += 1;
        }
    }
    let rates: Vec<f64> = covered.iter().map(|&c| c as f64 / total as f64).collect();
    let detail = C8_ALPHAS
        .iter()
        .zip(&rates)
        .map(|(a, r)| format!("alpha {a}: {r:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    let ok = C8_ALPHAS.iter().zip(&rates).all(|(a, r)| (r - a).abs() <= C8_TOL);
    ensure(ok, || format!("{detail} (tolerance {C8_TOL})"))?;
    Ok(format!("{total} series: {detail}"))
}
