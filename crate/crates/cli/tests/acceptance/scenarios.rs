//! Whole-pipeline scenarios: the retrospective complement and end-to-end
//! determinism of the command line.

use std::fs;
use std::path::Path;
use std::process::Command;

use donorsched::bilp::DemandMode;
use donorsched::datagen::{generate, GenHorizon, GenSpec, StatusMix};
use donorsched::pipeline::{retrospective_complement, revalidate, run_horizon, HorizonConfig, Realization};
use donorsched::{Donation, ModelConfig, PlanningMonth, ScenarioConfig, WindowConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, fail, Outcome};

const C9_DONORS: usize = 40_000;
const C9_SESSIONS: usize = 120;
/// Share of donors who donated in the horizon on their own.
const C9_OBSERVED_SHARE: f64 = 0.005;
const C9_P: f64 = 0.05;
const C9_TOL: f64 = 1e-9;

const C10_DONORS: usize = 1500;
const C10_SESSIONS: usize = 60;

fn horizon_start() -> PlanningMonth {
    PlanningMonth { year: 2020, month: 1 }
}

fn soft_window(seed: u64) -> WindowConfig {
    WindowConfig {
        window_months: 4,
        radius_sweep: vec![5.0],
        seed,
        model: ModelConfig {
            demand_mode: DemandMode::Soft,
            ..ModelConfig::default()
        },
        ..WindowConfig::default()
    }
}

pub fn retrospective() -> Outcome {
    let spec = GenSpec {
        seed: 9,
        n_donors: C9_DONORS,
        n_sessions: C9_SESSIONS,
        horizon: GenHorizon {
            start: horizon_start(),
            months: 12,
        },
        status_mix: StatusMix {
            active: 0.1,
            lapsing: 0.1,
            inactive: 0.8,
        },
        ..GenSpec::default()
    };
    let data = generate(&spec).map_err(fail)?;

    // Observed horizon donations for a few donors, at session dates that
    // respect the minimum gap after their last donation.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sessions = data.registry.sessions().to_vec();
    let mut observed = 0usize;
    let donors: Vec<_> = data
        .registry
        .donors()
        .iter()
        .cloned()
        .map(|mut d| {
            if rng.random_bool(C9_OBSERVED_SHARE) {
                let earliest = d.last_donation().map(|l| l + chrono::Duration::days(60));
                let options: Vec<_> = sessions
                    .iter()
                    .filter(|s| earliest.is_none_or(|e| s.start_date >= e))
                    .collect();
                if let Some(s) = options.choose(&mut rng) {
                    d.donations.push(Donation {
                        date: s.start_date,
                        site_id: Some(s.site_id.clone()),
                    });
                    observed += 1;
                }
            }
            d
        })
        .collect();
    let horizon_end = horizon_start().plus(11).last_day();
    let registry = data.registry.with_parts(horizon_end, donors, sessions).map_err(fail)?;

    let cfg = soft_window(9);
    let result = retrospective_complement(&registry, &data.demand, &cfg, horizon_start(), 3, C9_P).map_err(fail)?;
    let months: Vec<_> = result.windows.iter().flat_map(|w| &w.monthly).collect();
    ensure(months.len() == 12, || format!("{} months planned", months.len()))?;
    for m in &months {
        ensure(m.organic < m.target, || {
            format!("{}: organic {:.1} covers target {:.1}", m.month, m.organic, m.target)
        })?;
        ensure(m.fulfillment >= 1.0 - C9_TOL, || {
            format!(
                "{}: fulfillment {:.4} (residual {:.1}, planned {:.1})",
                m.month, m.fulfillment, m.residual, m.planned
            )
        })?;
    }
    let invited: usize = result.windows.iter().map(|w| w.plan.len()).sum();
    let organic: f64 = months.iter().map(|m| m.organic).sum();
    let target: f64 = months.iter().map(|m| m.target).sum();
    Ok(format!(
        "12/12 months fulfilled; organic {organic:.0} of target {target:.0} from {observed} observed donors, {invited} invitations at p = {C9_P}"
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_donorsched"))
        .args(args)
        .output()
        .map_err(fail)?;
    ensure(out.status.success(), || {
        format!(
            "donorsched {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn cli_determinism() -> Result<usize, String> {
    let dir = tempfile::tempdir().map_err(fail)?;
    let root = dir.path();
    let data = root.join("data");
    let donors = C10_DONORS.to_string();
    let sessions = C10_SESSIONS.to_string();
    run_cli(&[
        "gen",
        "--out",
        &data.to_string_lossy(),
        "--seed",
        "10",
        "--donors",
        &donors,
        "--sessions",
        &sessions,
    ])?;
    let config = ScenarioConfig {
        horizon: HorizonConfig {
            start: horizon_start(),
            n_windows: 3,
        },
        window: WindowConfig {
            realization: Realization::Bernoulli,
            ..soft_window(0)
        },
    };
    let config_path = root.join("scenario.toml");
    fs::write(&config_path, config.to_toml()).map_err(fail)?;

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        run_cli(&[
            "plan",
            "--data",
            &data.to_string_lossy(),
            "--config",
            &config_path.to_string_lossy(),
            "--seed",
            "42",
            "--out",
            &out.to_string_lossy(),
        ])?;
        outputs.push((read(&out.join("plan.csv"))?, read(&out.join("report.csv"))?));
    }
    ensure(outputs[0].0 == outputs[1].0, || "plan.csv differs between runs".into())?;
    ensure(outputs[0].1 == outputs[1].1, || {
        "report.csv differs between runs".into()
    })?;
    let rows = outputs[0].0.iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
    ensure(rows > 0, || "plan is empty".into())?;
    Ok(rows)
}

fn cross_window() -> Result<(usize, usize), String> {
    let spec = GenSpec {
        seed: 11,
        n_donors: C10_DONORS,
        n_sessions: C10_SESSIONS,
        ..GenSpec::default()
    };
    let data = generate(&spec).map_err(fail)?;
    let cfg = soft_window(11);
    let (result, _) = run_horizon(
        &data.registry,
        &data.demand,
        Some(&data.first_time),
        &cfg,
        horizon_start(),
        3,
    )
    .map_err(fail)?;
    let months: usize = result.windows.iter().map(|w| w.months.len()).sum();
    ensure(months == 12, || format!("{months} months covered"))?;
    let violations = revalidate(&result, &data.registry, &cfg).map_err(fail)?;
    ensure(violations.is_empty(), || {
        format!("{} cross-window violations, first: {}", violations.len(), violations[0])
    })?;
    Ok((result.combined_plan().len(), result.windows.len()))
}

pub fn determinism() -> Outcome {
    let rows = cli_determinism()?;
    let (invitations, windows) = cross_window()?;
    Ok(format!(
        "two seeded plan runs byte-identical ({rows} invitations); {windows} windows, {invitations} invitations revalidate clean"
    ))
}
