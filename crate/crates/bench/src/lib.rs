//! Shared fixtures for the benchmarks.

use donorsched::datagen::{generate, random_instance, GenSpec, Instance, InstanceSpec};
use donorsched::forecast::MonthlySeries;
use donorsched::PlanningMonth;

/// Random window instance with `n_donors` donors around `n_sessions` sessions.
pub fn instance(seed: u64, n_donors: usize, n_sessions: usize) -> Instance {
    random_instance(&InstanceSpec {
        seed,
        n_donors,
        n_sessions,
        extent_km: 6.0,
        ..InstanceSpec::default()
    })
    .expect("valid instance spec")
}

/// Generated registry of the given size, returned whole.
pub fn dataset(n_donors: usize, n_sessions: usize) -> donorsched::datagen::Dataset {
    generate(&GenSpec {
        seed: 1,
        n_donors,
        n_sessions,
        ..GenSpec::default()
    })
    .expect("valid generator spec")
}

/// `years` of monthly values with trend, season and a little deterministic noise.
pub fn seasonal_series(years: usize) -> MonthlySeries {
    let values = (0..12 * years)
        .map(|t| {
            let phase = (t % 12) as f64 / 12.0 * std::f64::consts::TAU;
            200.0 + 0.5 * t as f64 + 30.0 * phase.sin() + ((t * 7919) % 13) as f64
        })
        .collect();
    MonthlySeries::new(PlanningMonth { year: 2010, month: 1 }, values).expect("valid series")
}
