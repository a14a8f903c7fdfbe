//! Acceptance checks. Each criterion prints one PASS or FAIL line; pass
//! criterion numbers as arguments to run a subset, e.g. `-- 1 5 7`.

mod forecasting;
mod oracles;
mod rules;
mod scenarios;
mod solvers;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

pub type Outcome = Result<String, String>;

/// `Err(msg)` unless `cond` holds.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const CRITERIA: [(u32, &str, fn() -> Outcome); 10] = [
    (1, "exact solver matches exhaustive enumeration", solvers::exactness),
    (2, "validator soundness and completeness", solvers::validator),
    (3, "greedy vs exact at desk scale", solvers::desk_scale),
    (4, "donation-equivalent demand grid", rules::demand_grid),
    (5, "temporal rules", rules::temporal),
    (6, "haversine distance", rules::haversine),
    (7, "forecast oracles and backtest", forecasting::oracles),
    (8, "quantile target coverage", forecasting::coverage),
    (9, "retrospective complement", scenarios::retrospective),
    (10, "end-to-end determinism and revalidation", scenarios::determinism),
];

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in CRITERIA {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
