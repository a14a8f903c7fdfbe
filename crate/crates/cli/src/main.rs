//! `donorsched` command line.
//!
//! Exit status: 0 success, 1 error, 2 usage error, 3 an infeasible window in
//! hard demand mode, 4 plan violations found by `validate`.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use donorsched::pipeline::SolverKind;
use donorsched::PlanningMonth;

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_VIOLATIONS: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "donorsched", version, about = "Blood donor invitation planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory holding the input tables.
    #[arg(long)]
    pub data: PathBuf,
    /// Scenario configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        donors: Option<usize>,
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Plan every window of the configured horizon.
    Plan {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        solver: Option<SolverKind>,
        /// Retrospective complement with this attendance probability.
        #[arg(long, value_name = "P")]
        retrospective: Option<f64>,
    },
    /// Solve one window with one solver.
    Solve {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Window start month, YYYY-MM; the horizon start by default.
        #[arg(long)]
        window: Option<PlanningMonth>,
        #[arg(long)]
        solver: Option<SolverKind>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Leave-one-year-out forecast backtest.
    Backtest {
        /// Monthly series file with `month,count` columns.
        #[arg(long)]
        series: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        years: Vec<i32>,
        /// Methods to compare; the standard four by default.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both solvers on identical inputs and tabulate the metrics.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<PlanningMonth>,
        #[arg(long)]
        demand_scale: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Write one window's program in MPS format.
    ExportModel {
        #[command(flatten)]
        data: DataArgs,
        /// Output .mps file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<PlanningMonth>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Check a saved plan against the registry.
    Validate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Registry date; the horizon start by default.
        #[arg(long)]
        as_of: Option<chrono::NaiveDate>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().collect();
    let run = match cli.command {
        Command::Gen {
            out,
            spec,
            seed,
            donors,
            sessions,
        } => commands::gen(&args, &out, spec.as_deref(), seed, donors, sessions),
        Command::Plan {
            data,
            out,
            seed,
            solver,
            retrospective,
        } => commands::plan(&args, &data, &out, seed, solver, retrospective),
        Command::Solve {
            data,
            out,
            window,
            solver,
            radius,
        } => commands::solve(&args, &data, &out, window, solver, radius),
        Command::Backtest {
            series,
            years,
            methods,
            out,
        } => commands::backtest(&args, &series, &years, &methods, &out),
        Command::Compare {
            data,
            out,
            window,
            demand_scale,
            radius,
        } => commands::compare(&args, &data, &out, window, demand_scale, radius),
        Command::ExportModel {
            data,
            out,
            window,
            radius,
        } => commands::export_model(&args, &data, &out, window, radius),
        Command::Validate { data, plan, out, as_of } => commands::validate(&args, &data, &plan, &out, as_of),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
