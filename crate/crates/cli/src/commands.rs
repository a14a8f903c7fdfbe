use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use donorsched::bilp::{build_model, DemandMode};
use donorsched::datagen::{generate, GenSpec};
use donorsched::exact::exact_plan;
use donorsched::forecast::{backtest_loyo, ForecastMethod, MonthlySeries};
use donorsched::greedy::greedy_assign;
use donorsched::io::{self, ingest, read_plan, write_dataset, write_plan, write_report, DataPaths, Ingested};
use donorsched::pipeline::{
    retrospective_complement, run_horizon, window_problem, RadiusAttempt, ScenarioConfig, ScenarioResult, SolverKind,
    WindowProblem,
};
use donorsched::plan::{compute_metrics, validate_plan, InvitationPlan, PlanMetrics};
use donorsched::resources::{peak_rss_mb, reset_peak_rss};
use donorsched::{DemandTargets, PlanningMonth};
use serde::Serialize;

use crate::manifest::Manifest;
use crate::{DataArgs, EXIT_INFEASIBLE, EXIT_VIOLATIONS};

const MANIFEST: &str = "manifest.json";

fn load_config(path: Option<&Path>, manifest: &mut Manifest) -> Result<ScenarioConfig> {
    let cfg = match path {
        Some(p) => {
            manifest.input(p)?;
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_toml(&text)?
        }
        None => ScenarioConfig::default(),
    };
    Ok(cfg)
}

fn load_data(data: &Path, as_of: chrono::NaiveDate, manifest: &mut Manifest) -> Result<Ingested> {
    let got = ingest(&DataPaths::in_dir(data), as_of).with_context(|| format!("ingesting {}", data.display()))?;
    manifest.inputs(&got.report.checksums);
    for r in &got.report.rejections {
        log::warn!("rejected {}:{}: {}", r.file, r.line, r.reason);
    }
    for w in &got.report.warnings {
        log::warn!("{w}");
    }
    Ok(got)
}

fn write_json(path: &Path, value: &impl Serialize, manifest: &mut Manifest) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    manifest.output(path)
}

pub fn gen(
    args: &[String],
    out: &Path,
    spec_path: Option<&Path>,
    seed: Option<u64>,
    donors: Option<usize>,
    sessions: Option<usize>,
) -> Result<u8> {
    let mut manifest = Manifest::new("gen", args);
    let mut spec = match spec_path {
        Some(p) => {
            manifest.input(p)?;
            toml::from_str(&fs::read_to_string(p)?).context("generator settings")?
        }
        None => GenSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(n) = donors {
        spec.n_donors = n;
    }
    if let Some(n) = sessions {
        spec.n_sessions = n;
    }
    let data = generate(&spec)?;
    write_dataset(
        out,
        &data.registry,
        &data.demand,
        Some(&data.first_time),
        &data.postal_codes,
    )?;
    for name in [
        io::DONORS,
        io::DONATIONS,
        io::SUSPENSIONS,
        io::INVITATIONS,
        io::SESSIONS,
        io::SITES,
        io::DEMAND_PANEL,
        io::FIRST_TIME,
        io::POSTAL_CODES,
    ] {
        manifest.output(&out.join(name))?;
    }
    manifest.config(&spec)?;
    manifest.write(&out.join(MANIFEST))?;
    println!(
        "generated {} donors, {} sessions in {}",
        data.registry.donors().len(),
        data.registry.sessions().len(),
        out.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct WindowSummary<'a> {
    start: PlanningMonth,
    months: usize,
    feasible: bool,
    status: &'a str,
    radius_km: Option<f64>,
    trail: &'a [RadiusAttempt],
    invitations: usize,
    excluded_donors: usize,
    metrics: PlanMetrics,
    wall_time_s: f64,
}

fn summarize(result: &ScenarioResult) -> Vec<WindowSummary<'_>> {
    result
        .windows
        .iter()
        .map(|w| WindowSummary {
            start: w.start,
            months: w.months.len(),
            feasible: w.feasible,
            status: &w.plan.status,
            radius_km: w.radius_km,
            trail: &w.trail,
            invitations: w.plan.len(),
            excluded_donors: w.excluded.len(),
            metrics: w.metrics,
            wall_time_s: w.plan.wall_time_s,
        })
        .collect()
}

pub fn plan(
    args: &[String],
    data: &DataArgs,
    out: &Path,
    seed: Option<u64>,
    solver: Option<SolverKind>,
    retrospective: Option<f64>,
) -> Result<u8> {
    let mut manifest = Manifest::new("plan", args);
    let mut cfg = load_config(data.config.as_deref(), &mut manifest)?;
    if let Some(s) = seed {
        cfg.window.seed = s;
    }
    if let Some(s) = solver {
        cfg.window.solver = s;
    }
    manifest.config(&cfg)?;
    let start = cfg.horizon.start;
    // The retrospective complement needs the donations observed in the horizon.
    let as_of = match retrospective {
        Some(_) => {
            start
                .plus((cfg.horizon.n_windows * cfg.window.window_months) as i32)
                .first_day()
                - chrono::Duration::days(1)
        }
        None => start.first_day(),
    };
    let input = load_data(&data.data, as_of, &mut manifest)?;
    let result = match retrospective {
        Some(p) => retrospective_complement(
            &input.registry,
            &input.demand,
            &cfg.window,
            start,
            cfg.horizon.n_windows,
            p,
        )?,
        None => {
            run_horizon(
                &input.registry,
                &input.demand,
                input.first_time.as_ref(),
                &cfg.window,
                start,
                cfg.horizon.n_windows,
            )?
            .0
        }
    };

    fs::create_dir_all(out)?;
    let plan_path = out.join(io::PLAN);
    write_plan(&plan_path, &result.combined_plan().invitations)?;
    manifest.output(&plan_path)?;
    let report_path = out.join(io::REPORT);
    write_report(&report_path, &result)?;
    manifest.output(&report_path)?;
    write_json(&out.join("windows.json"), &summarize(&result), &mut manifest)?;
    manifest.write(&out.join(MANIFEST))?;

    for w in &result.windows {
        println!(
            "{}: {} invitations, status {}, radius {}",
            w.start,
            w.plan.len(),
            w.plan.status,
            w.radius_km.map_or_else(|| "-".to_string(), |r| format!("{r} km"))
        );
    }
    Ok(if result.feasible() { 0 } else { EXIT_INFEASIBLE })
}

struct Solved {
    plan: InvitationPlan,
    metrics: PlanMetrics,
    feasible: bool,
    detail: SolveDetail,
}

#[derive(Serialize, Default)]
struct SolveDetail {
    solver: String,
    status: String,
    objective: Option<f64>,
    bound: Option<f64>,
    gap: Option<f64>,
    nodes: Option<u64>,
    pairs: usize,
}

fn run_solver(problem: &WindowProblem, cfg: &ScenarioConfig, solver: SolverKind) -> Result<Solved> {
    let w = &cfg.window;
    reset_peak_rss();
    let (mut plan, feasible, mut detail) = match solver {
        SolverKind::Greedy => {
            let plan = greedy_assign(
                &problem.pairs,
                &problem.targets,
                &problem.registry,
                &w.model,
                &problem.eligibility,
            )?;
            let feasible = w.model.demand_mode == DemandMode::Soft || plan.status == "complete";
            let detail = SolveDetail {
                objective: Some(plan.objective.total()),
                ..Default::default()
            };
            (plan, feasible, detail)
        }
        SolverKind::Exact => {
            let (plan, res) = exact_plan(
                &problem.pairs,
                &problem.targets,
                &problem.registry,
                &w.model,
                &problem.eligibility,
                &w.exact,
            )?;
            let detail = SolveDetail {
                objective: res.objective,
                bound: Some(res.bound),
                gap: res.gap(),
                nodes: Some(res.nodes),
                ..Default::default()
            };
            (plan, res.objective.is_some(), detail)
        }
    };
    plan.peak_memory_mb = peak_rss_mb();
    detail.solver = solver.to_string();
    detail.status = plan.status.clone();
    detail.pairs = problem.pairs.len();
    let metrics = compute_metrics(&plan, &problem.registry, &problem.targets)?;
    Ok(Solved {
        plan,
        metrics,
        feasible,
        detail,
    })
}

fn prepare(
    data: &DataArgs,
    manifest: &mut Manifest,
    window: Option<PlanningMonth>,
    radius: Option<f64>,
    demand_scale: Option<f64>,
    solver: Option<SolverKind>,
) -> Result<(ScenarioConfig, WindowProblem)> {
    let mut cfg = load_config(data.config.as_deref(), manifest)?;
    if let Some(s) = demand_scale {
        cfg.window.demand_scale = s;
    }
    if let Some(s) = solver {
        cfg.window.solver = s;
    }
    cfg.validate()?;
    manifest.config(&cfg)?;
    let start = window.unwrap_or(cfg.horizon.start);
    let input = load_data(&data.data, start.first_day(), manifest)?;
    let problem = window_problem(
        &input.registry,
        &input.demand,
        input.first_time.as_ref(),
        &cfg.window,
        start,
        radius,
    )?;
    Ok((cfg, problem))
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    window: PlanningMonth,
    radius_km: f64,
    detail: &'a SolveDetail,
    metrics: &'a PlanMetrics,
    wall_time_s: f64,
}

pub fn solve(
    args: &[String],
    data: &DataArgs,
    out: &Path,
    window: Option<PlanningMonth>,
    solver: Option<SolverKind>,
    radius: Option<f64>,
) -> Result<u8> {
    let mut manifest = Manifest::new("solve", args);
    let (cfg, problem) = prepare(data, &mut manifest, window, radius, None, solver)?;
    let solved = run_solver(&problem, &cfg, cfg.window.solver)?;
    fs::create_dir_all(out)?;
    let plan_path = out.join(io::PLAN);
    write_plan(&plan_path, &solved.plan.invitations)?;
    manifest.output(&plan_path)?;
    let summary = SolveOutput {
        window: window.unwrap_or(cfg.horizon.start),
        radius_km: problem.eligibility.radius_km,
        detail: &solved.detail,
        metrics: &solved.metrics,
        wall_time_s: solved.plan.wall_time_s,
    };
    write_json(&out.join("solve.json"), &summary, &mut manifest)?;
    manifest.write(&out.join(MANIFEST))?;
    println!(
        "{}: {} invitations, status {}, fulfillment {:.4}",
        solved.detail.solver,
        solved.plan.len(),
        solved.plan.status,
        solved.metrics.fulfillment_rate
    );
    Ok(if solved.feasible { 0 } else { EXIT_INFEASIBLE })
}

pub fn compare(
    args: &[String],
    data: &DataArgs,
    out: &Path,
    window: Option<PlanningMonth>,
    demand_scale: Option<f64>,
    radius: Option<f64>,
) -> Result<u8> {
    let mut manifest = Manifest::new("compare", args);
    let (cfg, problem) = prepare(data, &mut manifest, window, radius, demand_scale, None)?;
    let runs = [
        run_solver(&problem, &cfg, SolverKind::Greedy)?,
        run_solver(&problem, &cfg, SolverKind::Exact)?,
    ];
    fs::create_dir_all(out)?;
    for (run, name) in runs.iter().zip(["plan_greedy.csv", "plan_exact.csv"]) {
        let p = out.join(name);
        write_plan(&p, &run.plan.invitations)?;
        manifest.output(&p)?;
    }

    let table_path = out.join("compare.csv");
    let mut w = csv::Writer::from_path(&table_path)?;
    w.write_record(["metric", "greedy", "exact"])?;
    let rows: [(&str, fn(&PlanMetrics) -> String); 6] = [
        ("fulfillment_rate", |m| format!("{:.6}", m.fulfillment_rate)),
        ("adverse_invited", |m| m.adverse_invited.to_string()),
        ("avg_distance_km", |m| format!("{:.6}", m.avg_distance_km)),
        ("avg_invites_per_non_hf", |m| format!("{:.6}", m.avg_invites_per_non_hf)),
        ("runtime_s", |m| format!("{:.6}", m.runtime_s)),
        ("peak_memory_mb", |m| {
            m.peak_memory_mb.map_or_else(String::new, |v| format!("{v:.1}"))
        }),
    ];
    for (name, f) in rows {
        w.write_record([name.to_string(), f(&runs[0].metrics), f(&runs[1].metrics)])?;
    }
    w.flush()?;
    drop(w);
    manifest.output(&table_path)?;
    let details: Vec<&SolveDetail> = runs.iter().map(|r| &r.detail).collect();
    write_json(&out.join("compare.json"), &details, &mut manifest)?;
    manifest.write(&out.join(MANIFEST))?;

    print!("{}", fs::read_to_string(&table_path)?);
    Ok(if runs.iter().all(|r| r.feasible) {
        0
    } else {
        EXIT_INFEASIBLE
    })
}

pub fn export_model(
    args: &[String],
    data: &DataArgs,
    out: &Path,
    window: Option<PlanningMonth>,
    radius: Option<f64>,
) -> Result<u8> {
    let mut manifest = Manifest::new("export-model", args);
    let (cfg, problem) = prepare(data, &mut manifest, window, radius, None, None)?;
    let model = build_model(
        &problem.pairs,
        &problem.targets,
        &problem.registry,
        &cfg.window.model,
        problem.eligibility.min_gap_days,
    )?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, model.export_mps())?;
    manifest.output(out)?;
    manifest.write(&out.with_extension("manifest.json"))?;
    println!(
        "{} variables, {} constraints written to {}",
        model.variables.len(),
        model.constraints.len(),
        out.display()
    );
    Ok(0)
}

pub fn validate(
    args: &[String],
    data: &DataArgs,
    plan_path: &Path,
    out: &Path,
    as_of: Option<chrono::NaiveDate>,
) -> Result<u8> {
    let mut manifest = Manifest::new("validate", args);
    let cfg = load_config(data.config.as_deref(), &mut manifest)?;
    manifest.config(&cfg)?;
    let input = load_data(
        &data.data,
        as_of.unwrap_or(cfg.horizon.start.first_day()),
        &mut manifest,
    )?;
    manifest.input(plan_path)?;
    let plan = read_plan(plan_path)?;

    // Demand is not re-checked; eligibility uses the widest swept radius.
    let mut model = cfg.window.model;
    model.demand_mode = DemandMode::Soft;
    let mut eligibility = cfg.window.eligibility;
    eligibility.radius_km = *cfg.window.radius_sweep.last().expect("validated non-empty");
    let violations = validate_plan(&plan, &input.registry, &DemandTargets::new(), &model, &eligibility)?;

    fs::create_dir_all(out)?;
    let path = out.join("violations.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["family", "subject", "amount", "detail"])?;
    for v in &violations {
        w.write_record([
            v.family.to_string(),
            v.subject.clone(),
            v.amount.to_string(),
            v.detail.clone(),
        ])?;
    }
    w.flush()?;
    drop(w);
    manifest.output(&path)?;
    manifest.write(&out.join(MANIFEST))?;

    for v in &violations {
        println!("{v}");
    }
    println!("{} invitations checked, {} violations", plan.len(), violations.len());
    Ok(if violations.is_empty() { 0 } else { EXIT_VIOLATIONS })
}

fn read_series(path: &Path) -> Result<MonthlySeries> {
    let mut rows = Vec::new();
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    for rec in reader.deserialize() {
        let (month, count): (PlanningMonth, f64) = rec?;
        rows.push((month.year, month.month, count));
    }
    Ok(MonthlySeries::from_rows(&rows)?)
}

pub fn backtest(args: &[String], series: &Path, years: &[i32], methods: &[String], out: &Path) -> Result<u8> {
    let mut manifest = Manifest::new("backtest", args);
    manifest.input(series)?;
    let methods: Vec<ForecastMethod> = if methods.is_empty() {
        ForecastMethod::STANDARD_SET.to_vec()
    } else {
        methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?
    };
    if years.is_empty() {
        bail!("no years to evaluate");
    }
    let s = read_series(series)?;
    let report = backtest_loyo(&s, &methods, years)?;

    fs::create_dir_all(out)?;
    let path = out.join("backtest.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["method", "year", "mae", "relative_mae", "error"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    for c in &report.cells {
        w.write_record([
            c.method.clone(),
            c.year.to_string(),
            opt(c.mae),
            opt(c.relative_mae),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    drop(w);
    manifest.output(&path)?;
    write_json(&out.join("backtest.json"), &report.summaries, &mut manifest)?;
    manifest.write(&out.join(MANIFEST))?;

    for s in &report.summaries {
        println!(
            "{:<22} years {:>2}  mae {}",
            s.method,
            s.years_evaluated,
            s.mae.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
        );
    }
    Ok(0)
}
