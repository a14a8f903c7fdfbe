//! Exact solver: LP-based branch and bound over the binary program.
//!
//! Relaxations are solved with `microlp` as pure linear programs; the
//! search tree, branching rule, primal heuristic and pruning live here.

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, SolveOutcome};
use serde::{Deserialize, Serialize};

use crate::bilp::{build_model, evaluate_objective, BilpModel, ModelConfig, RowTag, Sense, VarKind};
use crate::demand::DemandTargets;
use crate::eligibility::{EligibilityConfig, FeasiblePairs};
use crate::error::{Error, Result};
use crate::greedy::greedy_assign;
use crate::model::{DonorId, Registry, SessionId};
use crate::plan::{Choice, InvitationPlan};

const INT_TOL: f64 = 1e-6;
const CHECK_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExactConfig {
    /// Wall-clock budget in seconds; `None` for no limit.
    pub time_limit_s: Option<f64>,
    pub max_nodes: Option<u64>,
    /// Relative optimality gap at which a node is pruned.
    pub gap_tolerance: f64,
    /// Seed the incumbent with the greedy plan.
    pub warm_start: bool,
    /// Re-order open nodes by bound after this many nodes.
    pub restart_interval: u64,
    /// Open nodes allowed to keep a parent relaxation for warm re-solves.
    pub warm_node_budget: usize,
    /// Memory allowed for those kept relaxations, in MB; tightens the
    /// node budget on large models.
    pub warm_memory_mb: f64,
    /// Run the rounding heuristic every this many nodes.
    pub heuristic_interval: u64,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            time_limit_s: Some(600.0),
            max_nodes: None,
            gap_tolerance: 1e-6,
            warm_start: true,
            restart_interval: 1000,
            warm_node_budget: 4096,
            warm_memory_mb: 1024.0,
            heuristic_interval: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Node limit reached.
    BoundLimit,
    TimeLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::BoundLimit => "bound_limit",
            SolveStatus::TimeLimit => "time_limit",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Values for every model variable when an incumbent exists.
    pub assignment: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Proven lower bound on the optimum.
    pub bound: f64,
    pub nodes: u64,
    pub wall_time: Duration,
}

impl SolveResult {
    pub fn gap(&self) -> Option<f64> {
        self.objective
            .map(|obj| (obj - self.bound).max(0.0) / obj.abs().max(1.0))
    }
}

struct Lp {
    problem: Problem,
    vars: Vec<microlp::Variable>,
}

fn build_lp(model: &BilpModel, fixes: &[(usize, f64)], op_limit: Option<Duration>) -> Lp {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let fixed: HashMap<usize, f64> = fixes.iter().copied().collect();
    let vars = model
        .variables
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let (lo, hi) = match fixed.get(&k) {
                Some(val) => (*val, *val),
                None => (v.lower, v.upper),
            };
            problem.add_var(v.objective, (lo, hi))
        })
        .collect::<Vec<_>>();
    for c in &model.constraints {
        let mut expr = LinearExpr::empty();
        for &(v, coef) in &c.terms {
            expr.add(vars[v], coef);
        }
        let op = match c.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
        };
        problem.add_constraint(expr, op, c.rhs);
    }
    if let Some(limit) = op_limit {
        problem.set_time_limit(limit);
    }
    Lp { problem, vars }
}

enum Relaxed {
    Solved(Solution),
    Infeasible,
    OutOfTime,
}

fn classify(
    outcome: std::result::Result<SolveOutcome, microlp::Error>,
) -> std::result::Result<Relaxed, microlp::Error> {
    match outcome {
        Ok(SolveOutcome::Solution(s)) => Ok(Relaxed::Solved(s)),
        Ok(SolveOutcome::Interrupted(_)) => Ok(Relaxed::OutOfTime),
        Err(microlp::Error::Infeasible) => Ok(Relaxed::Infeasible),
        Err(e) => Err(e),
    }
}

struct Node {
    fixes: Vec<(usize, f64)>,
    /// Parent relaxation bound.
    bound: f64,
    /// Parent relaxation to re-solve from with only the last fix applied.
    warm: Option<Solution>,
}

struct Search<'a> {
    model: &'a BilpModel,
    lp: Lp,
    root: Option<Solution>,
    op_limit: Option<Duration>,
    /// Rows with only non-negative coefficients on binaries, per variable.
    le_rows_of: Vec<Vec<usize>>,
    incumbent: Option<(f64, Vec<f64>)>,
    gap_tolerance: f64,
}

impl Search<'_> {
    fn fresh(&self, fixes: &[(usize, f64)]) -> Result<Relaxed> {
        let lp = build_lp(self.model, fixes, self.op_limit);
        classify(lp.problem.solve()).map_err(|e| Error::Relaxation(e.to_string()))
    }

    /// Solve a node from its parent when one is kept, otherwise by replaying
    /// its fixes on the root. Any solver failure falls back to a fresh build.
    fn relax(&self, node: Node) -> Result<Relaxed> {
        let Node { fixes, warm, .. } = node;
        if let (Some(parent), Some(&(v, val))) = (warm, fixes.last()) {
            return match classify(parent.fix_var(self.lp.vars[v], val)) {
                Ok(r) => Ok(r),
                Err(_) => self.fresh(&fixes),
            };
        }
        let mut current = self.root.clone().expect("root solved first");
        for &(v, val) in &fixes {
            match classify(current.fix_var(self.lp.vars[v], val)) {
                Ok(Relaxed::Solved(s)) => current = s,
                Ok(other) => return Ok(other),
                Err(_) => return self.fresh(&fixes),
            }
        }
        Ok(Relaxed::Solved(current))
    }

    fn values(&self, s: &Solution) -> Vec<f64> {
        self.lp.vars.iter().map(|v| s.var_value_raw(*v)).collect()
    }

    fn offer(&mut self, x: &[bool]) {
        let values = self.model.complete_assignment(x);
        if !self.model.is_feasible(&values, CHECK_TOL) {
            return;
        }
        let obj = evaluate_objective(self.model, &values).expect("length matches");
        if self.incumbent.as_ref().is_none_or(|(best, _)| obj < *best - 1e-9) {
            self.incumbent = Some((obj, values));
        }
    }

    /// Round the relaxation down, then fill demand deficits with the most
    /// attractive assignments that keep every capacity-like row satisfied.
    fn round_and_repair(&mut self, values: &[f64]) {
        let m = self.model;
        let mut x: Vec<bool> = m.assignments.iter().map(|a| values[a.var] >= 1.0 - INT_TOL).collect();
        let mut activity: Vec<f64> = m
            .constraints
            .iter()
            .map(|c| {
                c.terms
                    .iter()
                    .filter(|t| t.0 < x.len())
                    .map(|&(v, coef)| if x[v] { coef } else { 0.0 })
                    .sum()
            })
            .collect();
        for (r, c) in m.constraints.iter().enumerate() {
            if !matches!(c.tag, RowTag::DemandHard | RowTag::DemandSoft) {
                continue;
            }
            let mut cands: Vec<usize> = c.terms.iter().map(|t| t.0).filter(|&v| v < x.len() && !x[v]).collect();
            cands.sort_by(|&a, &b| {
                values[b]
                    .total_cmp(&values[a])
                    .then(m.variables[a].objective.total_cmp(&m.variables[b].objective))
                    .then(a.cmp(&b))
            });
            for v in cands {
                if activity[r] >= c.rhs - CHECK_TOL {
                    break;
                }
                let fits = self.le_rows_of[v].iter().all(|&q| {
                    let row = &m.constraints[q];
                    let coef = row.terms.iter().find(|t| t.0 == v).map_or(0.0, |t| t.1);
                    activity[q] + coef <= row.rhs + CHECK_TOL
                });
                if fits {
                    x[v] = true;
                    for (q, row) in m.constraints.iter().enumerate() {
                        if let Some(t) = row.terms.iter().find(|t| t.0 == v) {
                            activity[q] += t.1;
                        }
                    }
                }
            }
        }
        self.offer(&x);
    }

    fn prunes(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some((inc, _)) => bound >= inc - self.gap_tolerance * inc.abs().max(1.0),
            None => false,
        }
    }
}

/// Pick the branching variable: the most fractional assignment (ties by
/// smallest name), then a multi-invite indicator once all assignments are
/// integral.
fn branch_var(model: &BilpModel, values: &[f64]) -> Option<usize> {
    let pick = |filter: &dyn Fn(&VarKind) -> bool| {
        model
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.binary && filter(&v.kind))
            .filter(|(k, _)| {
                let f = values[*k] - values[*k].floor();
                f > INT_TOL && f < 1.0 - INT_TOL
            })
            .min_by(|(a, va), (b, vb)| {
                let da = (values[*a] - values[*a].floor() - 0.5).abs();
                let db = (values[*b] - values[*b].floor() - 0.5).abs();
                da.total_cmp(&db).then(va.name.cmp(&vb.name))
            })
            .map(|(k, _)| k)
    };
    pick(&|k| matches!(k, VarKind::Assign { .. })).or_else(|| pick(&|k| matches!(k, VarKind::MultiInvite { .. })))
}

/// Branch and bound on a built model. `warm` is an optional 0/1 choice of
/// assignment variables used as the starting incumbent when feasible.
pub fn solve_model(model: &BilpModel, cfg: &ExactConfig, warm: Option<&[bool]>) -> Result<SolveResult> {
    let started = Instant::now();
    let deadline = cfg.time_limit_s.map(|s| started + Duration::from_secs_f64(s.max(0.0)));
    let op_limit = cfg.time_limit_s.map(|s| Duration::from_secs_f64(s.max(0.0)));
    let n_assign = model.assignments.len();
    let warm_budget = warm_budget(model, cfg);

    let mut le_rows_of = vec![Vec::new(); n_assign];
    for (r, c) in model.constraints.iter().enumerate() {
        if c.sense == Sense::Le && c.tag != RowTag::MultiInviteLink {
            for &(v, _) in &c.terms {
                if v < n_assign {
                    le_rows_of[v].push(r);
                }
            }
        }
    }
    let mut search = Search {
        model,
        lp: build_lp(model, &[], op_limit),
        root: None,
        op_limit,
        le_rows_of,
        incumbent: None,
        gap_tolerance: cfg.gap_tolerance,
    };
    if let Some(x) = warm {
        if x.len() == n_assign {
            search.offer(x);
        }
    }

    let finish = |search: Search, status: SolveStatus, bound: f64, nodes: u64| {
        let (objective, assignment) = match search.incumbent {
            Some((o, v)) => (Some(o), Some(v)),
            None => (None, None),
        };
        let status = match (status, &objective) {
            (SolveStatus::Optimal, None) => SolveStatus::Infeasible,
            (s, _) => s,
        };
        let bound = match (status, objective) {
            (SolveStatus::Optimal, Some(o)) => o,
            _ => bound,
        };
        SolveResult {
            status,
            assignment,
            objective,
            bound,
            nodes,
            wall_time: started.elapsed(),
        }
    };

    let root = match classify(search.lp.problem.solve()) {
        Ok(r) => r,
        Err(_) => {
            let lp = build_lp(model, &[], op_limit);
            classify(lp.problem.solve()).map_err(|e| Error::Relaxation(e.to_string()))?
        }
    };
    let root = match root {
        Relaxed::Solved(s) => s,
        Relaxed::Infeasible => return Ok(finish(search, SolveStatus::Optimal, f64::INFINITY, 1)),
        Relaxed::OutOfTime => return Ok(finish(search, SolveStatus::TimeLimit, f64::NEG_INFINITY, 1)),
    };
    let root_bound = root.objective();
    search.root = Some(root.clone());

    let mut open: Vec<Node> = vec![Node {
        fixes: Vec::new(),
        bound: root_bound,
        warm: None,
    }];
    let mut first = Some(root);
    let mut nodes: u64 = 0;
    let mut warm_held = 0usize;

    while let Some(node) = open.pop() {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            open.push(node);
            let bound = open_bound(&open, &search);
            return Ok(finish(search, SolveStatus::TimeLimit, bound, nodes));
        }
        if cfg.max_nodes.is_some_and(|m| nodes >= m) {
            open.push(node);
            let bound = open_bound(&open, &search);
            return Ok(finish(search, SolveStatus::BoundLimit, bound, nodes));
        }
        if search.prunes(node.bound) {
            if node.warm.is_some() {
                warm_held -= 1;
            }
            continue;
        }
        nodes += 1;
        if cfg.restart_interval > 0 && nodes.is_multiple_of(cfg.restart_interval) {
            // Best-bound restart: most promising node on top of the stack.
            open.sort_by(|a, b| b.bound.total_cmp(&a.bound));
        }
        if node.warm.is_some() {
            warm_held -= 1;
        }
        let fixes = node.fixes.clone();
        let node_bound = node.bound;
        let relaxed = match first.take() {
            Some(s) => Relaxed::Solved(s),
            None => search.relax(node)?,
        };
        let sol = match relaxed {
            Relaxed::Solved(s) => s,
            Relaxed::Infeasible => continue,
            Relaxed::OutOfTime => {
                let bound = open_bound(&open, &search).min(node_bound);
                return Ok(finish(search, SolveStatus::TimeLimit, bound, nodes));
            }
        };
        let lb = sol.objective();
        if search.prunes(lb) {
            continue;
        }
        let values = search.values(&sol);
        let Some(v) = branch_var(model, &values) else {
            let x: Vec<bool> = model.assignments.iter().map(|a| values[a.var] > 0.5).collect();
            search.offer(&x);
            continue;
        };
        if cfg.heuristic_interval > 0 && (nodes - 1).is_multiple_of(cfg.heuristic_interval) {
            search.round_and_repair(&values);
            if search.prunes(lb) {
                continue;
            }
        }
        let up_first = values[v] >= 0.5;
        let (later, sooner) = if up_first { (0.0, 1.0) } else { (1.0, 0.0) };
        let mut later_fixes = fixes.clone();
        later_fixes.push((v, later));
        let later_warm = if warm_held < warm_budget {
            warm_held += 1;
            Some(sol.clone())
        } else {
            None
        };
        open.push(Node {
            fixes: later_fixes,
            bound: lb,
            warm: later_warm,
        });
        let mut sooner_fixes = fixes;
        sooner_fixes.push((v, sooner));
        warm_held += 1;
        open.push(Node {
            fixes: sooner_fixes,
            bound: lb,
            warm: Some(sol),
        });
    }
    Ok(finish(search, SolveStatus::Optimal, f64::INFINITY, nodes))
}

/// A kept relaxation carries the constraint matrix twice plus basis
/// factors; 48 bytes per nonzero, variable and row is a rough upper figure.
fn warm_budget(model: &BilpModel, cfg: &ExactConfig) -> usize {
    let nnz: usize = model.constraints.iter().map(|c| c.terms.len()).sum();
    let bytes = 48.0 * (nnz + model.variables.len() + model.constraints.len()) as f64;
    let by_memory = (cfg.warm_memory_mb.max(0.0) * 1e6 / bytes.max(1.0)).floor() as usize;
    cfg.warm_node_budget.min(by_memory)
}

fn open_bound(open: &[Node], search: &Search) -> f64 {
    let open_min = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match &search.incumbent {
        Some((inc, _)) => open_min.min(*inc),
        None => open_min,
    }
}

/// Greedy plan as a 0/1 choice over the model's assignment variables.
pub fn plan_to_choice(model: &BilpModel, plan: &InvitationPlan) -> Vec<bool> {
    let chosen: std::collections::HashSet<(&DonorId, &SessionId)> =
        plan.invitations.iter().map(|i| (&i.donor_id, &i.session_id)).collect();
    model
        .assignments
        .iter()
        .map(|a| chosen.contains(&(&a.donor_id, &a.session_id)))
        .collect()
}

/// Build the model, solve it and turn the result into a plan.
pub fn exact_plan(
    pairs: &FeasiblePairs,
    targets: &DemandTargets,
    registry: &Registry,
    model_cfg: &ModelConfig,
    eligibility: &EligibilityConfig,
    cfg: &ExactConfig,
) -> Result<(InvitationPlan, SolveResult)> {
    let started = Instant::now();
    let model = build_model(pairs, targets, registry, model_cfg, eligibility.min_gap_days)?;
    let warm = if cfg.warm_start {
        let greedy = greedy_assign(pairs, targets, registry, model_cfg, eligibility)?;
        Some(plan_to_choice(&model, &greedy))
    } else {
        None
    };
    let result = solve_model(&model, cfg, warm.as_deref())?;
    let mut plan = match &result.assignment {
        Some(values) => {
            let choices = model
                .assignments
                .iter()
                .filter(|a| values[a.var] > 0.5)
                .map(|a| Choice {
                    donor_id: a.donor_id.clone(),
                    session_id: a.session_id.clone(),
                    distance_km: a.distance_km,
                })
                .collect();
            InvitationPlan::from_choices(
                "exact",
                &result.status.to_string(),
                choices,
                registry,
                targets,
                model_cfg,
            )?
        }
        None => InvitationPlan::empty("exact", &result.status.to_string(), targets, model_cfg),
    };
    plan.wall_time_s = started.elapsed().as_secs_f64();
    Ok((plan, result))
}
