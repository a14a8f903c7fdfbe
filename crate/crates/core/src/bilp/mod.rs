//! The binary integer program over feasible pairs, as an explicit model
//! object with an MPS writer and reader.

mod mps;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::demand::DemandTargets;
use crate::eligibility::{annual_headroom, invite_budget, windows_conflict, ClassKey, FeasiblePairs};
use crate::error::{invalid, Error, Result};
use crate::model::{BloodGroup, DonorId, PlanningMonth, Registry, SessionId};

pub use mps::{parse_mps, LinearProgram, ProgramColumn, ProgramRow};

/// Absolute tolerance used when checking rows against a solution.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandMode {
    #[default]
    Hard,
    Soft,
}

impl fmt::Display for DemandMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandMode::Hard => "hard",
            DemandMode::Soft => "soft",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub w_dist: f64,
    pub w_inv: f64,
    pub w_adv: f64,
    pub w_dem: f64,
    pub demand_mode: DemandMode,
    pub invite_cap_enabled: bool,
    pub invite_cap_per_year: u32,
    /// Drop annual-limit rows that can never bind.
    pub prune_redundant: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            w_dist: 1.0,
            w_inv: 1.0,
            w_adv: 10.0,
            w_dem: 1e4,
            demand_mode: DemandMode::Hard,
            invite_cap_enabled: false,
            invite_cap_per_year: 5,
            prune_redundant: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_dist", self.w_dist),
            ("w_inv", self.w_inv),
            ("w_adv", self.w_adv),
            ("w_dem", self.w_dem),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(format!("{name} must be a non-negative number")));
            }
        }
        Ok(())
    }

    pub fn invite_cap(&self) -> Option<u32> {
        self.invite_cap_enabled.then_some(self.invite_cap_per_year)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    Assign { donor: DonorId, session: SessionId },
    MultiInvite { donor: DonorId },
    Slack { month: PlanningMonth, group: BloodGroup },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    pub name: String,
    pub lower: f64,
    /// `f64::INFINITY` for slacks.
    pub upper: f64,
    pub binary: bool,
    pub objective: f64,
}

/// Facts about an assignment variable needed to turn a solution into a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignInfo {
    pub var: usize,
    pub donor_id: DonorId,
    pub session_id: SessionId,
    pub class: ClassKey,
    pub probability: f64,
    pub distance_km: f64,
    pub adverse: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowTag {
    Capacity,
    DemandHard,
    DemandSoft,
    MultiInviteLink,
    GapPair,
    AnnualLimit,
    InviteCap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub tag: RowTag,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[*v]).sum()
    }

    pub fn is_satisfied(&self, values: &[f64], tol: f64) -> bool {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => a <= self.rhs + tol,
            Sense::Ge => a >= self.rhs - tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilpModel {
    pub mode: DemandMode,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub assignments: Vec<AssignInfo>,
}

/// Identifier fragment safe for whitespace-delimited formats.
fn token(s: &str) -> String {
    s.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

fn class_tag(key: &ClassKey) -> String {
    format!("{:04}{:02}_{}", key.0.year, key.0.month, key.1.tag())
}

/// Builds the program for the given pairs and targets.
///
/// Session capacities are read from the registry and must already be
/// residual capacities. High-frequency status and remaining invitation
/// budgets are evaluated at the registry date.
pub fn build_model(
    pairs: &FeasiblePairs,
    targets: &DemandTargets,
    registry: &Registry,
    cfg: &ModelConfig,
    min_gap_days: i64,
) -> Result<BilpModel> {
    cfg.validate()?;
    let as_of = registry.as_of;
    let mut variables = Vec::new();
    let mut assignments = Vec::new();

    // x variables in (donor, session) order.
    for p in pairs.sorted() {
        let donor = registry
            .donor(&p.donor_id)
            .ok_or_else(|| Error::UnknownReference(format!("donor {}", p.donor_id)))?;
        if registry.session(&p.session_id).is_none() {
            return Err(Error::UnknownReference(format!("session {}", p.session_id)));
        }
        let var = variables.len();
        variables.push(Variable {
            kind: VarKind::Assign {
                donor: p.donor_id.clone(),
                session: p.session_id.clone(),
            },
            name: format!("x_{}_{}", token(p.donor_id.as_str()), token(p.session_id.as_str())),
            lower: 0.0,
            upper: 1.0,
            binary: true,
            objective: cfg.w_dist * p.distance_km + if donor.adverse_reaction { cfg.w_adv } else { 0.0 },
        });
        assignments.push(AssignInfo {
            var,
            donor_id: p.donor_id.clone(),
            session_id: p.session_id.clone(),
            class: (p.month, p.blood_group),
            probability: donor.attendance_probability,
            distance_km: p.distance_km,
            adverse: donor.adverse_reaction,
        });
    }

    // Assignment variables grouped per donor, in session order.
    let mut by_donor: BTreeMap<&DonorId, Vec<&AssignInfo>> = BTreeMap::new();
    for a in &assignments {
        by_donor.entry(&a.donor_id).or_default().push(a);
    }

    let mut y_of: HashMap<&DonorId, usize> = HashMap::new();
    for (donor_id, xs) in &by_donor {
        let donor = registry.donor(donor_id).expect("checked above");
        if xs.len() >= 2 && !donor.is_high_frequency(as_of) {
            y_of.insert(donor_id, variables.len());
            variables.push(Variable {
                kind: VarKind::MultiInvite {
                    donor: (*donor_id).clone(),
                },
                name: format!("y_{}", token(donor_id.as_str())),
                lower: 0.0,
                upper: 1.0,
                binary: true,
                objective: cfg.w_inv,
            });
        }
    }

    let demand_classes: Vec<(ClassKey, f64)> = targets
        .positive()
        .map(|t| ((t.month, t.blood_group), t.residual))
        .collect();
    if cfg.demand_mode == DemandMode::Soft {
        let worst_pair = assignments
            .iter()
            .map(|a| variables[a.var].objective + cfg.w_inv)
            .fold(0.0, f64::max);
        if !demand_classes.is_empty() && cfg.w_dem <= worst_pair {
            return Err(Error::ModelConstruction(format!(
                "w_dem = {} does not dominate the largest pair cost {worst_pair}",
                cfg.w_dem
            )));
        }
    }
    let mut s_of: HashMap<ClassKey, usize> = HashMap::new();
    if cfg.demand_mode == DemandMode::Soft {
        for (key, _) in &demand_classes {
            s_of.insert(*key, variables.len());
            variables.push(Variable {
                kind: VarKind::Slack {
                    month: key.0,
                    group: key.1,
                },
                name: format!("s_{}", class_tag(key)),
                lower: 0.0,
                upper: f64::INFINITY,
                binary: false,
                objective: cfg.w_dem,
            });
        }
    }

    let mut constraints = Vec::new();

    // Capacity, one row per session with at least one pair.
    let mut by_session: BTreeMap<&SessionId, Vec<&AssignInfo>> = BTreeMap::new();
    for a in &assignments {
        by_session.entry(&a.session_id).or_default().push(a);
    }
    for (sid, xs) in &by_session {
        let cap = registry.session(sid).expect("checked above").capacity;
        if cap < 0.0 {
            return Err(Error::ModelConstruction(format!(
                "session {sid} has negative residual capacity {cap}"
            )));
        }
        constraints.push(Constraint {
            name: format!("c_cap_{}", token(sid.as_str())),
            tag: RowTag::Capacity,
            terms: xs.iter().map(|a| (a.var, a.probability)).collect(),
            sense: Sense::Le,
            rhs: cap,
        });
    }

    // Demand, one row per class with positive residual.
    let mut by_class: BTreeMap<ClassKey, Vec<&AssignInfo>> = BTreeMap::new();
    for a in &assignments {
        by_class.entry(a.class).or_default().push(a);
    }
    for (key, residual) in &demand_classes {
        let mut terms: Vec<(usize, f64)> = by_class
            .get(key)
            .map(|xs| xs.iter().map(|a| (a.var, a.probability)).collect())
            .unwrap_or_default();
        let tag = match cfg.demand_mode {
            DemandMode::Hard => RowTag::DemandHard,
            DemandMode::Soft => {
                terms.push((s_of[key], 1.0));
                RowTag::DemandSoft
            }
        };
        constraints.push(Constraint {
            name: format!("c_dem_{}", class_tag(key)),
            tag,
            terms,
            sense: Sense::Ge,
            rhs: *residual,
        });
    }

    // Per-donor rows.
    let cap = cfg.invite_cap();
    for (donor_id, xs) in &by_donor {
        let donor = registry.donor(donor_id).expect("checked above");
        let dtok = token(donor_id.as_str());
        if let Some(&y) = y_of.get(donor_id) {
            let mut terms: Vec<(usize, f64)> = xs.iter().map(|a| (a.var, 1.0)).collect();
            terms.push((y, -((xs.len() - 1) as f64)));
            constraints.push(Constraint {
                name: format!("c_lnk_{dtok}"),
                tag: RowTag::MultiInviteLink,
                terms,
                sense: Sense::Le,
                rhs: 1.0,
            });
        }

        let sessions: Vec<_> = xs
            .iter()
            .map(|a| registry.session(&a.session_id).expect("checked above"))
            .collect();
        let mut k = 0;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                if windows_conflict(sessions[i], sessions[j], min_gap_days) {
                    constraints.push(Constraint {
                        name: format!("c_gap_{dtok}_{k}"),
                        tag: RowTag::GapPair,
                        terms: vec![(xs[i].var, 1.0), (xs[j].var, 1.0)],
                        sense: Sense::Le,
                        rhs: 1.0,
                    });
                    k += 1;
                }
            }
        }

        // Rolling annual limit anchored at each distinct session end date.
        let mut anchors: Vec<_> = sessions.iter().map(|s| s.end_date).collect();
        anchors.sort();
        anchors.dedup();
        let mut rows: Vec<Constraint> = Vec::new();
        for t in anchors {
            let vars: Vec<usize> = xs
                .iter()
                .zip(&sessions)
                .filter(|(_, s)| s.end_date <= t && (t - s.end_date).num_days() < 365)
                .map(|(a, _)| a.var)
                .collect();
            let rhs = annual_headroom(donor, t).max(0) as f64;
            if cfg.prune_redundant {
                if vars.len() as f64 <= rhs {
                    continue;
                }
                if let Some(r) = rows
                    .iter_mut()
                    .find(|r| r.terms.iter().map(|t| t.0).eq(vars.iter().copied()))
                {
                    r.rhs = r.rhs.min(rhs);
                    continue;
                }
            }
            rows.push(Constraint {
                name: String::new(),
                tag: RowTag::AnnualLimit,
                terms: vars.into_iter().map(|v| (v, 1.0)).collect(),
                sense: Sense::Le,
                rhs,
            });
        }
        for (k, mut r) in rows.into_iter().enumerate() {
            r.name = format!("c_ann_{dtok}_{k}");
            constraints.push(r);
        }

        if let Some(cap) = cap {
            let budget = invite_budget(donor, as_of, cap) as f64;
            if !cfg.prune_redundant || (xs.len() as f64) > budget {
                constraints.push(Constraint {
                    name: format!("c_inv_{dtok}"),
                    tag: RowTag::InviteCap,
                    terms: xs.iter().map(|a| (a.var, 1.0)).collect(),
                    sense: Sense::Le,
                    rhs: budget,
                });
            }
        }
    }

    let model = BilpModel {
        mode: cfg.demand_mode,
        variables,
        constraints,
        assignments,
    };
    model.check_names()?;
    Ok(model)
}

impl BilpModel {
    fn check_names(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for n in self
            .variables
            .iter()
            .map(|v| &v.name)
            .chain(self.constraints.iter().map(|c| &c.name))
        {
            if !seen.insert(n.as_str()) {
                return Err(Error::ModelConstruction(format!("duplicate name {n}")));
            }
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn rows_with(&self, tag: RowTag) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(move |c| c.tag == tag)
    }

    /// Rows violated by `values`, which must cover every variable.
    pub fn violated_rows(&self, values: &[f64], tol: f64) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_satisfied(values, tol))
            .map(|(k, _)| k)
            .collect()
    }

    /// Feasible including bounds and integrality of binaries.
    pub fn is_feasible(&self, values: &[f64], tol: f64) -> bool {
        values.len() == self.variables.len()
            && self
                .variables
                .iter()
                .zip(values)
                .all(|(v, x)| *x >= v.lower - tol && *x <= v.upper + tol && (!v.binary || (x - x.round()).abs() <= tol))
            && self.violated_rows(values, tol).is_empty()
    }

    /// Complete a 0/1 choice of assignment variables with the smallest
    /// feasible multi-invite indicators and slacks.
    pub fn complete_assignment(&self, x: &[bool]) -> Vec<f64> {
        let mut values = vec![0.0; self.variables.len()];
        for (a, on) in self.assignments.iter().zip(x) {
            if *on {
                values[a.var] = 1.0;
            }
        }
        for c in &self.constraints {
            match c.tag {
                RowTag::MultiInviteLink => {
                    let xs: f64 = c.terms.iter().filter(|t| t.1 > 0.0).map(|t| values[t.0]).sum();
                    if xs > 1.0 {
                        let y = c.terms.iter().find(|t| t.1 < 0.0).expect("link row has y").0;
                        values[y] = 1.0;
                    }
                }
                RowTag::DemandSoft => {
                    let s = self.slack_var(c);
                    let covered: f64 = c.terms.iter().filter(|t| t.0 != s).map(|t| t.1 * values[t.0]).sum();
                    values[s] = (c.rhs - covered).max(0.0);
                }
                _ => {}
            }
        }
        values
    }

    fn slack_var(&self, row: &Constraint) -> usize {
        row.terms
            .iter()
            .map(|t| t.0)
            .find(|v| matches!(self.variables[*v].kind, VarKind::Slack { .. }))
            .expect("soft demand row has a slack")
    }

    pub fn export_mps(&self) -> String {
        mps::write(self)
    }

    /// Column-oriented view shared with the MPS reader.
    pub fn to_linear_program(&self) -> LinearProgram {
        LinearProgram {
            name: "donorsched".into(),
            columns: self
                .variables
                .iter()
                .map(|v| ProgramColumn {
                    name: v.name.clone(),
                    objective: v.objective,
                    lower: v.lower,
                    upper: v.upper,
                    binary: v.binary,
                })
                .collect(),
            rows: self
                .constraints
                .iter()
                .map(|c| ProgramRow {
                    name: c.name.clone(),
                    sense: c.sense,
                    rhs: c.rhs,
                    terms: {
                        let mut t = c.terms.clone();
                        t.sort_by_key(|x| x.0);
                        t
                    },
                })
                .collect(),
        }
    }
}

/// Weighted objective of a full assignment.
pub fn evaluate_objective(model: &BilpModel, values: &[f64]) -> Result<f64> {
    if values.len() != model.variables.len() {
        return Err(invalid(format!(
            "assignment covers {} of {} variables",
            values.len(),
            model.variables.len()
        )));
    }
    Ok(model.variables.iter().zip(values).map(|(v, x)| v.objective * x).sum())
}
