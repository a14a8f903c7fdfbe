//! MPS text format. Fields are whitespace separated (free MPS) because the
//! descriptive variable names do not fit the fixed 8-column layout; the
//! section structure follows the fixed format.

use std::collections::HashMap;
use std::fmt::Write;

use super::{BilpModel, Sense};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ProgramColumn {
    pub name: String,
    pub objective: f64,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProgramRow {
    pub name: String,
    pub sense: Sense,
    pub rhs: f64,
    /// Sorted by column index.
    pub terms: Vec<(usize, f64)>,
}

/// Solver-neutral minimisation program.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub name: String,
    pub columns: Vec<ProgramColumn>,
    pub rows: Vec<ProgramRow>,
}

const OBJ: &str = "OBJ";

pub(super) fn write(model: &BilpModel) -> String {
    let mut out = String::new();
    let lp = model.to_linear_program();
    let _ = writeln!(out, "NAME          {}", lp.name);
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJ}");
    for r in &lp.rows {
        let s = match r.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
        };
        let _ = writeln!(out, " {s}  {}", r.name);
    }

    let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.columns.len()];
    for (k, r) in lp.rows.iter().enumerate() {
        for &(c, v) in &r.terms {
            entries[c].push((k, v));
        }
    }
    out.push_str("COLUMNS\n");
    for (col, rows) in lp.columns.iter().zip(&entries) {
        let _ = writeln!(out, "    {}  {OBJ}  {}", col.name, col.objective);
        for (k, v) in rows {
            let _ = writeln!(out, "    {}  {}  {}", col.name, lp.rows[*k].name, v);
        }
    }
    out.push_str("RHS\n");
    for r in &lp.rows {
        let _ = writeln!(out, "    RHS  {}  {}", r.name, r.rhs);
    }
    out.push_str("BOUNDS\n");
    for c in &lp.columns {
        if c.binary {
            let _ = writeln!(out, " BV BND  {}", c.name);
            continue;
        }
        if c.lower != 0.0 {
            let _ = writeln!(out, " LO BND  {}  {}", c.name, c.lower);
        }
        if c.upper.is_finite() {
            let _ = writeln!(out, " UP BND  {}  {}", c.name, c.upper);
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
    End,
}

/// Parse the subset of MPS produced by the writer: N/L/G rows, RHS and
/// BV/LO/UP bounds, one entry per COLUMNS or RHS line.
pub fn parse_mps(text: &str) -> Result<LinearProgram> {
    let err = |line: usize, message: String| Error::Parse {
        file: "<mps>".into(),
        line: line as u64,
        message,
    };
    let num = |line: usize, s: &str| s.parse::<f64>().map_err(|_| err(line, format!("bad number {s:?}")));

    let mut lp = LinearProgram {
        name: String::new(),
        columns: Vec::new(),
        rows: Vec::new(),
    };
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut obj_row: Option<String> = None;
    let mut section = Section::None;

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(char::is_whitespace) {
            section = match fields[0] {
                "NAME" => {
                    lp.name = fields.get(1).copied().unwrap_or("").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                other => return Err(err(line, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::Rows => {
                let [kind, name] = fields[..] else {
                    return Err(err(line, "row line needs 2 fields".into()));
                };
                let sense = match kind {
                    "N" => {
                        obj_row = Some(name.to_string());
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    other => return Err(err(line, format!("unsupported row type {other}"))),
                };
                if row_index.insert(name.to_string(), lp.rows.len()).is_some() {
                    return Err(err(line, format!("duplicate row {name}")));
                }
                lp.rows.push(ProgramRow {
                    name: name.to_string(),
                    sense,
                    rhs: 0.0,
                    terms: Vec::new(),
                });
            }
            Section::Columns => {
                let [col, row, value] = fields[..] else {
                    return Err(err(line, "column line needs 3 fields".into()));
                };
                let value = num(line, value)?;
                let c = *col_index.entry(col.to_string()).or_insert_with(|| {
                    lp.columns.push(ProgramColumn {
                        name: col.to_string(),
                        objective: 0.0,
                        lower: 0.0,
                        upper: f64::INFINITY,
                        binary: false,
                    });
                    lp.columns.len() - 1
                });
                if Some(row) == obj_row.as_deref() {
                    lp.columns[c].objective = value;
                } else {
                    let r = *row_index
                        .get(row)
                        .ok_or_else(|| err(line, format!("unknown row {row}")))?;
                    lp.rows[r].terms.push((c, value));
                }
            }
            Section::Rhs => {
                let [_, row, value] = fields[..] else {
                    return Err(err(line, "rhs line needs 3 fields".into()));
                };
                let r = *row_index
                    .get(row)
                    .ok_or_else(|| err(line, format!("unknown row {row}")))?;
                lp.rows[r].rhs = num(line, value)?;
            }
            Section::Bounds => {
                let (kind, col, value) = match fields[..] {
                    [kind, _, col] => (kind, col, None),
                    [kind, _, col, v] => (kind, col, Some(num(line, v)?)),
                    _ => return Err(err(line, "malformed bound".into())),
                };
                let c = *col_index
                    .get(col)
                    .ok_or_else(|| err(line, format!("unknown column {col}")))?;
                let column = &mut lp.columns[c];
                match (kind, value) {
                    ("BV", _) => {
                        column.binary = true;
                        column.lower = 0.0;
                        column.upper = 1.0;
                    }
                    ("LO", Some(v)) => column.lower = v,
                    ("UP", Some(v)) => column.upper = v,
                    _ => return Err(err(line, format!("unsupported bound {kind}"))),
                }
            }
            Section::None | Section::End => {
                return Err(err(line, "data outside a section".into()));
            }
        }
    }
    if section != Section::End {
        return Err(err(text.lines().count(), "missing ENDATA".into()));
    }
    for r in &mut lp.rows {
        r.terms.sort_by_key(|t| t.0);
    }
    Ok(lp)
}
