//! Free-format MPS with a `QUADOBJ` section.
//!
//! The objective constant is written as the negated RHS of the objective
//! row, which is how CPLEX and Gurobi read it. Numbers use Rust's shortest
//! round-trip formatting, so export → read → export is byte-identical.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::model::{LinearConstraint, MiqpModel, Sense, VarKind};

const OBJ_ROW: &str = "OBJ";

fn mps_name(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

pub fn export_mps(model: &MiqpModel) -> String {
    let mut out = String::new();
    let var_names: Vec<String> = model.variables.iter().map(|v| mps_name(&v.name)).collect();
    let row_names: Vec<String> = model
        .linear_constraints
        .iter()
        .map(|c| mps_name(&c.name))
        .collect();
    let model_name = mps_name(&model.name);
    writeln!(out, "NAME {model_name}").unwrap();
    out.push_str("ROWS\n");
    writeln!(out, " N {OBJ_ROW}").unwrap();
    for (c, name) in model.linear_constraints.iter().zip(&row_names) {
        let t = match c.sense {
            Sense::Le => "L",
            Sense::Eq => "E",
            Sense::Ge => "G",
        };
        writeln!(out, " {t} {name}").unwrap();
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.n_vars()];
    for (i, c) in model.linear_constraints.iter().enumerate() {
        for &(j, a) in &c.coefficients {
            by_col[j].push((i, a));
        }
    }
    out.push_str("COLUMNS\n");
    let mut markers = 0;
    for (j, v) in model.variables.iter().enumerate() {
        let binary = v.kind == VarKind::Binary;
        if binary {
            writeln!(out, "    MARKER{markers} 'MARKER' 'INTORG'").unwrap();
        }
        let name = &var_names[j];
        let mut wrote = false;
        if let Some(c) = model.objective.linear.get(&j) {
            writeln!(out, "    {name} {OBJ_ROW} {c}").unwrap();
            wrote = true;
        }
        for &(i, a) in &by_col[j] {
            writeln!(out, "    {name} {} {a}", row_names[i]).unwrap();
            wrote = true;
        }
        if !wrote {
            writeln!(out, "    {name} {OBJ_ROW} 0").unwrap();
        }
        if binary {
            writeln!(out, "    MARKER{markers} 'MARKER' 'INTEND'").unwrap();
            markers += 1;
        }
    }

    out.push_str("RHS\n");
    if model.objective.constant != 0.0 {
        writeln!(out, "    RHS {OBJ_ROW} {}", -model.objective.constant).unwrap();
    }
    for (c, name) in model.linear_constraints.iter().zip(&row_names) {
        if c.rhs != 0.0 {
            writeln!(out, "    RHS {name} {}", c.rhs).unwrap();
        }
    }

    out.push_str("BOUNDS\n");
    for (v, name) in model.variables.iter().zip(&var_names) {
        let (l, u) = (v.lower, v.upper);
        if v.kind == VarKind::Binary && l == 0.0 && u == 1.0 {
            writeln!(out, " BV BND {name}").unwrap();
        } else if l == u {
            writeln!(out, " FX BND {name} {l}").unwrap();
        } else if l == f64::NEG_INFINITY && u == f64::INFINITY {
            writeln!(out, " FR BND {name}").unwrap();
        } else {
            if l == f64::NEG_INFINITY {
                writeln!(out, " MI BND {name}").unwrap();
            } else if l != 0.0 {
                writeln!(out, " LO BND {name} {l}").unwrap();
            }
            if u.is_finite() {
                writeln!(out, " UP BND {name} {u}").unwrap();
            }
        }
    }

    if !model.objective.quadratic_diagonal.is_empty() {
        out.push_str("QUADOBJ\n");
        for (j, q) in &model.objective.quadratic_diagonal {
            let name = &var_names[*j];
            writeln!(out, "    {name} {name} {}", 2.0 * q).unwrap();
        }
    }
    out.push_str("ENDATA\n");
    out
}

pub fn write_mps(model: &MiqpModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, export_mps(model))?;
    Ok(())
}

fn num(tok: &str, line: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::input(format!("MPS line {line}: '{tok}' is not a number")))
}

/// Reads the subset of free MPS written by [`export_mps`]: binary or
/// continuous columns and a diagonal quadratic objective.
pub fn read_mps(text: &str) -> Result<MiqpModel> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
        Quad,
    }
    let mut model = MiqpModel::new("");
    let mut section = Section::None;
    let mut rows: HashMap<String, usize> = HashMap::new();
    let mut obj_row: Option<String> = None;
    let mut cols: HashMap<String, usize> = HashMap::new();
    let mut row_terms: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut integer = false;
    let mut explicit_bounds = vec![];

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(char::is_whitespace) {
            section = match toks[0] {
                "NAME" => {
                    model.name = toks.get(1).unwrap_or(&"").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "QUADOBJ" => Section::Quad,
                "ENDATA" => break,
                other => return Err(Error::input(format!("MPS line {line}: unknown section {other}"))),
            };
            continue;
        }
        let bad = || Error::input(format!("MPS line {line}: malformed '{}'", raw.trim()));
        match section {
            Section::None => return Err(bad()),
            Section::Rows => {
                let [t, name] = toks[..] else { return Err(bad()) };
                let sense = match t {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "E" => Sense::Eq,
                    "G" => Sense::Ge,
                    _ => return Err(bad()),
                };
                rows.insert(name.to_string(), model.linear_constraints.len());
                model.linear_constraints.push(LinearConstraint {
                    name: name.to_string(),
                    coefficients: Vec::new(),
                    sense,
                    rhs: 0.0,
                });
                row_terms.push(BTreeMap::new());
            }
            Section::Columns => {
                if toks.len() == 3 && toks[1] == "'MARKER'" {
                    integer = match toks[2] {
                        "'INTORG'" => true,
                        "'INTEND'" => false,
                        _ => return Err(bad()),
                    };
                    continue;
                }
                if toks.len() < 3 || toks.len() % 2 == 0 {
                    return Err(bad());
                }
                let j = match cols.get(toks[0]) {
                    Some(&j) => j,
                    None => {
                        let (kind, upper) = if integer {
                            (VarKind::Binary, 1.0)
                        } else {
                            (VarKind::Continuous, f64::INFINITY)
                        };
                        let j = model.add_var(toks[0], kind, 0.0, upper);
                        cols.insert(toks[0].to_string(), j);
                        explicit_bounds.push(false);
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let a = num(pair[1], line)?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        model.add_linear_cost(j, a);
                    } else {
                        let &i = rows
                            .get(pair[0])
                            .ok_or_else(|| Error::input(format!("MPS line {line}: unknown row {}", pair[0])))?;
                        *row_terms[i].entry(j).or_insert(0.0) += a;
                    }
                }
            }
            Section::Rhs => {
                if toks.len() < 3 || toks.len() % 2 == 0 {
                    return Err(bad());
                }
                for pair in toks[1..].chunks(2) {
                    let v = num(pair[1], line)?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        model.objective.constant = -v;
                    } else {
                        let &i = rows
                            .get(pair[0])
                            .ok_or_else(|| Error::input(format!("MPS line {line}: unknown row {}", pair[0])))?;
                        model.linear_constraints[i].rhs = v;
                    }
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(bad());
                }
                let &j = cols
                    .get(toks[2])
                    .ok_or_else(|| Error::input(format!("MPS line {line}: unknown column {}", toks[2])))?;
                let value = toks.get(3).map(|t| num(t, line)).transpose()?;
                let var = &mut model.variables[j];
                if !explicit_bounds[j] && var.kind == VarKind::Binary {
                    var.upper = f64::INFINITY;
                }
                explicit_bounds[j] = true;
                match (toks[0], value) {
                    ("UP", Some(v)) => var.upper = v,
                    ("LO", Some(v)) => var.lower = v,
                    ("FX", Some(v)) => {
                        var.lower = v;
                        var.upper = v;
                    }
                    ("MI", _) => var.lower = f64::NEG_INFINITY,
                    ("PL", _) => var.upper = f64::INFINITY,
                    ("FR", _) => {
                        var.lower = f64::NEG_INFINITY;
                        var.upper = f64::INFINITY;
                    }
                    ("BV", _) => {
                        var.kind = VarKind::Binary;
                        var.lower = 0.0;
                        var.upper = 1.0;
                    }
                    _ => return Err(bad()),
                }
            }
            Section::Quad => {
                let [a, b, v] = toks[..] else { return Err(bad()) };
                let v = num(v, line)?;
                if a != b {
                    if v != 0.0 {
                        return Err(Error::input(format!(
                            "MPS line {line}: off-diagonal quadratic terms are not supported"
                        )));
                    }
                    continue;
                }
                let &j = cols
                    .get(a)
                    .ok_or_else(|| Error::input(format!("MPS line {line}: unknown column {a}")))?;
                model.add_quadratic_cost(j, v / 2.0);
            }
        }
    }
    for (row, terms) in model.linear_constraints.iter_mut().zip(row_terms) {
        row.coefficients = terms.into_iter().filter(|(_, a)| *a != 0.0).collect();
    }
    for v in &model.variables {
        if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
            return Err(Error::input(format!(
                "integer column {} is not binary (bounds [{}, {}])",
                v.name, v.lower, v.upper
            )));
        }
    }
    Ok(model)
}
