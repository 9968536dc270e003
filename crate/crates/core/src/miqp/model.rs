use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    /// Sorted by variable, no duplicates, no zeros.
    pub coefficients: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().map(|(j, a)| a * x[*j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// `constant + Σ linear[j]·x_j + Σ quadratic_diagonal[j]·x_j²`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub linear: BTreeMap<VarId, f64>,
    pub quadratic_diagonal: BTreeMap<VarId, f64>,
    pub constant: f64,
}

/// Mixed-binary program with linear constraints and a separable convex
/// quadratic objective, minimized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MiqpModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub linear_constraints: Vec<LinearConstraint>,
    pub objective: Objective,
}

impl MiqpModel {
    pub fn new(name: impl Into<String>) -> Self {
        MiqpModel {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
        });
        self.variables.len() - 1
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds a row; repeated variables are merged and zero coefficients dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (j, a) in terms {
            *merged.entry(j).or_insert(0.0) += a;
        }
        self.linear_constraints.push(LinearConstraint {
            name: name.into(),
            coefficients: merged.into_iter().filter(|(_, a)| *a != 0.0).collect(),
            sense,
            rhs,
        });
        self.linear_constraints.len() - 1
    }

    pub fn add_linear_cost(&mut self, j: VarId, c: f64) {
        if c != 0.0 {
            *self.objective.linear.entry(j).or_insert(0.0) += c;
        }
    }

    pub fn add_quadratic_cost(&mut self, j: VarId, q: f64) {
        if q != 0.0 {
            *self.objective.quadratic_diagonal.entry(j).or_insert(0.0) += q;
        }
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.linear_constraints.len()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        (0..self.n_vars())
            .filter(|j| self.variables[*j].kind == VarKind::Binary)
            .collect()
    }

    pub fn var_index(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let o = &self.objective;
        o.constant
            + o.linear.iter().map(|(j, c)| c * x[*j]).sum::<f64>()
            + o.quadratic_diagonal.iter().map(|(j, q)| q * x[*j] * x[*j]).sum::<f64>()
    }

    /// Worst violated row as `(row index, violation)`.
    pub fn worst_row(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.linear_constraints
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.violation(x)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Largest violation of any row or bound.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.worst_row(x).map_or(0.0, |(_, v)| v);
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, xi)| (v.lower - xi).max(xi - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn max_integrality_violation(&self, x: &[f64]) -> f64 {
        self.binaries()
            .into_iter()
            .map(|j| (x[j] - x[j].round()).abs())
            .fold(0.0, f64::max)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n_vars();
        for (j, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::input(format!("variable {} has invalid bounds", v.name)));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::input(format!(
                    "binary variable {} (#{j}) has bounds outside [0, 1]",
                    v.name
                )));
            }
        }
        for c in &self.linear_constraints {
            if let Some((j, _)) = c.coefficients.iter().find(|(j, _)| *j >= n) {
                return Err(Error::input(format!("row {} references undeclared variable {j}", c.name)));
            }
            if !c.rhs.is_finite() || c.coefficients.iter().any(|(_, a)| !a.is_finite()) {
                return Err(Error::input(format!("row {} has non-finite data", c.name)));
            }
        }
        let o = &self.objective;
        for (j, q) in &o.quadratic_diagonal {
            if *j >= n {
                return Err(Error::input(format!("objective references undeclared variable {j}")));
            }
            if *q < 0.0 || !q.is_finite() {
                return Err(Error::input(format!(
                    "quadratic coefficient {q} on {} makes the model nonconvex",
                    self.variables[*j].name
                )));
            }
        }
        if let Some((j, _)) = o.linear.iter().find(|(j, _)| **j >= n) {
            return Err(Error::input(format!("objective references undeclared variable {j}")));
        }
        Ok(())
    }
}
