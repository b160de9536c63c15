use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Feasibility tolerance for rows and bounds.
pub const FEAS_TOL: f64 = 1e-6;
/// Distance from `{0, 1}` accepted for binaries.
pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violates the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `sum(c_i x_i) + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(terms: Vec<(VarId, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * values[v.0]).sum::<f64>()
    }
}

/// Minimization objective `linear . x + sum(w_k * expr_k^2) + constant`.
///
/// The quadratic part is a non-negative combination of squared affine
/// expressions, which keeps it positive semidefinite by construction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub linear: Vec<(VarId, f64)>,
    pub squares: Vec<(f64, AffineExpr)>,
    pub constant: f64,
}

impl Objective {
    pub fn eval(&self, values: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().map(|(v, c)| c * values[v.0]).sum();
        let quad: f64 = self
            .squares
            .iter()
            .map(|(w, e)| {
                let r = e.eval(values);
                w * r * r
            })
            .sum();
        self.constant + lin + quad
    }

    pub fn is_linear(&self) -> bool {
        self.squares.is_empty()
    }
}

/// What a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Index into [`MipModel::constraints`].
    Row(usize),
    Bound(VarId),
    Integrality(VarId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub name: String,
    pub amount: f64,
}

/// Mixed-integer convex program: binaries, continuous variables, linear rows
/// and a convex quadratic objective, always minimized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MipModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<LinearConstraint>,
    pub objective: Objective,
}

impl MipModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            kind: VarKind::Continuous,
            lower,
            upper,
            name: name.into(),
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.variables.push(Variable {
            kind: VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
            name: name.into(),
        });
        VarId(self.variables.len() - 1)
    }

    /// Tightens a variable's bounds; binaries stay within `[0, 1]`.
    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        match v.kind {
            VarKind::Binary => {
                v.lower = lower.max(0.0);
                v.upper = upper.min(1.0);
            }
            VarKind::Continuous => {
                v.lower = lower;
                v.upper = upper;
            }
        }
    }

    /// Appends a row; zero coefficients are dropped. Returns the row index.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<usize> {
        let name = name.into();
        let terms: Vec<(VarId, f64)> = terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
        if terms.is_empty() {
            return Err(Error::Model(format!(
                "row {name} has no nonzero coefficient"
            )));
        }
        if !rhs.is_finite() || terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::Model(format!(
                "row {name} has a non-finite coefficient"
            )));
        }
        if let Some((v, _)) = terms.iter().find(|(v, _)| v.0 >= self.variables.len()) {
            return Err(Error::Model(format!(
                "row {name} references unknown variable {}",
                v.0
            )));
        }
        self.constraints.push(LinearConstraint {
            name,
            terms,
            relation,
            rhs,
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn add_objective_linear(&mut self, var: VarId, coeff: f64) {
        self.objective.linear.push((var, coeff));
    }

    /// Adds `weight * expr^2`; `weight` must be non-negative.
    pub fn add_objective_square(&mut self, weight: f64, expr: AffineExpr) -> Result<()> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::Model(format!(
                "squared-term weight must be >= 0, got {weight}"
            )));
        }
        if weight > 0.0 {
            self.objective.squares.push((weight, expr));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
    }

    pub fn num_binaries(&self) -> usize {
        self.binaries().count()
    }

    pub fn is_binary(&self, var: VarId) -> bool {
        self.variables[var.0].kind == VarKind::Binary
    }

    /// Structural checks: ids in range, bounds ordered, weights non-negative.
    pub fn check(&self) -> Result<()> {
        let n = self.variables.len();
        for (i, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Model(format!(
                    "variable {i} ({}) has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::Model(format!(
                    "binary {i} ({}) exceeds [0, 1]",
                    v.name
                )));
            }
        }
        let bad_id = |terms: &[(VarId, f64)]| terms.iter().any(|(v, _)| v.0 >= n);
        for c in &self.constraints {
            if bad_id(&c.terms) {
                return Err(Error::Model(format!(
                    "row {} references an unknown variable",
                    c.name
                )));
            }
        }
        if bad_id(&self.objective.linear)
            || self.objective.squares.iter().any(|(_, e)| bad_id(&e.terms))
        {
            return Err(Error::Model(
                "objective references an unknown variable".into(),
            ));
        }
        if self.objective.squares.iter().any(|(w, _)| !(*w >= 0.0)) {
            return Err(Error::Model(
                "objective has a negative squared-term weight".into(),
            ));
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval(values)
    }
}

/// Every row, bound or integrality requirement violated by more than
/// [`FEAS_TOL`] / [`INT_TOL`].
pub fn validate(model: &MipModel, values: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    if values.len() != model.variables.len() {
        out.push(Violation {
            kind: ViolationKind::Row(usize::MAX),
            name: format!(
                "expected {} values, got {}",
                model.variables.len(),
                values.len()
            ),
            amount: f64::INFINITY,
        });
        return out;
    }
    for (i, v) in model.variables.iter().enumerate() {
        let x = values[i];
        let amount = (v.lower - x).max(x - v.upper).max(0.0);
        if amount > FEAS_TOL || x.is_nan() {
            out.push(Violation {
                kind: ViolationKind::Bound(VarId(i)),
                name: v.name.clone(),
                amount,
            });
        }
        if v.kind == VarKind::Binary {
            let frac = x.abs().min((x - 1.0).abs());
            if frac > INT_TOL {
                out.push(Violation {
                    kind: ViolationKind::Integrality(VarId(i)),
                    name: v.name.clone(),
                    amount: frac,
                });
            }
        }
    }
    for (r, c) in model.constraints.iter().enumerate() {
        let amount = c.violation(values);
        if amount > FEAS_TOL || amount.is_nan() {
            out.push(Violation {
                kind: ViolationKind::Row(r),
                name: c.name.clone(),
                amount,
            });
        }
    }
    out
}
