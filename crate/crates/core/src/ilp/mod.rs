//! 0-1 integer linear maximization programs.
//!
//! [`IlpModel`] holds a dense linear program over binary variables. Three
//! independent routes operate on it:
//!
//! * [`solve_exact`]: depth-first branch-and-bound with propagation, anytime
//!   under a [`Budget`](crate::Budget);
//! * [`brute_force_oracle`]: Gray-code enumeration of all assignments;
//! * [`check_feasible`]: a plain dense constraint check.

mod bnb;
mod oracle;

use std::fmt;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use bnb::{solve_exact, solve_exact_observed, SearchNode};
pub use oracle::{brute_force_oracle, ORACLE_MAX_VARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint<S> {
    pub coeffs: Vec<S>,
    pub relation: Relation,
    pub bound: S,
}

impl<S: Scalar> LinearConstraint<S> {
    pub fn new(coeffs: Vec<S>, relation: Relation, bound: S) -> Self {
        LinearConstraint { coeffs, relation, bound }
    }

    /// Builds a constraint from sparse `(var, coeff)` terms. Repeated
    /// variables accumulate.
    pub fn sparse(num_vars: usize, terms: &[(usize, S)], relation: Relation, bound: S) -> Self {
        let mut coeffs = vec![S::zero(); num_vars];
        for (v, c) in terms {
            coeffs[*v] = coeffs[*v].clone() + c.clone();
        }
        LinearConstraint { coeffs, relation, bound }
    }
}

/// A binary maximization program: maximize `objective · x` subject to every
/// constraint, `x ∈ {0,1}^num_vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpModel<S> {
    pub num_vars: usize,
    pub objective: Vec<S>,
    pub constraints: Vec<LinearConstraint<S>>,
    pub var_labels: Option<Vec<String>>,
}

impl<S: Scalar> IlpModel<S> {
    pub fn new(objective: Vec<S>) -> Self {
        IlpModel {
            num_vars: objective.len(),
            objective,
            constraints: Vec::new(),
            var_labels: None,
        }
    }

    pub fn with_constraint(mut self, c: LinearConstraint<S>) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn push(&mut self, c: LinearConstraint<S>) {
        self.constraints.push(c);
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::Model(format!(
                "objective has {} coefficients for {} variables",
                self.objective.len(),
                self.num_vars
            )));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != self.num_vars {
                return Err(Error::Model(format!(
                    "constraint {k} has {} coefficients for {} variables",
                    c.coeffs.len(),
                    self.num_vars
                )));
            }
        }
        if let Some(labels) = &self.var_labels {
            if labels.len() != self.num_vars {
                return Err(Error::Model(format!(
                    "{} labels for {} variables",
                    labels.len(),
                    self.num_vars
                )));
            }
        }
        if !S::is_exact() {
            let finite = |s: &S| s.to_f64_lossy().is_finite();
            let all = self.objective.iter().all(finite)
                && self
                    .constraints
                    .iter()
                    .all(|c| finite(&c.bound) && c.coeffs.iter().all(finite));
            if !all {
                return Err(Error::Model("non-finite coefficient".into()));
            }
        }
        Ok(())
    }

    /// `objective · assignment`.
    pub fn evaluate(&self, assignment: &[bool]) -> S {
        self.objective
            .iter()
            .zip(assignment)
            .filter(|(_, &x)| x)
            .fold(S::zero(), |acc, (c, _)| acc + c.clone())
    }

    pub fn count(&self, relation: Relation) -> usize {
        self.constraints.iter().filter(|c| c.relation == relation).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    FeasibleIncumbent,
    Infeasible,
    BudgetExhaustedNoIncumbent,
}

impl SolveStatus {
    pub fn has_assignment(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleIncumbent)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "OPTIMAL",
            SolveStatus::FeasibleIncumbent => "FEASIBLE_INCUMBENT",
            SolveStatus::Infeasible => "INFEASIBLE",
            SolveStatus::BudgetExhaustedNoIncumbent => "BUDGET_EXHAUSTED_NO_INCUMBENT",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<S> {
    /// Empty unless the status carries an assignment.
    pub assignment: Vec<bool>,
    pub value: S,
    pub status: SolveStatus,
    pub nodes_explored: u64,
    pub elapsed: Duration,
}

/// True iff `assignment` satisfies every constraint of `model`.
///
/// Deliberately dense and naive; the solvers never call it.
pub fn check_feasible<S: Scalar>(model: &IlpModel<S>, assignment: &[bool]) -> Result<bool> {
    if assignment.len() != model.num_vars {
        return Err(Error::AssignmentLength {
            expected: model.num_vars,
            actual: assignment.len(),
        });
    }
    for c in &model.constraints {
        if c.coeffs.len() != assignment.len() {
            return Err(Error::Model("constraint length mismatch".into()));
        }
        let mut lhs = S::zero();
        for (k, coeff) in c.coeffs.iter().enumerate() {
            if assignment[k] {
                lhs = lhs + coeff.clone();
            }
        }
        let tol = S::tolerance();
        let ok = match c.relation {
            Relation::Le => lhs <= c.bound.clone() + tol,
            Relation::Ge => lhs >= c.bound.clone() - tol,
            Relation::Eq => (lhs - c.bound.clone()).abs() <= tol,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}
