use std::time::Instant;

use super::{IlpModel, Relation, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest model the oracle will enumerate.
pub const ORACLE_MAX_VARS: usize = 24;

/// Exact optimum by enumerating all `2^n` assignments in Gray-code order,
/// updating row activities one flipped variable at a time.
///
/// Ties are broken towards the lexicographically smallest assignment
/// (variable 0 most significant, `false < true`).
pub fn brute_force_oracle<S: Scalar>(model: &IlpModel<S>) -> Result<SolveResult<S>> {
    model.validate()?;
    let n = model.num_vars;
    if n > ORACLE_MAX_VARS {
        return Err(Error::SizeGuard {
            what: "oracle model",
            size: n,
            limit: ORACLE_MAX_VARS,
        });
    }
    let started = Instant::now();
    let tol = S::tolerance();

    // column-wise sparse view
    let mut columns: Vec<Vec<(usize, S)>> = vec![Vec::new(); n];
    for (r, c) in model.constraints.iter().enumerate() {
        for (v, a) in c.coeffs.iter().enumerate() {
            if !a.is_zero() {
                columns[v].push((r, a.clone()));
            }
        }
    }
    let satisfied = |r: usize, lhs: &S| -> bool {
        let c = &model.constraints[r];
        match c.relation {
            Relation::Le => *lhs <= c.bound.clone() + tol.clone(),
            Relation::Ge => *lhs >= c.bound.clone() - tol.clone(),
            Relation::Eq => (lhs.clone() - c.bound.clone()).abs() <= tol,
        }
    };

    let mut activity = vec![S::zero(); model.constraints.len()];
    let mut violated = (0..model.constraints.len())
        .filter(|&r| !satisfied(r, &activity[r]))
        .count();
    let mut value = S::zero();
    let mut mask: u32 = 0;

    // lexicographic key: variable 0 is the most significant bit
    let key = |m: u32| -> u32 {
        if n == 0 {
            0
        } else {
            m.reverse_bits() >> (32 - n)
        }
    };
    let mut best: Option<(S, u32)> = None;
    let consider = |value: &S, mask: u32, best: &mut Option<(S, u32)>| match best {
        None => *best = Some((value.clone(), mask)),
        Some((bv, bm)) => {
            if *value > *bv || (*value == *bv && key(mask) < key(*bm)) {
                *best = Some((value.clone(), mask));
            }
        }
    };
    if violated == 0 {
        consider(&value, mask, &mut best);
    }

    let total: u64 = 1u64 << n;
    for step in 1..total {
        let v = step.trailing_zeros() as usize;
        let bit = 1u32 << v;
        let turning_on = mask & bit == 0;
        mask ^= bit;
        if turning_on {
            value = value + model.objective[v].clone();
        } else {
            value = value - model.objective[v].clone();
        }
        for (r, a) in &columns[v] {
            let before = satisfied(*r, &activity[*r]);
            activity[*r] = if turning_on {
                activity[*r].clone() + a.clone()
            } else {
                activity[*r].clone() - a.clone()
            };
            let after = satisfied(*r, &activity[*r]);
            match (before, after) {
                (true, false) => violated += 1,
                (false, true) => violated -= 1,
                _ => {}
            }
        }
        if violated == 0 {
            consider(&value, mask, &mut best);
        }
    }

    let nodes_explored = total;
    Ok(match best {
        Some((_, m)) => {
            let assignment: Vec<bool> = (0..n).map(|v| m & (1 << v) != 0).collect();
            // recompute from scratch so the reported value carries no drift
            let value = model.evaluate(&assignment);
            SolveResult {
                assignment,
                value,
                status: SolveStatus::Optimal,
                nodes_explored,
                elapsed: started.elapsed(),
            }
        }
        None => SolveResult {
            assignment: Vec::new(),
            value: S::zero(),
            status: SolveStatus::Infeasible,
            nodes_explored,
            elapsed: started.elapsed(),
        },
    })
}
