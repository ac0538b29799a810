//! Depth-first branch-and-bound over binary variables.
//!
//! Variables are branched in order of descending `|objective|` (ties by
//! index), value 1 first. Each node runs activity-based propagation on the
//! `<=` form of every row. Rows of the form `Σ x = 1` with unit
//! coefficients are recognised as exactly-one groups: both propagation and
//! the upper bound use the fact that exactly one member of such a group is
//! set.
//!
//! The upper bound is the partial objective plus, for each group of a
//! variable partition, the best coefficient still available in it. It never
//! exceeds the partial objective plus the sum of positive unfixed
//! coefficients.

use std::time::Instant;

use super::{IlpModel, LinearConstraint, Relation, SolveResult, SolveStatus};
use crate::budget::{Budget, BudgetClock};
use crate::error::Result;
use crate::scalar::{max_of, min_of, Scalar};

const UNFIXED: i8 = -1;

/// A search node as seen by an observer: the fixings after propagation and
/// the bound used for pruning.
#[derive(Debug, Clone)]
pub struct SearchNode<S> {
    pub fixed: Vec<Option<bool>>,
    pub bound: S,
}

/// Solves `model` to optimality, or returns the best incumbent once
/// `budget` is spent.
pub fn solve_exact<S: Scalar>(model: &IlpModel<S>, budget: Budget) -> Result<SolveResult<S>> {
    run(model, budget, None)
}

/// As [`solve_exact`], calling `observer` at every node that survives
/// propagation.
pub fn solve_exact_observed<S: Scalar>(
    model: &IlpModel<S>,
    budget: Budget,
    observer: &mut dyn FnMut(&SearchNode<S>),
) -> Result<SolveResult<S>> {
    run(model, budget, Some(observer))
}

struct Row<S> {
    terms: Vec<(usize, S)>,
    rhs: S,
    /// exactly-one groups touched by this row
    groups: Vec<usize>,
}

struct Group {
    members: Vec<usize>,
    exact: bool,
}

struct Search<'m, S> {
    model: &'m IlpModel<S>,
    rows: Vec<Row<S>>,
    col_rows: Vec<Vec<usize>>,
    /// exactly-one group of each variable used by propagation
    exact_group: Vec<Option<usize>>,
    groups: Vec<Group>,
    var_groups: Vec<Vec<usize>>,
    /// bound partitions: group id per variable (ids past `groups.len()` are singletons)
    partitions: Vec<Vec<usize>>,
    /// whether a partition assigns every member of an exactly-one group to it
    covers_group: Vec<Vec<bool>>,
    order: Vec<usize>,

    val: Vec<i8>,
    trail: Vec<usize>,
    partial: S,
    group_unfixed: Vec<usize>,
    group_ones: Vec<usize>,

    queue: Vec<usize>,
    queued: Vec<bool>,
    group_queue: Vec<usize>,

    scratch_min: Vec<S>,
    scratch_cnt: Vec<usize>,
    scratch_stamp: Vec<u32>,
    stamp: u32,
    part_best: Vec<Option<S>>,
}

fn as_unit_clique<S: Scalar>(c: &LinearConstraint<S>) -> Option<Vec<usize>> {
    if c.bound != S::one() || !matches!(c.relation, Relation::Eq | Relation::Le) {
        return None;
    }
    let mut members = Vec::new();
    for (v, a) in c.coeffs.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        if *a != S::one() {
            return None;
        }
        members.push(v);
    }
    (!members.is_empty()).then_some(members)
}

impl<'m, S: Scalar> Search<'m, S> {
    fn new(model: &'m IlpModel<S>) -> Self {
        let n = model.num_vars;
        let mut groups = Vec::new();
        for c in &model.constraints {
            if let Some(members) = as_unit_clique(c) {
                groups.push(Group { members, exact: c.relation == Relation::Eq });
            }
        }
        let mut var_groups = vec![Vec::new(); n];
        for (g, grp) in groups.iter().enumerate() {
            for &v in &grp.members {
                var_groups[v].push(g);
            }
        }
        let exact_group: Vec<Option<usize>> = (0..n)
            .map(|v| var_groups[v].iter().copied().find(|&g| groups[g].exact))
            .collect();

        let mut rows = Vec::new();
        let mut push_row = |terms: Vec<(usize, S)>, rhs: S| {
            let mut gs: Vec<usize> = terms.iter().filter_map(|(v, _)| exact_group[*v]).collect();
            gs.sort_unstable();
            gs.dedup();
            rows.push(Row { terms, rhs, groups: gs });
        };
        for c in &model.constraints {
            let terms: Vec<(usize, S)> = c
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, a)| !a.is_zero())
                .map(|(v, a)| (v, a.clone()))
                .collect();
            let neg = || terms.iter().map(|(v, a)| (*v, -a.clone())).collect::<Vec<_>>();
            match c.relation {
                Relation::Le => push_row(terms.clone(), c.bound.clone()),
                Relation::Ge => push_row(neg(), -c.bound.clone()),
                Relation::Eq => {
                    push_row(terms.clone(), c.bound.clone());
                    push_row(neg(), -c.bound.clone());
                }
            }
        }
        let mut col_rows = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for (v, _) in &row.terms {
                col_rows[*v].push(r);
            }
        }

        // partition A prefers exactly-one groups, partition B at-most-one groups
        let ng = groups.len();
        let pick = |v: usize, prefer_exact: bool| -> usize {
            let gs = &var_groups[v];
            gs.iter()
                .copied()
                .find(|&g| groups[g].exact == prefer_exact)
                .or_else(|| gs.first().copied())
                .unwrap_or(ng + v)
        };
        let partitions = vec![
            (0..n).map(|v| pick(v, true)).collect::<Vec<_>>(),
            (0..n).map(|v| pick(v, false)).collect::<Vec<_>>(),
        ];

        let covers_group = partitions
            .iter()
            .map(|part| {
                groups
                    .iter()
                    .enumerate()
                    .map(|(g, grp)| grp.members.iter().all(|&v| part[v] == g))
                    .collect()
            })
            .collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (model.objective[a].abs(), model.objective[b].abs());
            cb.partial_cmp(&ca).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });

        let group_unfixed = groups.iter().map(|g| g.members.len()).collect();
        Search {
            model,
            rows,
            col_rows,
            exact_group,
            group_ones: vec![0; ng],
            group_unfixed,
            groups,
            var_groups,
            partitions,
            covers_group,
            order,
            val: vec![UNFIXED; n],
            trail: Vec::with_capacity(n),
            partial: S::zero(),
            queue: Vec::new(),
            queued: Vec::new(),
            group_queue: Vec::new(),
            scratch_min: vec![S::zero(); ng],
            scratch_cnt: vec![0; ng],
            scratch_stamp: vec![0; ng],
            stamp: 0,
            part_best: vec![None; ng + n],
        }
    }

    fn fix(&mut self, v: usize, one: bool) {
        debug_assert_eq!(self.val[v], UNFIXED);
        self.val[v] = one as i8;
        self.trail.push(v);
        if one {
            self.partial = self.partial.clone() + self.model.objective[v].clone();
        }
        for &g in &self.var_groups[v] {
            self.group_unfixed[g] -= 1;
            if one {
                self.group_ones[g] += 1;
            }
            self.group_queue.push(g);
        }
        for &r in &self.col_rows[v] {
            if !self.queued[r] {
                self.queued[r] = true;
                self.queue.push(r);
            }
        }
    }

    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let v = self.trail.pop().unwrap();
            let one = self.val[v] == 1;
            self.val[v] = UNFIXED;
            if one {
                self.partial = self.partial.clone() - self.model.objective[v].clone();
            }
            for &g in &self.var_groups[v] {
                self.group_unfixed[g] += 1;
                if one {
                    self.group_ones[g] -= 1;
                }
            }
        }
    }

    fn clear_queues(&mut self) {
        for &r in &self.queue {
            self.queued[r] = false;
        }
        self.queue.clear();
        self.group_queue.clear();
    }

    /// Runs propagation to a fixpoint. Returns `false` on conflict.
    fn propagate(&mut self) -> bool {
        let tol = S::tolerance();
        loop {
            if let Some(g) = self.group_queue.pop() {
                let ones = self.group_ones[g];
                let unfixed = self.group_unfixed[g];
                if ones > 1 {
                    self.clear_queues();
                    return false;
                }
                if ones == 1 && unfixed > 0 {
                    let free: Vec<usize> = self.groups[g]
                        .members
                        .iter()
                        .copied()
                        .filter(|&v| self.val[v] == UNFIXED)
                        .collect();
                    for v in free {
                        self.fix(v, false);
                    }
                } else if ones == 0 && self.groups[g].exact {
                    if unfixed == 0 {
                        self.clear_queues();
                        return false;
                    }
                    if unfixed == 1 {
                        let last = self.groups[g]
                            .members
                            .iter()
                            .copied()
                            .find(|&v| self.val[v] == UNFIXED)
                            .unwrap();
                        self.fix(last, true);
                    }
                }
                continue;
            }
            let Some(r) = self.queue.pop() else {
                return true;
            };
            self.queued[r] = false;
            if !self.propagate_row(r, &tol) {
                self.clear_queues();
                return false;
            }
        }
    }

    fn propagate_row(&mut self, r: usize, tol: &S) -> bool {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.scratch_stamp.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        let stamp = self.stamp;
        let row = &self.rows[r];
        let mut minact = S::zero();
        for (v, a) in &row.terms {
            match self.val[*v] {
                1 => minact = minact + a.clone(),
                0 => {}
                _ => match self.exact_group[*v] {
                    Some(g) if self.group_ones[g] == 0 => {
                        if self.scratch_stamp[g] != stamp {
                            self.scratch_stamp[g] = stamp;
                            self.scratch_min[g] = a.clone();
                            self.scratch_cnt[g] = 1;
                        } else {
                            self.scratch_min[g] = min_of(self.scratch_min[g].clone(), a.clone());
                            self.scratch_cnt[g] += 1;
                        }
                    }
                    Some(_) => {}
                    None => {
                        if a.is_negative() {
                            minact = minact + a.clone();
                        }
                    }
                },
            }
        }
        // fold group minima; a member outside the row contributes 0
        for &g in &row.groups {
            if self.scratch_stamp[g] == stamp {
                let mut m = self.scratch_min[g].clone();
                if self.group_unfixed[g] > self.scratch_cnt[g] && m.is_positive() {
                    m = S::zero();
                }
                self.scratch_min[g] = m.clone();
                minact = minact + m;
            }
        }
        let limit = row.rhs.clone() + tol.clone();
        if minact > limit {
            return false;
        }
        let mut to_zero = Vec::new();
        let mut to_one = Vec::new();
        for (v, a) in &row.terms {
            if self.val[*v] != UNFIXED {
                continue;
            }
            match self.exact_group[*v] {
                Some(g) if self.group_ones[g] == 0 => {
                    let if_one = minact.clone() - self.scratch_min[g].clone() + a.clone();
                    if if_one > limit {
                        to_zero.push(*v);
                    }
                }
                Some(_) => {}
                None => {
                    if a.is_positive() {
                        if minact.clone() + a.clone() > limit {
                            to_zero.push(*v);
                        }
                    } else if minact.clone() - a.clone() > limit {
                        to_one.push(*v);
                    }
                }
            }
        }
        for v in to_zero {
            if self.val[v] == UNFIXED {
                self.fix(v, false);
            }
        }
        for v in to_one {
            if self.val[v] == UNFIXED {
                self.fix(v, true);
            }
        }
        true
    }

    fn bound(&mut self) -> S {
        let mut best: Option<S> = None;
        for p in 0..self.partitions.len() {
            for slot in self.part_best.iter_mut() {
                *slot = None;
            }
            for v in 0..self.model.num_vars {
                if self.val[v] != UNFIXED {
                    continue;
                }
                let gid = self.partitions[p][v];
                let c = self.model.objective[v].clone();
                self.part_best[gid] = Some(match self.part_best[gid].take() {
                    None => c,
                    Some(b) => max_of(b, c),
                });
            }
            let mut total = self.partial.clone();
            for (gid, b) in self.part_best.iter().enumerate() {
                let Some(b) = b else { continue };
                let exact_open = gid < self.groups.len()
                    && self.groups[gid].exact
                    && self.covers_group[p][gid]
                    && self.group_ones[gid] == 0;
                if exact_open || b.is_positive() {
                    total = total + b.clone();
                }
            }
            best = Some(match best {
                None => total,
                Some(x) => min_of(x, total),
            });
        }
        best.unwrap_or_else(|| self.partial.clone())
    }

    fn leaf_feasible(&self) -> bool {
        let tol = S::tolerance();
        self.rows.iter().all(|row| {
            let lhs = row
                .terms
                .iter()
                .filter(|(v, _)| self.val[*v] == 1)
                .fold(S::zero(), |acc, (_, a)| acc + a.clone());
            lhs <= row.rhs.clone() + tol.clone()
        })
    }

    fn next_var(&self) -> Option<usize> {
        self.order.iter().copied().find(|&v| self.val[v] == UNFIXED)
    }
}

struct Frame {
    trail_len: usize,
    var: usize,
    tried_zero: bool,
}

type Observer<'a, S> = &'a mut dyn FnMut(&SearchNode<S>);

fn run<S: Scalar>(
    model: &IlpModel<S>,
    budget: Budget,
    mut observer: Option<Observer<'_, S>>,
) -> Result<SolveResult<S>> {
    model.validate()?;
    let started = Instant::now();
    let mut clock: BudgetClock = budget.start();
    let mut s = Search::new(model);
    s.queued = vec![false; s.rows.len()];
    let tol = S::tolerance();

    let mut incumbent: Option<(S, Vec<bool>)> = None;
    let mut stack: Vec<Frame> = Vec::new();
    let mut nodes: u64 = 0;
    let mut interrupted = false;

    // root: every row and group is checked once
    for r in 0..s.rows.len() {
        s.queued[r] = true;
        s.queue.push(r);
    }
    s.group_queue.extend(0..s.groups.len());

    'search: loop {
        // evaluate the current node
        let mut descend = false;
        if clock.tick() {
            interrupted = true;
            break 'search;
        }
        nodes += 1;
        if s.propagate() {
            let bound = s.bound();
            if let Some(obs) = observer.as_deref_mut() {
                let fixed = s.val.iter().map(|&x| if x == UNFIXED { None } else { Some(x == 1) }).collect();
                obs(&SearchNode { fixed, bound: bound.clone() });
            }
            let pruned = match &incumbent {
                Some((best, _)) => bound <= best.clone() + tol.clone(),
                None => false,
            };
            if !pruned {
                match s.next_var() {
                    Some(v) => {
                        stack.push(Frame { trail_len: s.trail.len(), var: v, tried_zero: false });
                        s.fix(v, true);
                        descend = true;
                    }
                    None => {
                        if s.leaf_feasible() {
                            let value = s.partial.clone();
                            let better = match &incumbent {
                                Some((best, _)) => value > best.clone() + tol.clone(),
                                None => true,
                            };
                            if better {
                                let assignment = s.val.iter().map(|&x| x == 1).collect();
                                incumbent = Some((value, assignment));
                            }
                        }
                    }
                }
            }
        }
        if descend {
            continue;
        }
        // backtrack to the deepest frame with an untried branch
        loop {
            let Some(top) = stack.last_mut() else {
                break 'search;
            };
            s.clear_queues();
            s.undo_to(top.trail_len);
            if top.tried_zero {
                stack.pop();
                continue;
            }
            top.tried_zero = true;
            let v = top.var;
            s.fix(v, false);
            break;
        }
    }

    let elapsed = started.elapsed();
    let result = match incumbent {
        Some((_, assignment)) => {
            let value = model.evaluate(&assignment);
            SolveResult {
                assignment,
                value,
                status: if interrupted { SolveStatus::FeasibleIncumbent } else { SolveStatus::Optimal },
                nodes_explored: nodes,
                elapsed,
            }
        }
        None => SolveResult {
            assignment: Vec::new(),
            value: S::zero(),
            status: if interrupted {
                SolveStatus::BudgetExhaustedNoIncumbent
            } else {
                SolveStatus::Infeasible
            },
            nodes_explored: nodes,
            elapsed,
        },
    };
    Ok(result)
}
