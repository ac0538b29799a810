//! Single-machine, single-core admission.
//!
//! Slots `i = 1..n` are filled back-to-back from time zero. Variable
//! `b[i,j]` puts image `j` into slot `i`; `j = 0` is the null image with no
//! analysis time and no deadline. The program maximizes the analysed time
//! plus a `1e-5 · i` reward for each null slot `i`, which pushes empty slots
//! to the end of the list.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::ilp::{solve_exact, IlpModel, LinearConstraint, Relation, SolveStatus};
use crate::scalar::Scalar;

pub type ImageId = u32;
pub type MachineId = u32;

/// Weight of the null-slot compaction term, exactly `1/100000`.
pub fn compaction_weight<S: Scalar>() -> S {
    S::from_ratio(1, 100_000)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageJob<S> {
    pub id: ImageId,
    pub analysis_time: S,
    /// Completion deadline measured from schedule start.
    pub deadline: S,
    pub size: S,
    pub ram_need: S,
    pub priority: bool,
    pub origin_machine: MachineId,
}

impl<S: Scalar> ImageJob<S> {
    pub fn new(id: ImageId, analysis_time: S, deadline: S) -> Self {
        ImageJob {
            id,
            analysis_time,
            deadline,
            size: S::zero(),
            ram_need: S::zero(),
            priority: false,
            origin_machine: 0,
        }
    }

    pub fn with_priority(mut self, high: bool) -> Self {
        self.priority = high;
        self
    }

    pub fn with_size(mut self, size: S) -> Self {
        self.size = size;
        self
    }

    pub fn with_ram(mut self, ram: S) -> Self {
        self.ram_need = ram;
        self
    }

    pub fn with_origin(mut self, machine: MachineId) -> Self {
        self.origin_machine = machine;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkloadInstance<S> {
    pub images: Vec<ImageJob<S>>,
}

impl<S: Scalar> WorkloadInstance<S> {
    pub fn new(images: Vec<ImageJob<S>>) -> Self {
        WorkloadInstance { images }
    }

    /// Images with ids `1..=n` and the given analysis times and deadlines.
    pub fn from_times(times: &[S], deadlines: &[S]) -> Self {
        assert_eq!(times.len(), deadlines.len());
        let images = times
            .iter()
            .zip(deadlines)
            .enumerate()
            .map(|(k, (t, r))| ImageJob::new(k as ImageId + 1, t.clone(), r.clone()))
            .collect();
        WorkloadInstance { images }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, id: ImageId) -> Option<&ImageJob<S>> {
        self.images.iter().find(|im| im.id == id)
    }

    pub fn ids(&self) -> BTreeSet<ImageId> {
        self.images.iter().map(|im| im.id).collect()
    }

    pub fn total_time(&self) -> S {
        self.images.iter().fold(S::zero(), |acc, im| acc + im.analysis_time.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for im in &self.images {
            if im.id == 0 {
                return Err(Error::Workload("image id 0 is reserved for the null image".into()));
            }
            if !seen.insert(im.id) {
                return Err(Error::Workload(format!("duplicate image id {}", im.id)));
            }
            if !im.analysis_time.is_positive() {
                return Err(Error::Workload(format!("image {}: analysis time must be > 0", im.id)));
            }
            if im.deadline.is_negative() {
                return Err(Error::Workload(format!("image {}: deadline must be >= 0", im.id)));
            }
            if im.size.is_negative() || im.ram_need.is_negative() {
                return Err(Error::Workload(format!("image {}: size and ram must be >= 0", im.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<S> {
    /// Slot `i` (1-based) is `slots[i - 1]`; `None` is the null image.
    pub slots: Vec<Option<ImageId>>,
    pub scheduled: BTreeSet<ImageId>,
    pub dropped: BTreeSet<ImageId>,
    pub objective_value: S,
    /// Cumulative analysis time after each slot.
    pub per_slot_completion: Vec<S>,
    /// Solver status behind this schedule, when it came from the ILP.
    pub status: Option<SolveStatus>,
    /// Set when the schedule is the all-null fallback.
    pub fallback: bool,
}

impl<S: Scalar> Schedule<S> {
    /// Builds a schedule from a slot list, deriving every other field.
    /// The slot list is padded with nulls to one slot per image.
    pub fn from_slots(workload: &WorkloadInstance<S>, slots: Vec<Option<ImageId>>) -> Result<Self> {
        let mut slots = slots;
        if slots.len() < workload.len() {
            slots.resize(workload.len(), None);
        }
        let times: BTreeMap<ImageId, &S> =
            workload.images.iter().map(|im| (im.id, &im.analysis_time)).collect();
        let mut scheduled = BTreeSet::new();
        let mut completion = Vec::with_capacity(slots.len());
        let mut cum = S::zero();
        let mut objective = S::zero();
        let w = compaction_weight::<S>();
        for (k, slot) in slots.iter().enumerate() {
            match slot {
                Some(id) => {
                    let t = times.get(id).ok_or(Error::UnknownImage(*id))?;
                    cum = cum + (*t).clone();
                    objective = objective + (*t).clone();
                    scheduled.insert(*id);
                }
                None => {
                    objective = objective + w.clone() * S::from_int(k as i64 + 1);
                }
            }
            completion.push(cum.clone());
        }
        let dropped = workload.ids().difference(&scheduled).copied().collect();
        Ok(Schedule {
            slots,
            scheduled,
            dropped,
            objective_value: objective,
            per_slot_completion: completion,
            status: None,
            fallback: false,
        })
    }

    /// Every image dropped, every slot null.
    pub fn all_null(workload: &WorkloadInstance<S>) -> Self {
        let mut s = Self::from_slots(workload, vec![None; workload.len()])
            .expect("null slots reference no image");
        s.fallback = true;
        s
    }

    /// Σ analysis time over scheduled images.
    pub fn first_term(&self, workload: &WorkloadInstance<S>) -> S {
        self.scheduled
            .iter()
            .filter_map(|id| workload.get(*id))
            .fold(S::zero(), |acc, im| acc + im.analysis_time.clone())
    }

    /// `1e-5 · Σ i` over null slots.
    pub fn compaction_term(&self) -> S {
        let idx: i64 = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(k, _)| k as i64 + 1)
            .sum();
        compaction_weight::<S>() * S::from_int(idx)
    }

    /// Images in execution order.
    pub fn sequence(&self) -> Vec<ImageId> {
        self.slots.iter().flatten().copied().collect()
    }

    /// Busy time of the chain.
    pub fn busy_time(&self) -> S {
        self.per_slot_completion.last().cloned().unwrap_or_else(S::zero)
    }
}

/// Maps `(slot, image position)` pairs to flat variable indices.
///
/// Position 0 is the null image; position `p >= 1` is `workload.images[p-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarIndexMap {
    pub slots: usize,
    pub ids: Vec<ImageId>,
}

impl VarIndexMap {
    pub fn positions(&self) -> usize {
        self.ids.len() + 1
    }

    pub fn num_vars(&self) -> usize {
        self.slots * self.positions()
    }

    /// `slot` is 1-based.
    pub fn index(&self, slot: usize, pos: usize) -> usize {
        debug_assert!(slot >= 1 && slot <= self.slots && pos < self.positions());
        (slot - 1) * self.positions() + pos
    }

    pub fn decode(&self, assignment: &[bool]) -> Vec<Option<ImageId>> {
        (1..=self.slots)
            .map(|i| {
                (1..self.positions())
                    .find(|&p| assignment[self.index(i, p)])
                    .map(|p| self.ids[p - 1])
            })
            .collect()
    }
}

/// Builds the admission program for one machine with one core.
pub fn build_local_model<S: Scalar>(workload: &WorkloadInstance<S>) -> Result<(IlpModel<S>, VarIndexMap)> {
    workload.validate()?;
    let n = workload.len();
    let map = VarIndexMap {
        slots: n,
        ids: workload.images.iter().map(|im| im.id).collect(),
    };
    let nv = map.num_vars();
    let w = compaction_weight::<S>();
    let big = workload.total_time();

    let mut objective = vec![S::zero(); nv];
    let mut labels = vec![String::new(); nv];
    for i in 1..=n {
        objective[map.index(i, 0)] = w.clone() * S::from_int(i as i64);
        labels[map.index(i, 0)] = format!("b[{i},0]");
        for (p, im) in workload.images.iter().enumerate() {
            objective[map.index(i, p + 1)] = im.analysis_time.clone();
            labels[map.index(i, p + 1)] = format!("b[{i},{}]", im.id);
        }
    }
    let mut model = IlpModel::new(objective);
    model.var_labels = Some(labels);

    // one image (possibly null) per slot
    for i in 1..=n {
        let terms: Vec<(usize, S)> = (0..=n).map(|p| (map.index(i, p), S::one())).collect();
        model.push(LinearConstraint::sparse(nv, &terms, Relation::Eq, S::one()));
    }
    // each real image at most once
    for p in 1..=n {
        let terms: Vec<(usize, S)> = (1..=n).map(|i| (map.index(i, p), S::one())).collect();
        model.push(LinearConstraint::sparse(nv, &terms, Relation::Le, S::one()));
    }
    // Σ_{k<=i} T·b[k,j] - Σ_j R_j·b[i,j] - B·b[i,0] <= 0
    for i in 1..=n {
        let mut terms = Vec::new();
        for k in 1..=i {
            for (p, im) in workload.images.iter().enumerate() {
                terms.push((map.index(k, p + 1), im.analysis_time.clone()));
            }
        }
        for (p, im) in workload.images.iter().enumerate() {
            terms.push((map.index(i, p + 1), -im.deadline.clone()));
        }
        terms.push((map.index(i, 0), -big.clone()));
        model.push(LinearConstraint::sparse(nv, &terms, Relation::Le, S::zero()));
    }
    Ok((model, map))
}

/// Solves the admission program and decodes the chosen slot order.
///
/// Without an incumbent (budget spent before the first feasible leaf) the
/// all-null schedule is returned with `fallback` set.
pub fn solve_local<S: Scalar>(workload: &WorkloadInstance<S>, budget: Budget) -> Result<Schedule<S>> {
    let (model, map) = build_local_model(workload)?;
    let result = solve_exact(&model, budget)?;
    if !result.status.has_assignment() {
        let mut s = Schedule::all_null(workload);
        s.status = Some(result.status);
        return Ok(s);
    }
    let mut schedule = Schedule::from_slots(workload, map.decode(&result.assignment))?;
    debug_assert_eq!(schedule.objective_value, result.value);
    schedule.objective_value = result.value;
    schedule.status = Some(result.status);
    Ok(schedule)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation<S> {
    SlotCount { expected: usize, actual: usize },
    AtMostOnce { image: ImageId, slots: Vec<usize> },
    Deadline { slot: usize, image: ImageId, completion: S, deadline: S },
    Partition { image: ImageId },
    Completion { slot: usize },
    Objective { expected: S, actual: S },
}

impl<S: Scalar> fmt::Display for Violation<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SlotCount { expected, actual } => {
                write!(f, "one-image-per-slot: expected {expected} slots, found {actual}")
            }
            Violation::AtMostOnce { image, slots } => {
                write!(f, "at-most-once: image {image} occupies slots {slots:?}")
            }
            Violation::Deadline { slot, image, completion, deadline } => write!(
                f,
                "deadline: slot {slot} image {image} completes at {} after deadline {}",
                completion.to_plain_string(),
                deadline.to_plain_string()
            ),
            Violation::Partition { image } => {
                write!(f, "partition: image {image} is not exactly one of scheduled/dropped")
            }
            Violation::Completion { slot } => write!(f, "completion: slot {slot} prefix sum mismatch"),
            Violation::Objective { expected, actual } => write!(
                f,
                "objective: expected {}, recorded {}",
                expected.to_plain_string(),
                actual.to_plain_string()
            ),
        }
    }
}

/// Checks a schedule against the admission constraints and its own
/// bookkeeping. Returns every violation found; empty means valid.
pub fn validate_schedule<S: Scalar>(
    workload: &WorkloadInstance<S>,
    schedule: &Schedule<S>,
) -> Result<Vec<Violation<S>>> {
    let by_id: BTreeMap<ImageId, &ImageJob<S>> = workload.images.iter().map(|im| (im.id, im)).collect();
    for id in schedule
        .slots
        .iter()
        .flatten()
        .chain(&schedule.scheduled)
        .chain(&schedule.dropped)
    {
        if !by_id.contains_key(id) {
            return Err(Error::UnknownImage(*id));
        }
    }
    let mut out = Vec::new();
    if schedule.slots.len() != workload.len() {
        out.push(Violation::SlotCount {
            expected: workload.len(),
            actual: schedule.slots.len(),
        });
    }

    let mut occupied: BTreeMap<ImageId, Vec<usize>> = BTreeMap::new();
    for (k, s) in schedule.slots.iter().enumerate() {
        if let Some(id) = s {
            occupied.entry(*id).or_default().push(k + 1);
        }
    }
    for (id, slots) in &occupied {
        if slots.len() > 1 {
            out.push(Violation::AtMostOnce { image: *id, slots: slots.clone() });
        }
    }

    let mut cum = S::zero();
    let mut prefix = Vec::with_capacity(schedule.slots.len());
    for (k, s) in schedule.slots.iter().enumerate() {
        if let Some(id) = s {
            let im = by_id[id];
            cum = cum + im.analysis_time.clone();
            if cum > im.deadline.clone() + S::tolerance() {
                out.push(Violation::Deadline {
                    slot: k + 1,
                    image: *id,
                    completion: cum.clone(),
                    deadline: im.deadline.clone(),
                });
            }
        }
        prefix.push(cum.clone());
    }

    for id in by_id.keys() {
        let in_slots = occupied.contains_key(id);
        let s = schedule.scheduled.contains(id);
        let d = schedule.dropped.contains(id);
        if s == d || s != in_slots {
            out.push(Violation::Partition { image: *id });
        }
    }

    if schedule.per_slot_completion.len() != prefix.len() {
        out.push(Violation::Completion { slot: prefix.len().min(schedule.per_slot_completion.len()) + 1 });
    } else {
        for (k, (a, b)) in schedule.per_slot_completion.iter().zip(&prefix).enumerate() {
            if (a.clone() - b.clone()).abs() > S::tolerance() {
                out.push(Violation::Completion { slot: k + 1 });
                break;
            }
        }
    }

    let w = compaction_weight::<S>();
    let mut expected = S::zero();
    for (k, s) in schedule.slots.iter().enumerate() {
        expected = expected
            + match s {
                Some(id) => by_id[id].analysis_time.clone(),
                None => w.clone() * S::from_int(k as i64 + 1),
            };
    }
    if (expected.clone() - schedule.objective_value.clone()).abs() > S::tolerance() {
        out.push(Violation::Objective {
            expected,
            actual: schedule.objective_value.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilp::brute_force_oracle;
    use crate::Rational;

    fn q(n: i64) -> Rational {
        Rational::from_integer(n as i128)
    }

    fn golden() -> WorkloadInstance<Rational> {
        WorkloadInstance::from_times(&[q(2), q(3), q(5)], &[q(2), q(5), q(6)])
    }

    #[test]
    fn two_image_model_dimensions() {
        let w = WorkloadInstance::from_times(&[q(1), q(2)], &[q(3), q(3)]);
        let (m, map) = build_local_model(&w).unwrap();
        assert_eq!(m.num_vars, 6);
        assert_eq!(map.num_vars(), 6);
        assert_eq!(m.count(Relation::Eq), 2);
        assert_eq!(m.count(Relation::Le), 4);
        assert_eq!(m.constraints.len(), 6);
    }

    #[test]
    fn empty_workload() {
        let w = WorkloadInstance::<Rational>::default();
        let (m, _) = build_local_model(&w).unwrap();
        assert_eq!(m.num_vars, 0);
        let s = solve_local(&w, Budget::unlimited()).unwrap();
        assert!(s.slots.is_empty());
        assert_eq!(s.objective_value, q(0));
    }

    #[test]
    fn single_feasible_image() {
        let w = WorkloadInstance::from_times(&[q(1)], &[q(1)]);
        let s = solve_local(&w, Budget::unlimited()).unwrap();
        assert_eq!(s.slots, vec![Some(1)]);
        assert_eq!(s.objective_value, q(1));
    }

    #[test]
    fn single_infeasible_image() {
        let w = WorkloadInstance::from_times(&[q(2)], &[q(1)]);
        let s = solve_local(&w, Budget::unlimited()).unwrap();
        assert_eq!(s.slots, vec![None]);
        assert_eq!(s.dropped, BTreeSet::from([1]));
        assert_eq!(s.objective_value, Rational::new(1, 100_000));
    }

    #[test]
    fn golden_instance_matches_oracle() {
        let w = golden();
        let (m, map) = build_local_model(&w).unwrap();
        let oracle = brute_force_oracle(&m).unwrap();
        // one long job at slot 1 beats two short ones: 5 + (2+3)/100000
        assert_eq!(oracle.value, Rational::new(500_005, 100_000));
        assert_eq!(map.decode(&oracle.assignment), vec![Some(3), None, None]);
        let s = solve_local(&w, Budget::unlimited()).unwrap();
        assert_eq!(s.objective_value, oracle.value);
        assert_eq!(s.slots, vec![Some(3), None, None]);
        assert_eq!(s.status, Some(SolveStatus::Optimal));
        assert!(validate_schedule(&w, &s).unwrap().is_empty());
    }

    #[test]
    fn duplicate_slot_is_reported() {
        let w = golden();
        let mut s = Schedule::from_slots(&w, vec![Some(1), Some(1), None]).unwrap();
        s.fallback = false;
        let v = validate_schedule(&w, &s).unwrap();
        assert!(v.iter().any(|x| matches!(x, Violation::AtMostOnce { image: 1, slots } if slots == &vec![1, 2])));
    }

    #[test]
    fn overfull_schedule_misses_deadline_at_slot_three() {
        let w = golden();
        let s = Schedule::from_slots(&w, vec![Some(1), Some(2), Some(3)]).unwrap();
        let v = validate_schedule(&w, &s).unwrap();
        assert_eq!(
            v,
            vec![Violation::Deadline { slot: 3, image: 3, completion: q(10), deadline: q(6) }]
        );
    }

    #[test]
    fn unknown_id_is_an_error() {
        let w = golden();
        let mut s = Schedule::from_slots(&w, vec![Some(1), None, None]).unwrap();
        s.slots[1] = Some(9);
        assert_eq!(validate_schedule(&w, &s), Err(Error::UnknownImage(9)));
    }

    #[test]
    fn invalid_workloads_are_rejected() {
        let w = WorkloadInstance::new(vec![ImageJob::new(0, q(1), q(1))]);
        assert!(build_local_model(&w).is_err());
        let w = WorkloadInstance::new(vec![ImageJob::new(1, q(1), q(1)), ImageJob::new(1, q(2), q(2))]);
        assert!(w.validate().is_err());
        let w = WorkloadInstance::new(vec![ImageJob::new(1, q(0), q(1))]);
        assert!(w.validate().is_err());
    }

    #[test]
    fn zero_budget_falls_back_to_all_null() {
        let w = golden();
        let s = solve_local(&w, Budget::time(std::time::Duration::ZERO)).unwrap();
        assert!(s.fallback);
        assert_eq!(s.dropped.len(), 3);
        assert_eq!(s.status, Some(SolveStatus::BudgetExhaustedNoIncumbent));
        assert!(validate_schedule(&w, &s).unwrap().is_empty());
    }
}
