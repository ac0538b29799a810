//! Fast feasible schedules: earliest-deadline greedy, first-improvement
//! local search and seeded randomized restarts.
//!
//! All three work on compact sequences (every null slot after the last
//! image) and score them with the same exact objective as the ILP,
//! compaction term included.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::budget::{Budget, BudgetClock};
use crate::error::{Error, Result};
use crate::local::{compaction_weight, validate_schedule, ImageId, Schedule, WorkloadInstance};
use crate::scalar::Scalar;

struct Times<'w, S> {
    t: BTreeMap<ImageId, &'w S>,
    r: BTreeMap<ImageId, &'w S>,
    n: usize,
}

impl<'w, S: Scalar> Times<'w, S> {
    fn new(w: &'w WorkloadInstance<S>) -> Self {
        Times {
            t: w.images.iter().map(|im| (im.id, &im.analysis_time)).collect(),
            r: w.images.iter().map(|im| (im.id, &im.deadline)).collect(),
            n: w.len(),
        }
    }

    fn feasible(&self, seq: &[ImageId]) -> bool {
        let mut cum = S::zero();
        for id in seq {
            cum = cum + self.t[id].clone();
            if cum > self.r[id].clone() + S::tolerance() {
                return false;
            }
        }
        true
    }

    fn objective(&self, seq: &[ImageId]) -> S {
        let work = seq.iter().fold(S::zero(), |acc, id| acc + self.t[id].clone());
        let nulls: i64 = (seq.len() + 1..=self.n).map(|i| i as i64).sum();
        work + compaction_weight::<S>() * S::from_int(nulls)
    }
}

/// Admits images in `order` while each one still meets its deadline.
fn admit_in_order<S: Scalar>(times: &Times<'_, S>, order: &[ImageId]) -> Vec<ImageId> {
    let mut cum = S::zero();
    let mut seq = Vec::new();
    for id in order {
        let next = cum.clone() + times.t[id].clone();
        if next <= times.r[id].clone() + S::tolerance() {
            cum = next;
            seq.push(*id);
        }
    }
    seq
}

/// Earliest-deadline-first admission: visit images by deadline (ties by
/// id) and keep each one whose completion still meets its deadline.
pub fn greedy_edf<S: Scalar>(workload: &WorkloadInstance<S>) -> Result<Schedule<S>> {
    workload.validate()?;
    let times = Times::new(workload);
    let mut order: Vec<&_> = workload.images.iter().collect();
    order.sort_by(|a, b| {
        a.deadline
            .partial_cmp(&b.deadline)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    let order: Vec<ImageId> = order.into_iter().map(|im| im.id).collect();
    Schedule::from_slots(workload, admit_in_order(&times, &order).into_iter().map(Some).collect())
}

#[derive(Debug, Clone, Copy)]
enum Move {
    /// Put a dropped image at a position.
    Insert { image: ImageId, pos: usize },
    /// Remove the image at `out`, then insert a dropped image at `pos`.
    Swap { out: usize, image: ImageId, pos: usize },
    /// Exchange positions `k` and `k + 1`.
    Transpose { k: usize },
}

fn apply(seq: &[ImageId], mv: Move) -> Vec<ImageId> {
    let mut s = seq.to_vec();
    match mv {
        Move::Insert { image, pos } => s.insert(pos, image),
        Move::Swap { out, image, pos } => {
            s.remove(out);
            s.insert(pos, image);
        }
        Move::Transpose { k } => s.swap(k, k + 1),
    }
    s
}

fn neighbourhood(seq: &[ImageId], dropped: &[ImageId]) -> Vec<Move> {
    let mut moves = Vec::new();
    for &image in dropped {
        for pos in 0..=seq.len() {
            moves.push(Move::Insert { image, pos });
        }
        for out in 0..seq.len() {
            for pos in 0..seq.len() {
                moves.push(Move::Swap { out, image, pos });
            }
        }
    }
    for k in 0..seq.len().saturating_sub(1) {
        moves.push(Move::Transpose { k });
    }
    moves
}

fn climb<S: Scalar>(
    workload: &WorkloadInstance<S>,
    times: &Times<'_, S>,
    start: Vec<ImageId>,
    clock: &mut BudgetClock,
    rng: &mut ChaCha8Rng,
) -> Vec<ImageId> {
    let mut seq = start;
    let mut value = times.objective(&seq);
    'improve: loop {
        let dropped: Vec<ImageId> = workload
            .images
            .iter()
            .map(|im| im.id)
            .filter(|id| !seq.contains(id))
            .collect();
        let mut moves = neighbourhood(&seq, &dropped);
        moves.shuffle(rng);
        for mv in moves {
            if clock.tick() {
                break 'improve;
            }
            let cand = apply(&seq, mv);
            if !times.feasible(&cand) {
                continue;
            }
            let v = times.objective(&cand);
            if v > value {
                seq = cand;
                value = v;
                continue 'improve;
            }
        }
        break;
    }
    seq
}

/// First-improvement local search from a feasible seed.
///
/// Neighbours: insert a dropped image anywhere, replace a scheduled image
/// with a dropped one at any position, and swap adjacent images. The
/// enumeration order is shuffled by a generator seeded with `rng_seed`.
pub fn local_search<S: Scalar>(
    workload: &WorkloadInstance<S>,
    seed: &Schedule<S>,
    budget: Budget,
    rng_seed: u64,
) -> Result<Schedule<S>> {
    let mut clock = budget.start();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    local_search_with(workload, seed, &mut clock, &mut rng)
}

fn local_search_with<S: Scalar>(
    workload: &WorkloadInstance<S>,
    seed: &Schedule<S>,
    clock: &mut BudgetClock,
    rng: &mut ChaCha8Rng,
) -> Result<Schedule<S>> {
    workload.validate()?;
    let violations = validate_schedule(workload, seed)?;
    if let Some(v) = violations.first() {
        return Err(Error::InfeasibleSeed(v.to_string()));
    }
    let times = Times::new(workload);
    let start = seed.sequence();
    let seq = climb(workload, &times, start, clock, rng);
    let out = Schedule::from_slots(workload, seq.into_iter().map(Some).collect())?;
    // a non-compact seed can only gain by compaction, but keep the seed on ties
    if out.objective_value < seed.objective_value {
        return Ok(seed.clone());
    }
    Ok(out)
}

/// Greedy on seeded deadline perturbations, each followed by local search;
/// returns the best schedule. Restart 0 uses the unperturbed order.
///
/// Restart `r` draws from a generator seeded with `rng_seed + r`. All
/// restarts share one budget; restart 0 always runs.
pub fn randomized_restarts<S: Scalar>(
    workload: &WorkloadInstance<S>,
    restarts: usize,
    budget: Budget,
    rng_seed: u64,
) -> Result<Schedule<S>> {
    if restarts == 0 {
        return Err(Error::Argument("restarts must be >= 1".into()));
    }
    workload.validate()?;
    let times = Times::new(workload);
    let mut clock = budget.start();
    let mut best: Option<Schedule<S>> = None;
    for r in 0..restarts {
        if r > 0 && clock.expired() {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.wrapping_add(r as u64));
        let seed = if r == 0 {
            greedy_edf(workload)?
        } else {
            let mut keyed: Vec<(S, ImageId)> = workload
                .images
                .iter()
                .map(|im| {
                    let u = S::from_ratio(rng.gen_range(0..=100), 100);
                    (im.deadline.clone() + u * im.analysis_time.clone(), im.id)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
            let order: Vec<ImageId> = keyed.into_iter().map(|(_, id)| id).collect();
            Schedule::from_slots(workload, admit_in_order(&times, &order).into_iter().map(Some).collect())?
        };
        let s = local_search_with(workload, &seed, &mut clock, &mut rng)?;
        let better = match &best {
            None => true,
            Some(b) => s.objective_value > b.objective_value,
        };
        if better {
            best = Some(s);
        }
    }
    Ok(best.expect("restart 0 always runs"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local::solve_local;
    use crate::Rational;
    use std::collections::BTreeSet;

    fn q(n: i64) -> Rational {
        Rational::from_integer(n as i128)
    }

    fn golden() -> WorkloadInstance<Rational> {
        WorkloadInstance::from_times(&[q(2), q(3), q(5)], &[q(2), q(5), q(6)])
    }

    #[test]
    fn greedy_on_golden_instance() {
        let w = golden();
        let s = greedy_edf(&w).unwrap();
        assert_eq!(s.slots, vec![Some(1), Some(2), None]);
        assert_eq!(s.scheduled, BTreeSet::from([1, 2]));
        assert_eq!(s.first_term(&w), q(5));
    }

    #[test]
    fn greedy_admits_everything_when_loose() {
        let w = WorkloadInstance::from_times(&[q(1), q(1), q(1)], &[q(90), q(50), q(70)]);
        let s = greedy_edf(&w).unwrap();
        assert_eq!(s.slots, vec![Some(2), Some(3), Some(1)]);
    }

    #[test]
    fn greedy_single_infeasible() {
        let w = WorkloadInstance::from_times(&[q(3)], &[q(1)]);
        assert_eq!(greedy_edf(&w).unwrap().slots, vec![None]);
    }

    #[test]
    fn optimal_seed_is_unchanged() {
        let w = golden();
        let opt = solve_local(&w, Budget::unlimited()).unwrap();
        let s = local_search(&w, &opt, Budget::unlimited(), 3).unwrap();
        assert_eq!(s.slots, opt.slots);
        assert_eq!(s.objective_value, opt.objective_value);
    }

    #[test]
    fn insert_from_all_null() {
        let w = WorkloadInstance::from_times(&[q(2), q(4)], &[q(1), q(5)]);
        let seed = Schedule::from_slots(&w, vec![None, None]).unwrap();
        let s = local_search(&w, &seed, Budget::unlimited(), 0).unwrap();
        assert_eq!(s.scheduled, BTreeSet::from([2]));
        assert!(s.objective_value > seed.objective_value);
    }

    #[test]
    fn infeasible_seed_is_rejected() {
        let w = golden();
        let seed = Schedule::from_slots(&w, vec![Some(3), Some(1), None]).unwrap();
        assert!(matches!(local_search(&w, &seed, Budget::unlimited(), 0), Err(Error::InfeasibleSeed(_))));
    }

    #[test]
    fn non_compact_seed_gets_compacted() {
        let w = golden();
        let seed = Schedule::from_slots(&w, vec![None, Some(3), None]).unwrap();
        let s = local_search(&w, &seed, Budget::unlimited(), 0).unwrap();
        assert_eq!(s.slots, vec![Some(3), None, None]);
    }

    #[test]
    fn restarts_are_deterministic_and_dominate_greedy() {
        let w = WorkloadInstance::from_times(
            &[q(4), q(2), q(7), q(3), q(5)],
            &[q(6), q(3), q(12), q(9), q(10)],
        );
        let g = greedy_edf(&w).unwrap();
        let a = randomized_restarts(&w, 8, Budget::unlimited(), 11).unwrap();
        let b = randomized_restarts(&w, 8, Budget::unlimited(), 11).unwrap();
        assert_eq!(a, b);
        assert!(a.objective_value >= g.objective_value);
        let one = randomized_restarts(&w, 1, Budget::unlimited(), 11).unwrap();
        assert!(one.objective_value >= g.objective_value);
        assert!(randomized_restarts(&w, 0, Budget::unlimited(), 1).is_err());
    }
}
