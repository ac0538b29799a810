#![allow(dead_code)]

use mission_sched::ilp::{brute_force_oracle, IlpModel, LinearConstraint, Relation};
use mission_sched::local::{build_local_model, ImageJob, Schedule, WorkloadInstance};
use mission_sched::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn q(n: i64) -> Rational {
    Rational::from_integer(n as i128)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random 0-1 program with mixed relations and, sometimes, an exactly-one
/// group so the clique logic gets exercised.
pub fn random_model(r: &mut ChaCha8Rng, max_vars: usize) -> IlpModel<Rational> {
    let n = r.gen_range(1..=max_vars);
    let obj: Vec<Rational> = (0..n)
        .map(|_| Rational::new(r.gen_range(-12..=20), r.gen_range(1..=4)))
        .collect();
    let mut m = IlpModel::new(obj);
    for _ in 0..r.gen_range(0..=5) {
        let coeffs: Vec<Rational> = (0..n)
            .map(|_| if r.gen_bool(0.6) { q(r.gen_range(-4..=6)) } else { q(0) })
            .collect();
        let rel = match r.gen_range(0..6) {
            0 => Relation::Eq,
            1 => Relation::Ge,
            _ => Relation::Le,
        };
        let bound = match rel {
            Relation::Eq => {
                // reachable by some assignment most of the time
                let pick: Rational = coeffs.iter().filter(|_| r.gen_bool(0.5)).cloned().sum();
                pick
            }
            _ => q(r.gen_range(-3..=12)),
        };
        m.push(LinearConstraint::new(coeffs, rel, bound));
    }
    if n >= 3 && r.gen_bool(0.4) {
        let k = r.gen_range(2..=n.min(5));
        let start = r.gen_range(0..=n - k);
        let coeffs: Vec<Rational> = (0..n).map(|v| if v >= start && v < start + k { q(1) } else { q(0) }).collect();
        let rel = if r.gen_bool(0.5) { Relation::Eq } else { Relation::Le };
        m.push(LinearConstraint::new(coeffs, rel, q(1)));
    }
    m
}

/// Integer analysis times in `1..=tmax` and deadlines in `0..=rmax`.
pub fn random_workload(r: &mut ChaCha8Rng, n: usize, tmax: i64, rmax: i64) -> WorkloadInstance<Rational> {
    let images = (1..=n as u32)
        .map(|id| ImageJob::new(id, q(r.gen_range(1..=tmax)), q(r.gen_range(0..=rmax))))
        .collect();
    WorkloadInstance::new(images)
}

/// Like [`random_workload`] with fractional times (quarters).
pub fn random_fractional_workload(r: &mut ChaCha8Rng, n: usize) -> WorkloadInstance<Rational> {
    let images = (1..=n as u32)
        .map(|id| {
            ImageJob::new(
                id,
                Rational::new(r.gen_range(1..=24), 4),
                Rational::new(r.gen_range(0..=60), 4),
            )
        })
        .collect();
    WorkloadInstance::new(images)
}

/// Optimum of the admission program by exhaustive enumeration.
pub fn local_oracle(w: &WorkloadInstance<Rational>) -> Schedule<Rational> {
    let (model, map) = build_local_model(w).unwrap();
    let r = brute_force_oracle(&model).unwrap();
    assert!(r.status.has_assignment(), "admission program is always feasible");
    Schedule::from_slots(w, map.decode(&r.assignment)).unwrap()
}

pub fn golden() -> WorkloadInstance<Rational> {
    WorkloadInstance::from_times(&[q(2), q(3), q(5)], &[q(2), q(5), q(6)])
}
