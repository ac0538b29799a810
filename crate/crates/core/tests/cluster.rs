mod common;

use std::collections::BTreeSet;

use common::{q, random_workload, rng};
use mission_sched::global::{
    build_global_model, check_global_schedule, offload_round, schedule_cluster, ClusterSpec, GlobalOptions, Link,
    LocalRound, MachineSpec, ObjectiveMode, OffloadOptions,
};
use mission_sched::ilp::{brute_force_oracle, SolveStatus};
use mission_sched::local::{solve_local, ImageJob, Schedule, WorkloadInstance};
use mission_sched::{Budget, Rational};
use proptest::prelude::*;
use rand::Rng;

fn machines(ids: &[u32]) -> Vec<MachineSpec<Rational>> {
    ids.iter().map(|&i| MachineSpec::unconstrained(i)).collect()
}

fn with_slots(mut c: ClusterSpec<Rational>, slots: usize) -> ClusterSpec<Rational> {
    for m in &mut c.machines {
        m.slots_per_core = Some(slots);
    }
    c
}

/// Oracle optimum of the cluster program: value and weighted work.
fn cluster_oracle(
    w: &WorkloadInstance<Rational>,
    c: &ClusterSpec<Rational>,
    opts: &GlobalOptions<Rational>,
) -> (Rational, BTreeSet<u32>) {
    let (model, map) = build_global_model(w, c, opts).unwrap();
    let r = brute_force_oracle(&model).unwrap();
    let scheduled = map.decode(&r.assignment).into_iter().flatten().flatten().collect();
    (r.value, scheduled)
}

fn weighted(w: &WorkloadInstance<Rational>, set: &BTreeSet<u32>, pw: Rational) -> Rational {
    set.iter()
        .map(|id| {
            let im = w.get(*id).unwrap();
            if im.priority {
                pw * im.analysis_time
            } else {
                im.analysis_time
            }
        })
        .sum()
}

#[test]
fn one_machine_cluster_matches_local_model() {
    let mut r = rng(61);
    let c = ClusterSpec::new(machines(&[1]));
    let opts = GlobalOptions::default();
    for _ in 0..120 {
        let n = r.gen_range(1..=3);
        let w = random_workload(&mut r, n, 6, 10);
        let local = solve_local(&w, Budget::unlimited()).unwrap();
        let global = schedule_cluster(&w, &c, &opts, Budget::unlimited()).unwrap();
        assert_eq!(global.status, Some(SolveStatus::Optimal));
        assert_eq!(local.scheduled, global.scheduled, "{w:?}");
        let (value, _) = cluster_oracle(&w, &c, &opts);
        assert_eq!(value, local.objective_value);
        assert_eq!(global.objective_value, local.objective_value);
    }
}

#[test]
fn golden_two_machine_instance() {
    // images of the single-machine golden instance, all originating on
    // machine 1; one time unit to reach machine 2; two slots per core
    let w = WorkloadInstance::new(
        [(1, 2, 2), (2, 3, 5), (3, 5, 6)]
            .into_iter()
            .map(|(id, t, r)| ImageJob::new(id, q(t), q(r)).with_origin(1).with_size(q(1)))
            .collect(),
    );
    let c = with_slots(ClusterSpec::new(machines(&[1, 2])).with_link(1, 2, Link::Rate(q(1))), 2);
    let opts = GlobalOptions::default();
    let (model, _) = build_global_model(&w, &c, &opts).unwrap();
    assert_eq!(model.num_vars, 16);
    let (value, set) = cluster_oracle(&w, &c, &opts);
    // machine 1 runs 1 then 2, machine 2 runs 3 (1 + 5 = 6 <= 6), one null
    // at slot 2 of machine 2
    assert_eq!(value, Rational::new(1_000_002, 100_000));
    assert_eq!(set, BTreeSet::from([1, 2, 3]));
    let g = schedule_cluster(&w, &c, &opts, Budget::unlimited()).unwrap();
    assert_eq!(g.objective_value, value);
    assert_eq!(g.scheduled, set);
    let m2: Vec<_> = g.chains[&(2, 0)].iter().filter_map(|s| s.image).collect();
    assert_eq!(m2, vec![3]);
    assert_eq!(g.chains[&(2, 0)][0].finish, q(6));
    assert!(check_global_schedule(&w, &c, &opts, &g).unwrap().is_empty());
}

#[test]
fn transfer_time_is_size_over_bandwidth() {
    let c = ClusterSpec::new(machines(&[1, 2])).with_link(1, 2, Link::Rate(q(4)));
    let im = ImageJob::new(1, q(3), q(10)).with_size(q(8)).with_origin(1);
    assert_eq!(c.effective_time(&im, 2), Some(q(5)));
    assert_eq!(c.effective_time(&im, 1), Some(q(3)));
}

#[test]
fn infeasible_everywhere_drops_everything() {
    let w = WorkloadInstance::from_times(&[q(1), q(2)], &[q(0), q(0)]);
    let c = ClusterSpec::new(machines(&[1, 2]));
    let g = schedule_cluster(&w, &c, &GlobalOptions::default(), Budget::unlimited()).unwrap();
    assert!(g.scheduled.is_empty());
    assert_eq!(g.dropped, BTreeSet::from([1, 2]));
}

#[test]
fn single_image_runs_once() {
    let w = WorkloadInstance::from_times(&[q(2)], &[q(5)]);
    let c = ClusterSpec::new(machines(&[1, 2]).into_iter().map(|m| m.with_cores(2)).collect());
    let g = schedule_cluster(&w, &c, &GlobalOptions::default(), Budget::unlimited()).unwrap();
    let placed = g.chains.values().flatten().filter(|s| s.image == Some(1)).count();
    assert_eq!(placed, 1);
}

#[test]
fn adding_a_machine_never_lowers_weighted_work() {
    let mut r = rng(12);
    let opts = GlobalOptions::default();
    for _ in 0..25 {
        let n = r.gen_range(1..=3);
        let mut w = random_workload(&mut r, n, 6, 8);
        for im in &mut w.images {
            im.priority = r.gen_bool(0.3);
            im.origin_machine = 1;
        }
        let small = with_slots(ClusterSpec::new(machines(&[1])), 2);
        let big = with_slots(ClusterSpec::new(machines(&[1, 2])).with_link(1, 2, Link::Rate(q(2))), 2);
        let (_, a) = cluster_oracle(&w, &small, &opts);
        let (_, b) = cluster_oracle(&w, &big, &opts);
        assert!(weighted(&w, &b, q(10)) >= weighted(&w, &a, q(10)));
    }
}

#[test]
fn priority_image_beats_normal_ones() {
    // alone {2,3} analyse 6 > 5, but image 1 is high priority
    let w = WorkloadInstance::new(vec![
        ImageJob::new(1, q(5), q(5)).with_priority(true),
        ImageJob::new(2, q(3), q(6)),
        ImageJob::new(3, q(3), q(6)),
    ]);
    let c = ClusterSpec::new(machines(&[1]));
    let plain = GlobalOptions { priority_weight: q(1), ..GlobalOptions::default() };
    let (_, s) = cluster_oracle(&w, &c, &plain);
    assert_eq!(s, BTreeSet::from([2, 3]));
    let (_, s) = cluster_oracle(&w, &c, &GlobalOptions::default());
    assert_eq!(s, BTreeSet::from([1]));
}

#[test]
fn energy_mode_prefers_the_frugal_machine() {
    let w = WorkloadInstance::from_times(&[q(4)], &[q(10)]);
    let mut ms = machines(&[1, 2]);
    ms[0].energy_per_time = q(3);
    let c = ClusterSpec::new(ms).with_default_link(Link::Infinite);
    let opts = GlobalOptions { mode: ObjectiveMode::MinEnergyPerWork, ..GlobalOptions::default() };
    let g = schedule_cluster(&w, &c, &opts, Budget::unlimited()).unwrap();
    assert_eq!(g.chains[&(2, 0)][0].image, Some(1));
    assert_eq!(g.energy_used[&2], q(4));
    // 4 - 1/10 * 1 * 4
    assert_eq!(g.objective_value, Rational::new(36, 10));
}

#[test]
fn tight_resources_are_respected() {
    let mut r = rng(77);
    for _ in 0..30 {
        let n = r.gen_range(1..=4);
        let mut w = random_workload(&mut r, n, 5, 12);
        for im in &mut w.images {
            im.ram_need = q(r.gen_range(0..=4));
        }
        let mut ms = machines(&[1, 2]);
        for m in &mut ms {
            m.energy_budget = q(r.gen_range(0..=8));
            m.ram_capacity = q(r.gen_range(0..=4));
            m.slots_per_core = Some(2);
        }
        let c = ClusterSpec::new(ms).with_default_link(Link::Infinite);
        let opts = GlobalOptions::default();
        let g = schedule_cluster(&w, &c, &opts, Budget::unlimited()).unwrap();
        assert!(check_global_schedule(&w, &c, &opts, &g).unwrap().is_empty());
        if n <= 2 {
            let (value, _) = cluster_oracle(&w, &c, &opts);
            assert_eq!(value, g.objective_value);
        }
    }
}

fn round(machine: u32, w: WorkloadInstance<Rational>) -> LocalRound<Rational> {
    let schedule = solve_local(&w, Budget::unlimited()).unwrap();
    LocalRound { machine, workload: w, schedule }
}

#[test]
fn offload_without_drops_is_empty() {
    let r = round(1, WorkloadInstance::from_times(&[q(1)], &[q(5)]));
    let c = ClusterSpec::new(machines(&[1, 2]));
    let out = offload_round(&[r], &c, &OffloadOptions::default(), Budget::unlimited()).unwrap();
    assert!(out.offered.is_empty());
    assert!(out.global.chains.is_empty());
    assert_eq!(out.global.objective_value, q(0));
}

#[test]
fn dropped_image_moves_to_the_idle_machine() {
    // machine 1 keeps image 1; image 2 cannot follow it but fits on
    // machine 2 after a one-unit transfer
    let w = WorkloadInstance::new(vec![
        ImageJob::new(1, q(4), q(4)).with_origin(1),
        ImageJob::new(2, q(3), q(5)).with_origin(1).with_size(q(1)),
    ]);
    let r = round(1, w);
    assert_eq!(r.schedule.dropped, BTreeSet::from([2]));
    let c = ClusterSpec::new(machines(&[1, 2])).with_link(1, 2, Link::Rate(q(1)));
    let out = offload_round(&[r], &c, &OffloadOptions::default(), Budget::unlimited()).unwrap();
    assert_eq!(out.global.scheduled, BTreeSet::from([2]));
    let slot = &out.global.chains[&(2, 0)][0];
    assert_eq!((slot.image, slot.finish), (Some(2), q(4)));
    assert!(out.still_dropped.is_empty());
}

#[test]
fn transfer_longer_than_deadline_stays_dropped() {
    let w = WorkloadInstance::new(vec![
        ImageJob::new(1, q(4), q(4)).with_origin(1),
        ImageJob::new(2, q(3), q(5)).with_origin(1).with_size(q(10)),
    ]);
    let r = round(1, w);
    let c = ClusterSpec::new(machines(&[1, 2])).with_link(1, 2, Link::Rate(q(2)));
    let out = offload_round(&[r], &c, &OffloadOptions::default(), Budget::unlimited()).unwrap();
    assert_eq!(out.still_dropped, BTreeSet::from([2]));
}

#[test]
fn local_elapsed_time_shortens_deadlines() {
    let w = WorkloadInstance::new(vec![
        ImageJob::new(1, q(4), q(4)).with_origin(1),
        ImageJob::new(2, q(3), q(5)).with_origin(1).with_size(q(1)),
    ]);
    let r = round(1, w);
    let c = ClusterSpec::new(machines(&[1, 2])).with_link(1, 2, Link::Rate(q(1)));
    let opts = OffloadOptions { local_elapsed: q(2), ..OffloadOptions::default() };
    let out = offload_round(&[r], &c, &opts, Budget::unlimited()).unwrap();
    assert_eq!(out.offered.get(2).unwrap().deadline, q(3));
    assert_eq!(out.still_dropped, BTreeSet::from([2]));
}

#[test]
fn busy_single_core_origin_still_pays_transfer() {
    // machine 1 has no spare core, so it is absent from the offload
    // cluster; image 2 still has to cross the 1-2 link
    let w = WorkloadInstance::new(vec![
        ImageJob::new(1, q(4), q(4)).with_origin(1),
        ImageJob::new(2, q(3), q(5)).with_origin(1).with_size(q(3)),
    ]);
    let r = round(1, w);
    let c = ClusterSpec::new(machines(&[1, 2])).with_link(1, 2, Link::Rate(q(1)));
    let out = offload_round(&[r], &c, &OffloadOptions::default(), Budget::unlimited()).unwrap();
    let offered_to: Vec<u32> = out.cluster.as_ref().unwrap().machines.iter().map(|m| m.id).collect();
    assert_eq!(offered_to, vec![2]);
    assert_eq!(out.still_dropped, BTreeSet::from([2]));
}

#[test]
fn fallback_drops_may_return_home() {
    let w = WorkloadInstance::new(vec![ImageJob::new(1, q(2), q(5)).with_origin(1)]);
    let schedule = Schedule::all_null(&w);
    let r = LocalRound { machine: 1, workload: w, schedule };
    let c = ClusterSpec::new(machines(&[1]));
    let out = offload_round(&[r], &c, &OffloadOptions::default(), Budget::unlimited()).unwrap();
    assert_eq!(out.global.scheduled, BTreeSet::from([1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cluster_schedules_pass_the_checker(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let mut w = random_workload(&mut r, n, 6, 14);
        for im in &mut w.images {
            im.origin_machine = r.gen_range(1..=2);
            im.size = q(r.gen_range(0..=4));
            im.priority = r.gen_bool(0.25);
        }
        let c = with_slots(ClusterSpec::new(machines(&[1, 2])).with_link(1, 2, Link::Rate(q(2))), 3);
        let opts = GlobalOptions::default();
        let g = schedule_cluster(&w, &c, &opts, Budget::unlimited()).unwrap();
        prop_assert!(check_global_schedule(&w, &c, &opts, &g).unwrap().is_empty());
        prop_assert_eq!(g.scheduled.len() + g.dropped.len(), n);
    }
}
