//! Multi-machine, multi-core admission with offloading.
//!
//! Every `(machine, core)` pair runs one chain of slots, laid out as in the
//! single-machine program. An image processed away from its origin pays a
//! transfer time of `size / bandwidth` before analysis. Per-machine energy
//! and per-slot RAM limits are linear side constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::ilp::{solve_exact, IlpModel, LinearConstraint, Relation, SolveStatus};
use crate::local::{compaction_weight, ImageId, ImageJob, MachineId, Schedule, WorkloadInstance};
use crate::scalar::{max_of, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct MachineSpec<S> {
    pub id: MachineId,
    pub cores: usize,
    /// Energy units available per scheduling round.
    pub energy_budget: S,
    pub ram_capacity: S,
    /// Energy units per unit of analysis time.
    pub energy_per_time: S,
    /// Slots in each core's chain; defaults to the number of offered images.
    pub slots_per_core: Option<usize>,
}

impl<S: Scalar> MachineSpec<S> {
    /// One core, unit energy rate, no practical resource limits.
    pub fn unconstrained(id: MachineId) -> Self {
        MachineSpec {
            id,
            cores: 1,
            energy_budget: S::from_int(1_000_000_000),
            ram_capacity: S::from_int(1_000_000_000),
            energy_per_time: S::one(),
            slots_per_core: None,
        }
    }

    pub fn with_cores(mut self, cores: usize) -> Self {
        self.cores = cores;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Link<S> {
    Rate(S),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec<S> {
    pub machines: Vec<MachineSpec<S>>,
    /// Symmetric links keyed by `(min id, max id)`.
    pub links: BTreeMap<(MachineId, MachineId), Link<S>>,
    /// Used for pairs without an explicit link; `None` makes them unreachable.
    pub default_link: Option<Link<S>>,
}

impl<S: Scalar> ClusterSpec<S> {
    pub fn new(machines: Vec<MachineSpec<S>>) -> Self {
        ClusterSpec {
            machines,
            links: BTreeMap::new(),
            default_link: None,
        }
    }

    pub fn with_link(mut self, a: MachineId, b: MachineId, link: Link<S>) -> Self {
        self.links.insert((a.min(b), a.max(b)), link);
        self
    }

    pub fn with_default_link(mut self, link: Link<S>) -> Self {
        self.default_link = Some(link);
        self
    }

    pub fn machine(&self, id: MachineId) -> Option<&MachineSpec<S>> {
        self.machines.iter().find(|m| m.id == id)
    }

    pub fn bandwidth(&self, a: MachineId, b: MachineId) -> Option<Link<S>> {
        if a == b {
            return Some(Link::Infinite);
        }
        self.links
            .get(&(a.min(b), a.max(b)))
            .cloned()
            .or_else(|| self.default_link.clone())
    }

    pub fn energy_per_time(&self, m: MachineId) -> S {
        self.machine(m).map(|x| x.energy_per_time.clone()).unwrap_or_else(S::zero)
    }

    /// Transfer time of `image` to machine `m`; `None` when unreachable.
    /// Origin 0 means the image has no origin and transfers for free. The
    /// origin itself need not be in the cluster (it may have no core to
    /// spare), but its links still apply.
    pub fn transfer_time(&self, image: &ImageJob<S>, m: MachineId) -> Option<S> {
        if image.origin_machine == m || image.origin_machine == 0 {
            return Some(S::zero());
        }
        match self.bandwidth(image.origin_machine, m)? {
            Link::Infinite => Some(S::zero()),
            Link::Rate(r) => Some(image.size.clone() / r),
        }
    }

    /// Transfer plus analysis time of `image` on machine `m`.
    pub fn effective_time(&self, image: &ImageJob<S>, m: MachineId) -> Option<S> {
        self.transfer_time(image, m).map(|t| t + image.analysis_time.clone())
    }

    pub fn total_cores(&self) -> usize {
        self.machines.iter().map(|m| m.cores).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.machines.is_empty() {
            return Err(Error::Cluster("cluster has no machines".into()));
        }
        let mut ids = BTreeSet::new();
        for m in &self.machines {
            if !ids.insert(m.id) {
                return Err(Error::Cluster(format!("duplicate machine id {}", m.id)));
            }
            if m.cores == 0 {
                return Err(Error::Cluster(format!("machine {}: cores must be >= 1", m.id)));
            }
            if m.energy_budget.is_negative() || m.ram_capacity.is_negative() || m.energy_per_time.is_negative() {
                return Err(Error::Cluster(format!("machine {}: budgets must be >= 0", m.id)));
            }
        }
        let links = self.links.values().chain(self.default_link.iter());
        for l in links {
            if let Link::Rate(r) = l {
                if !r.is_positive() {
                    return Err(Error::Cluster("bandwidth must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveMode {
    MaxComputation,
    MinEnergyPerWork,
}

impl fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveMode::MaxComputation => "max_computation",
            ObjectiveMode::MinEnergyPerWork => "min_energy_per_work",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOptions<S> {
    pub mode: ObjectiveMode,
    /// Weight of high-priority images in the objective.
    pub priority_weight: S,
    /// Energy trade-off in `MinEnergyPerWork` mode.
    pub lambda: S,
    /// `(image, machine)` pairs the image may not run on.
    pub excluded: BTreeSet<(ImageId, MachineId)>,
}

impl<S: Scalar> Default for GlobalOptions<S> {
    fn default() -> Self {
        GlobalOptions {
            mode: ObjectiveMode::MaxComputation,
            priority_weight: S::from_int(10),
            lambda: S::from_ratio(1, 10),
            excluded: BTreeSet::new(),
        }
    }
}

impl<S: Scalar> GlobalOptions<S> {
    fn weight(&self, im: &ImageJob<S>) -> S {
        if im.priority {
            self.priority_weight.clone()
        } else {
            S::one()
        }
    }
}

/// Flat indexing for `b[m,c,i,j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalVarMap {
    /// `(machine, core)` of each chain.
    pub chains: Vec<(MachineId, usize)>,
    pub chain_slots: Vec<usize>,
    pub offsets: Vec<usize>,
    pub ids: Vec<ImageId>,
}

impl GlobalVarMap {
    pub fn positions(&self) -> usize {
        self.ids.len() + 1
    }

    pub fn num_vars(&self) -> usize {
        self.chains
            .len()
            .checked_sub(1)
            .map(|last| self.offsets[last] + self.chain_slots[last] * self.positions())
            .unwrap_or(0)
    }

    /// `slot` is 1-based; position 0 is the chain's null image.
    pub fn index(&self, chain: usize, slot: usize, pos: usize) -> usize {
        self.offsets[chain] + (slot - 1) * self.positions() + pos
    }

    pub fn decode(&self, assignment: &[bool]) -> Vec<Vec<Option<ImageId>>> {
        (0..self.chains.len())
            .map(|c| {
                (1..=self.chain_slots[c])
                    .map(|i| {
                        (1..self.positions())
                            .find(|&p| assignment[self.index(c, i, p)])
                            .map(|p| self.ids[p - 1])
                    })
                    .collect()
            })
            .collect()
    }
}

/// Builds the cluster-wide admission program.
pub fn build_global_model<S: Scalar>(
    offered: &WorkloadInstance<S>,
    cluster: &ClusterSpec<S>,
    opts: &GlobalOptions<S>,
) -> Result<(IlpModel<S>, GlobalVarMap)> {
    offered.validate()?;
    cluster.validate()?;
    let n = offered.len();
    let mut chains = Vec::new();
    let mut chain_slots = Vec::new();
    let mut offsets = Vec::new();
    let mut next = 0;
    for m in &cluster.machines {
        let slots = m.slots_per_core.unwrap_or(n);
        for c in 0..m.cores {
            chains.push((m.id, c));
            chain_slots.push(slots);
            offsets.push(next);
            next += slots * (n + 1);
        }
    }
    let map = GlobalVarMap {
        chains,
        chain_slots,
        offsets,
        ids: offered.images.iter().map(|im| im.id).collect(),
    };
    let nv = map.num_vars();
    let w = compaction_weight::<S>();

    // effective times; None = image may not run on that machine
    let eff: BTreeMap<(usize, MachineId), Option<S>> = offered
        .images
        .iter()
        .enumerate()
        .flat_map(|(p, im)| {
            cluster.machines.iter().map(move |m| {
                let e = if opts.excluded.contains(&(im.id, m.id)) {
                    None
                } else {
                    cluster.effective_time(im, m.id)
                };
                ((p, m.id), e)
            })
        })
        .collect();
    let big = offered.images.iter().enumerate().fold(S::zero(), |acc, (p, _)| {
        let worst = cluster
            .machines
            .iter()
            .filter_map(|m| eff[&(p, m.id)].clone())
            .fold(S::zero(), max_of);
        acc + worst
    });

    let mut objective = vec![S::zero(); nv];
    let mut labels = vec![String::new(); nv];
    let mut forbidden = Vec::new();
    for (c, &(mid, core)) in map.chains.iter().enumerate() {
        let e_rate = cluster.energy_per_time(mid);
        for i in 1..=map.chain_slots[c] {
            let null = map.index(c, i, 0);
            labels[null] = format!("b[{mid},{core},{i},0]");
            if opts.mode == ObjectiveMode::MaxComputation {
                objective[null] = w.clone() * S::from_int(i as i64);
            }
            for (p, im) in offered.images.iter().enumerate() {
                let v = map.index(c, i, p + 1);
                labels[v] = format!("b[{mid},{core},{i},{}]", im.id);
                let work = opts.weight(im) * im.analysis_time.clone();
                objective[v] = match opts.mode {
                    ObjectiveMode::MaxComputation => work,
                    ObjectiveMode::MinEnergyPerWork => {
                        work - opts.lambda.clone() * e_rate.clone() * im.analysis_time.clone()
                    }
                };
                if eff[&(p, mid)].is_none() {
                    forbidden.push((v, S::one()));
                }
            }
        }
    }
    let mut model = IlpModel::new(objective);
    model.var_labels = Some(labels);

    for c in 0..map.chains.len() {
        for i in 1..=map.chain_slots[c] {
            let terms: Vec<(usize, S)> = (0..=n).map(|p| (map.index(c, i, p), S::one())).collect();
            model.push(LinearConstraint::sparse(nv, &terms, Relation::Eq, S::one()));
        }
    }
    for p in 1..=n {
        let terms: Vec<(usize, S)> = (0..map.chains.len())
            .flat_map(|c| (1..=map.chain_slots[c]).map(move |i| (c, i)))
            .map(|(c, i)| (map.index(c, i, p), S::one()))
            .collect();
        model.push(LinearConstraint::sparse(nv, &terms, Relation::Le, S::one()));
    }
    for (c, &(mid, _)) in map.chains.iter().enumerate() {
        for i in 1..=map.chain_slots[c] {
            let mut terms = Vec::new();
            for k in 1..=i {
                for (p, _) in offered.images.iter().enumerate() {
                    if let Some(e) = &eff[&(p, mid)] {
                        terms.push((map.index(c, k, p + 1), e.clone()));
                    }
                }
            }
            for (p, im) in offered.images.iter().enumerate() {
                terms.push((map.index(c, i, p + 1), -im.deadline.clone()));
            }
            terms.push((map.index(c, i, 0), -big.clone()));
            model.push(LinearConstraint::sparse(nv, &terms, Relation::Le, S::zero()));
        }
    }
    for m in &cluster.machines {
        let e_rate = cluster.energy_per_time(m.id);
        let mut terms = Vec::new();
        for (c, &(mid, _)) in map.chains.iter().enumerate() {
            if mid != m.id {
                continue;
            }
            for i in 1..=map.chain_slots[c] {
                for (p, im) in offered.images.iter().enumerate() {
                    terms.push((map.index(c, i, p + 1), e_rate.clone() * im.analysis_time.clone()));
                }
            }
        }
        model.push(LinearConstraint::sparse(nv, &terms, Relation::Le, m.energy_budget.clone()));
    }
    for m in &cluster.machines {
        let chains: Vec<usize> = (0..map.chains.len()).filter(|&c| map.chains[c].0 == m.id).collect();
        let slots = chains.iter().map(|&c| map.chain_slots[c]).max().unwrap_or(0);
        for i in 1..=slots {
            let mut terms = Vec::new();
            for &c in &chains {
                if i > map.chain_slots[c] {
                    continue;
                }
                for (p, im) in offered.images.iter().enumerate() {
                    terms.push((map.index(c, i, p + 1), im.ram_need.clone()));
                }
            }
            model.push(LinearConstraint::sparse(nv, &terms, Relation::Le, m.ram_capacity.clone()));
        }
    }
    if !forbidden.is_empty() {
        model.push(LinearConstraint::sparse(nv, &forbidden, Relation::Le, S::zero()));
    }
    Ok((model, map))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSlot<S> {
    pub image: Option<ImageId>,
    pub start: S,
    pub finish: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSchedule<S> {
    pub chains: BTreeMap<(MachineId, usize), Vec<ChainSlot<S>>>,
    pub scheduled: BTreeSet<ImageId>,
    pub dropped: BTreeSet<ImageId>,
    pub objective_value: S,
    pub objective_mode: ObjectiveMode,
    /// Σ energy_per_time · T over images assigned to each machine.
    pub energy_used: BTreeMap<MachineId, S>,
    pub status: Option<SolveStatus>,
    pub fallback: bool,
}

impl<S: Scalar> GlobalSchedule<S> {
    /// A schedule over no chains with every offered image dropped.
    pub fn empty(offered: &WorkloadInstance<S>, mode: ObjectiveMode) -> Self {
        GlobalSchedule {
            chains: BTreeMap::new(),
            scheduled: BTreeSet::new(),
            dropped: offered.ids(),
            objective_value: S::zero(),
            objective_mode: mode,
            energy_used: BTreeMap::new(),
            status: None,
            fallback: false,
        }
    }

    fn from_chains(
        offered: &WorkloadInstance<S>,
        cluster: &ClusterSpec<S>,
        opts: &GlobalOptions<S>,
        map: &GlobalVarMap,
        decoded: Vec<Vec<Option<ImageId>>>,
    ) -> Self {
        let mut chains = BTreeMap::new();
        let mut scheduled = BTreeSet::new();
        let mut energy_used: BTreeMap<MachineId, S> =
            cluster.machines.iter().map(|m| (m.id, S::zero())).collect();
        for (c, slots) in decoded.into_iter().enumerate() {
            let (mid, core) = map.chains[c];
            let mut t = S::zero();
            let mut out = Vec::with_capacity(slots.len());
            for s in slots {
                let start = t.clone();
                if let Some(id) = s {
                    let im = offered.get(id).expect("decoded id comes from the workload");
                    t = t + cluster.effective_time(im, mid).unwrap_or_else(S::zero);
                    let e = energy_used.get_mut(&mid).unwrap();
                    *e = e.clone() + cluster.energy_per_time(mid) * im.analysis_time.clone();
                    scheduled.insert(id);
                }
                out.push(ChainSlot { image: s, start, finish: t.clone() });
            }
            chains.insert((mid, core), out);
        }
        let dropped = offered.ids().difference(&scheduled).copied().collect();
        GlobalSchedule {
            chains,
            scheduled,
            dropped,
            objective_value: S::zero(),
            objective_mode: opts.mode,
            energy_used,
            status: None,
            fallback: false,
        }
    }

    /// Σ w_j · T_j over scheduled images.
    pub fn weighted_work(&self, offered: &WorkloadInstance<S>, priority_weight: &S) -> S {
        self.scheduled
            .iter()
            .filter_map(|id| offered.get(*id))
            .fold(S::zero(), |acc, im| {
                let w = if im.priority { priority_weight.clone() } else { S::one() };
                acc + w * im.analysis_time.clone()
            })
    }

    /// Total analysis time of scheduled images.
    pub fn work(&self, offered: &WorkloadInstance<S>) -> S {
        self.weighted_work(offered, &S::one())
    }
}

/// Solves the cluster program and decodes every chain.
pub fn schedule_cluster<S: Scalar>(
    offered: &WorkloadInstance<S>,
    cluster: &ClusterSpec<S>,
    opts: &GlobalOptions<S>,
    budget: Budget,
) -> Result<GlobalSchedule<S>> {
    cluster.validate()?;
    offered.validate()?;
    if offered.is_empty() {
        return Ok(GlobalSchedule::empty(offered, opts.mode));
    }
    let (model, map) = build_global_model(offered, cluster, opts)?;
    let result = solve_exact(&model, budget)?;
    let (decoded, fallback) = if result.status.has_assignment() {
        (map.decode(&result.assignment), false)
    } else {
        (map.chain_slots.iter().map(|&k| vec![None; k]).collect(), true)
    };
    let mut gs = GlobalSchedule::from_chains(offered, cluster, opts, &map, decoded);
    gs.objective_value = if fallback {
        let mut all_null = vec![false; model.num_vars];
        for c in 0..map.chains.len() {
            for i in 1..=map.chain_slots[c] {
                all_null[map.index(c, i, 0)] = true;
            }
        }
        model.evaluate(&all_null)
    } else {
        result.value
    };
    gs.status = Some(result.status);
    gs.fallback = fallback;
    Ok(gs)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GlobalViolation<S> {
    UnknownChain { machine: MachineId, core: usize },
    AtMostOnce { image: ImageId, count: usize },
    Forbidden { image: ImageId, machine: MachineId },
    Deadline { machine: MachineId, core: usize, slot: usize, image: ImageId, finish: S },
    Energy { machine: MachineId, used: S },
    Ram { machine: MachineId, slot: usize, used: S },
    Timing { machine: MachineId, core: usize, slot: usize },
    Partition { image: ImageId },
}

impl<S: Scalar> fmt::Display for GlobalViolation<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalViolation::UnknownChain { machine, core } => write!(f, "unknown chain {machine}/{core}"),
            GlobalViolation::AtMostOnce { image, count } => {
                write!(f, "at-most-once: image {image} placed {count} times")
            }
            GlobalViolation::Forbidden { image, machine } => {
                write!(f, "placement: image {image} may not run on machine {machine}")
            }
            GlobalViolation::Deadline { machine, core, slot, image, finish } => write!(
                f,
                "deadline: machine {machine} core {core} slot {slot} image {image} finishes at {}",
                finish.to_plain_string()
            ),
            GlobalViolation::Energy { machine, used } => {
                write!(f, "energy: machine {machine} uses {}", used.to_plain_string())
            }
            GlobalViolation::Ram { machine, slot, used } => {
                write!(f, "ram: machine {machine} slot {slot} needs {}", used.to_plain_string())
            }
            GlobalViolation::Timing { machine, core, slot } => {
                write!(f, "timing: machine {machine} core {core} slot {slot} start/finish mismatch")
            }
            GlobalViolation::Partition { image } => write!(f, "partition: image {image}"),
        }
    }
}

/// Independent check of a cluster schedule: placement, deadlines, energy,
/// RAM and bookkeeping.
pub fn check_global_schedule<S: Scalar>(
    offered: &WorkloadInstance<S>,
    cluster: &ClusterSpec<S>,
    opts: &GlobalOptions<S>,
    schedule: &GlobalSchedule<S>,
) -> Result<Vec<GlobalViolation<S>>> {
    let tol = S::tolerance();
    let mut out = Vec::new();
    let mut count: BTreeMap<ImageId, usize> = BTreeMap::new();
    let mut energy: BTreeMap<MachineId, S> = BTreeMap::new();
    let mut ram: BTreeMap<(MachineId, usize), S> = BTreeMap::new();
    for (&(mid, core), slots) in &schedule.chains {
        let Some(machine) = cluster.machine(mid) else {
            out.push(GlobalViolation::UnknownChain { machine: mid, core });
            continue;
        };
        if core >= machine.cores {
            out.push(GlobalViolation::UnknownChain { machine: mid, core });
        }
        let mut t = S::zero();
        for (k, slot) in slots.iter().enumerate() {
            if (slot.start.clone() - t.clone()).abs() > tol {
                out.push(GlobalViolation::Timing { machine: mid, core, slot: k + 1 });
            }
            let Some(id) = slot.image else {
                continue;
            };
            let im = offered.get(id).ok_or(Error::UnknownImage(id))?;
            *count.entry(id).or_default() += 1;
            if opts.excluded.contains(&(id, mid)) {
                out.push(GlobalViolation::Forbidden { image: id, machine: mid });
            }
            let Some(transfer) = cluster.transfer_time(im, mid) else {
                out.push(GlobalViolation::Forbidden { image: id, machine: mid });
                continue;
            };
            t = t + transfer + im.analysis_time.clone();
            if (slot.finish.clone() - t.clone()).abs() > tol {
                out.push(GlobalViolation::Timing { machine: mid, core, slot: k + 1 });
            }
            if t > im.deadline.clone() + tol.clone() {
                out.push(GlobalViolation::Deadline {
                    machine: mid,
                    core,
                    slot: k + 1,
                    image: id,
                    finish: t.clone(),
                });
            }
            let e = energy.entry(mid).or_insert_with(S::zero);
            *e = e.clone() + machine.energy_per_time.clone() * im.analysis_time.clone();
            let r = ram.entry((mid, k + 1)).or_insert_with(S::zero);
            *r = r.clone() + im.ram_need.clone();
        }
    }
    for (id, c) in &count {
        if *c > 1 {
            out.push(GlobalViolation::AtMostOnce { image: *id, count: *c });
        }
    }
    for (mid, used) in energy {
        let budget = cluster.machine(mid).map(|m| m.energy_budget.clone()).unwrap_or_else(S::zero);
        if used > budget + tol.clone() {
            out.push(GlobalViolation::Energy { machine: mid, used });
        }
    }
    for ((mid, slot), used) in ram {
        let cap = cluster.machine(mid).map(|m| m.ram_capacity.clone()).unwrap_or_else(S::zero);
        if used > cap + tol.clone() {
            out.push(GlobalViolation::Ram { machine: mid, slot, used });
        }
    }
    for im in &offered.images {
        let placed = count.contains_key(&im.id);
        let s = schedule.scheduled.contains(&im.id);
        let d = schedule.dropped.contains(&im.id);
        if s == d || s != placed {
            out.push(GlobalViolation::Partition { image: im.id });
        }
    }
    Ok(out)
}

/// One machine's local admission round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRound<S> {
    pub machine: MachineId,
    pub workload: WorkloadInstance<S>,
    pub schedule: Schedule<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffloadOptions<S> {
    pub global: GlobalOptions<S>,
    /// Time already spent in the local round; subtracted from deadlines.
    pub local_elapsed: S,
}

impl<S: Scalar> Default for OffloadOptions<S> {
    fn default() -> Self {
        OffloadOptions {
            global: GlobalOptions::default(),
            local_elapsed: S::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffloadOutcome<S> {
    /// Images dropped locally, with rebased deadlines and exclusions applied.
    pub offered: WorkloadInstance<S>,
    /// The cluster actually offered to the global solver.
    pub cluster: Option<ClusterSpec<S>>,
    pub options: GlobalOptions<S>,
    pub global: GlobalSchedule<S>,
    pub still_dropped: BTreeSet<ImageId>,
}

/// Reschedules the images that local rounds dropped.
///
/// A machine whose local chain runs anything has one core less to offer. An
/// image dropped by a completed local solve may not return to its origin in
/// this round; images dropped by a budget fallback may.
pub fn offload_round<S: Scalar>(
    local: &[LocalRound<S>],
    cluster: &ClusterSpec<S>,
    opts: &OffloadOptions<S>,
    budget: Budget,
) -> Result<OffloadOutcome<S>> {
    let mut images = Vec::new();
    let mut global_opts = opts.global.clone();
    let mut busy: BTreeMap<MachineId, usize> = BTreeMap::new();
    for round in local {
        if !round.schedule.scheduled.is_empty() {
            *busy.entry(round.machine).or_default() += 1;
        }
        for id in &round.schedule.dropped {
            let im = round.workload.get(*id).ok_or(Error::UnknownImage(*id))?;
            let mut im = im.clone();
            if im.origin_machine == 0 {
                im.origin_machine = round.machine;
            }
            im.deadline = im.deadline.clone() - opts.local_elapsed.clone();
            if im.deadline.is_negative() {
                im.deadline = S::zero();
            }
            if !round.schedule.fallback {
                global_opts.excluded.insert((im.id, round.machine));
            }
            images.push(im);
        }
    }
    let offered = WorkloadInstance::new(images);
    offered.validate()?;

    let machines: Vec<MachineSpec<S>> = cluster
        .machines
        .iter()
        .filter_map(|m| {
            let used = busy.get(&m.id).copied().unwrap_or(0);
            (m.cores > used).then(|| {
                let mut m = m.clone();
                m.cores -= used;
                m
            })
        })
        .collect();
    let remaining = ClusterSpec {
        machines,
        links: cluster.links.clone(),
        default_link: cluster.default_link.clone(),
    };

    if offered.is_empty() || remaining.machines.is_empty() {
        let global = GlobalSchedule::empty(&offered, global_opts.mode);
        return Ok(OffloadOutcome {
            still_dropped: global.dropped.clone(),
            offered,
            cluster: None,
            options: global_opts,
            global,
        });
    }
    let global = schedule_cluster(&offered, &remaining, &global_opts, budget)?;
    Ok(OffloadOutcome {
        still_dropped: global.dropped.clone(),
        offered,
        cluster: Some(remaining),
        options: global_opts,
        global,
    })
}
