//! Scenario files, rolling-horizon simulation and reports.

pub mod formats;
pub mod stream;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::approx::{greedy_edf, local_search, randomized_restarts};
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::global::{offload_round, ClusterSpec, GlobalOptions, LocalRound, ObjectiveMode, OffloadOptions};
use crate::ilp::SolveStatus;
use crate::local::{solve_local, MachineId, Schedule, WorkloadInstance};
use crate::mission::{classify_with, Algorithm};
use crate::scalar::Scalar;

pub use formats::{
    parse_cluster, parse_sections, parse_workload_csv, read_cluster, read_workload_csv, render_global_schedule,
    render_local_schedule, write_workload_csv,
};
pub use stream::{generate_frame_stream, Frame, FrameStream, RoundBatch, StreamSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Exact,
    Greedy,
    LocalSearch,
    Randomized,
}

impl SolverChoice {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(SolverChoice::Exact),
            "greedy" => Some(SolverChoice::Greedy),
            "local_search" | "local-search" => Some(SolverChoice::LocalSearch),
            "randomized" => Some(SolverChoice::Randomized),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverChoice::Exact => "exact",
            SolverChoice::Greedy => "greedy",
            SolverChoice::LocalSearch => "local_search",
            SolverChoice::Randomized => "randomized",
        }
    }

    pub fn algorithm(self, restarts: usize, rng_seed: u64) -> Algorithm {
        match self {
            SolverChoice::Exact => Algorithm::Exact,
            SolverChoice::Greedy => Algorithm::Greedy,
            SolverChoice::LocalSearch => Algorithm::LocalSearch { rng_seed },
            SolverChoice::Randomized => Algorithm::Randomized { restarts, rng_seed },
        }
    }
}

/// Solves one single-chain admission problem with the chosen algorithm.
pub fn solve_with<S: Scalar>(
    workload: &WorkloadInstance<S>,
    solver: SolverChoice,
    budget: Budget,
    restarts: usize,
    rng_seed: u64,
) -> Result<Schedule<S>> {
    match solver {
        SolverChoice::Exact => solve_local(workload, budget),
        SolverChoice::Greedy => greedy_edf(workload),
        SolverChoice::LocalSearch => {
            let seed = greedy_edf(workload)?;
            local_search(workload, &seed, budget, rng_seed)
        }
        SolverChoice::Randomized => randomized_restarts(workload, restarts, budget, rng_seed),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource<S> {
    /// One batch offered at time zero, deadlines as given.
    Explicit(WorkloadInstance<S>),
    Stream(StreamSpec<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<S> {
    pub source: WorkloadSource<S>,
    pub cluster: ClusterSpec<S>,
    pub solver: SolverChoice,
    pub restarts: usize,
    /// Wall-clock limit per solver call. Leave unset for byte-identical
    /// reports; `node_limit` bounds the work deterministically.
    pub mission_budget: Option<Duration>,
    pub node_limit: Option<u64>,
    pub epsilon: S,
    pub mode: ObjectiveMode,
    pub lambda: S,
    pub priority_weight: S,
    pub rng_seed: u64,
    pub round_ms: S,
    /// Classify every local round against an offline reference.
    pub verdicts: bool,
    pub oracle_node_limit: u64,
}

impl<S: Scalar> Scenario<S> {
    pub fn new(source: WorkloadSource<S>, cluster: ClusterSpec<S>) -> Self {
        Scenario {
            source,
            cluster,
            solver: SolverChoice::Exact,
            restarts: 8,
            mission_budget: None,
            node_limit: Some(2_000),
            epsilon: S::from_ratio(1, 100),
            mode: ObjectiveMode::MaxComputation,
            lambda: S::from_ratio(1, 10),
            priority_weight: S::from_int(10),
            rng_seed: 0,
            round_ms: S::from_int(250),
            verdicts: false,
            oracle_node_limit: 1_000_000,
        }
    }

    pub fn budget(&self) -> Budget {
        Budget {
            time: self.mission_budget,
            nodes: self.node_limit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        if !self.round_ms.is_positive() {
            return Err(Error::Argument("round_ms must be > 0".into()));
        }
        if !self.epsilon.is_positive() {
            return Err(Error::Argument("epsilon must be > 0".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Argument("restarts must be >= 1".into()));
        }
        let known: BTreeSet<MachineId> = self.cluster.machines.iter().map(|m| m.id).collect();
        match &self.source {
            WorkloadSource::Explicit(w) => {
                w.validate()?;
                for im in &w.images {
                    if im.origin_machine != 0 && !known.contains(&im.origin_machine) {
                        return Err(Error::Workload(format!(
                            "image {}: origin machine {} is not in the cluster",
                            im.id, im.origin_machine
                        )));
                    }
                }
            }
            WorkloadSource::Stream(s) => {
                s.validate()?;
                if !known.contains(&s.origin) {
                    return Err(Error::Argument(format!("stream origin {} is not in the cluster", s.origin)));
                }
            }
        }
        Ok(())
    }
}

/// Scenario file; relative paths resolve against the scenario's directory.
///
/// ```text
/// [scenario]
/// cluster = cluster.txt
/// solver = exact            # exact | greedy | local_search | randomized
/// node_limit = 2000
/// round_ms = 250
/// [stream]                  # or `workload = jobs.csv` under [scenario]
/// rate_hz = 60
/// duration_ms = 10000
/// analysis_ms = 50
/// latency_ms = 500
/// ```
pub fn parse_scenario<S: Scalar>(text: &str, path: &Path) -> Result<Scenario<S>> {
    let sections = parse_sections(text, path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut scen = None;
    let mut stream = None;
    for sec in &sections {
        match sec.name.as_str() {
            "" if sec.is_empty() => {}
            "scenario" => scen = Some(sec),
            "stream" => stream = Some(sec),
            "" => return Err(parse_err(1, "settings must follow a [scenario] or [stream] header".into())),
            other => return Err(parse_err(sec.line, format!("unknown section [{other}]"))),
        }
    }
    let scen = scen.ok_or_else(|| parse_err(1, "missing [scenario] section".into()))?;
    scen.reject_unknown(&[
        "cluster",
        "workload",
        "solver",
        "restarts",
        "mission_budget_ms",
        "node_limit",
        "epsilon",
        "objective",
        "lambda",
        "priority_weight",
        "rng_seed",
        "round_ms",
        "verdicts",
        "oracle_node_limit",
    ])?;
    let cluster_path = resolve(scen.require("cluster")?);
    let cluster = read_cluster::<S>(&cluster_path)?;
    let rng_seed = scen.integer::<u64>("rng_seed")?.unwrap_or(0);

    let source = match (scen.text("workload"), stream) {
        (Some(_), Some(st)) => {
            return Err(parse_err(st.line, "give either `workload` or a [stream] section, not both".into()))
        }
        (None, None) => return Err(parse_err(scen.line, "no workload: set `workload` or add a [stream] section".into())),
        (Some(w), None) => WorkloadSource::Explicit(read_workload_csv(&resolve(w))?),
        (None, Some(st)) => {
            st.reject_unknown(&[
                "rate_hz",
                "duration_ms",
                "analysis_ms",
                "analysis_max_ms",
                "latency_ms",
                "priority_interval",
                "size",
                "ram",
                "origin",
            ])?;
            let need = |k: &str, strict: bool| -> Result<S> {
                st.nonneg::<S>(k, strict)?
                    .ok_or_else(|| parse_err(st.line, format!("[stream] needs `{k}`")))
            };
            let mut spec = StreamSpec::new(
                need("rate_hz", true)?,
                need("duration_ms", false)?,
                need("analysis_ms", true)?,
                need("latency_ms", false)?,
            );
            spec.analysis_max_ms = st.nonneg("analysis_max_ms", true)?;
            if let Some(hi) = &spec.analysis_max_ms {
                if *hi < spec.analysis_ms {
                    return Err(parse_err(st.line_of("analysis_max_ms"), "analysis_max_ms must be >= analysis_ms".into()));
                }
            }
            if let Some(p) = st.integer("priority_interval")? {
                spec.priority_interval = p;
            }
            if let Some(s) = st.nonneg("size", false)? {
                spec.size = s;
            }
            if let Some(r) = st.nonneg("ram", false)? {
                spec.ram = r;
            }
            spec.origin = st
                .integer("origin")?
                .unwrap_or_else(|| cluster.machines.first().map(|m| m.id).unwrap_or(1));
            spec.rng_seed = rng_seed;
            WorkloadSource::Stream(spec)
        }
    };

    let mut out = Scenario::new(source, cluster);
    out.rng_seed = rng_seed;
    if let Some(s) = scen.text("solver") {
        out.solver = SolverChoice::parse(s)
            .ok_or_else(|| parse_err(scen.line_of("solver"), format!("unknown solver `{s}`")))?;
    }
    if let Some(r) = scen.integer::<usize>("restarts")? {
        if r == 0 {
            return Err(parse_err(scen.line_of("restarts"), "restarts must be >= 1".into()));
        }
        out.restarts = r;
    }
    if let Some(ms) = scen.integer::<u64>("mission_budget_ms")? {
        out.mission_budget = Some(Duration::from_millis(ms));
    }
    if let Some(n) = scen.integer::<u64>("node_limit")? {
        out.node_limit = Some(n);
    }
    if let Some(e) = scen.nonneg("epsilon", true)? {
        out.epsilon = e;
    }
    if let Some(m) = scen.text("objective") {
        out.mode = match m {
            "max_computation" => ObjectiveMode::MaxComputation,
            "min_energy_per_work" => ObjectiveMode::MinEnergyPerWork,
            _ => return Err(parse_err(scen.line_of("objective"), format!("unknown objective `{m}`"))),
        };
    }
    if let Some(l) = scen.nonneg("lambda", false)? {
        out.lambda = l;
    }
    if let Some(w) = scen.nonneg("priority_weight", false)? {
        out.priority_weight = w;
    }
    if let Some(r) = scen.nonneg("round_ms", true)? {
        out.round_ms = r;
    }
    if let Some(v) = scen.boolean("verdicts")? {
        out.verdicts = v;
    }
    if let Some(n) = scen.integer::<u64>("oracle_node_limit")? {
        out.oracle_node_limit = n;
    }
    out.validate().map_err(|e| parse_err(scen.line, e.to_string()))?;
    Ok(out)
}

pub fn read_scenario<S: Scalar>(path: &Path) -> Result<Scenario<S>> {
    parse_scenario(&formats::read_text(path)?, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics<S> {
    pub round: usize,
    pub start: S,
    pub offered: usize,
    pub scheduled_local: usize,
    pub offloaded: usize,
    pub dropped: usize,
    pub high_priority_offered: usize,
    pub high_priority_dropped: usize,
    /// Local objectives plus the offload objective.
    pub objective: S,
    /// Busy time over round length times total cores.
    pub utilization: S,
    pub energy: BTreeMap<MachineId, S>,
    pub work: S,
    /// Solver calls that stopped on their budget.
    pub budget_exhausted: usize,
    pub dropped_ids: BTreeSet<u32>,
}

impl<S: Scalar> RoundMetrics<S> {
    pub fn energy_per_work(&self) -> Option<S> {
        if self.work.is_zero() {
            return None;
        }
        let total = self.energy.values().fold(S::zero(), |a, e| a + e.clone());
        Some(total / self.work.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerdictCounts {
    pub in_m: usize,
    pub not_in_m: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport<S> {
    pub solver: SolverChoice,
    pub round_ms: S,
    pub machines: Vec<MachineId>,
    pub rounds: Vec<RoundMetrics<S>>,
    pub verdicts: Option<VerdictCounts>,
}

fn rate<S: Scalar>(num: usize, den: usize) -> S {
    if den == 0 {
        S::zero()
    } else {
        S::from_int(num as i64) / S::from_int(den as i64)
    }
}

impl<S: Scalar> SimulationReport<S> {
    pub fn offered(&self) -> usize {
        self.rounds.iter().map(|r| r.offered).sum()
    }

    pub fn scheduled_local(&self) -> usize {
        self.rounds.iter().map(|r| r.scheduled_local).sum()
    }

    pub fn offloaded(&self) -> usize {
        self.rounds.iter().map(|r| r.offloaded).sum()
    }

    pub fn dropped(&self) -> usize {
        self.rounds.iter().map(|r| r.dropped).sum()
    }

    /// Fraction of offered frames the local schedulers dropped.
    pub fn local_drop_rate(&self) -> S {
        rate(self.offered() - self.scheduled_local(), self.offered())
    }

    /// Fraction dropped after offloading.
    pub fn drop_rate(&self) -> S {
        rate(self.dropped(), self.offered())
    }

    pub fn high_priority_drop_rate(&self) -> S {
        let off: usize = self.rounds.iter().map(|r| r.high_priority_offered).sum();
        let drop: usize = self.rounds.iter().map(|r| r.high_priority_dropped).sum();
        rate(drop, off)
    }

    /// Plain-text report: per-round table, energy table, drop
    /// notifications and totals. Contains no timing, so identical runs
    /// render identically.
    pub fn render(&self) -> String {
        let f = |x: &S| format!("{:.6}", x.to_f64_lossy());
        let mut out = String::new();
        let machines: Vec<String> = self.machines.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(out, "# simulation");
        let _ = writeln!(out, "solver = {}", self.solver.name());
        let _ = writeln!(out, "round_ms = {}", self.round_ms.to_plain_string());
        let _ = writeln!(out, "machines = {}", machines.join(" "));
        let _ = writeln!(out, "rounds = {}", self.rounds.len());
        let _ = writeln!(out, "\n# rounds");
        let _ = writeln!(
            out,
            "round,start_ms,offered,scheduled_local,offloaded,dropped,hp_offered,hp_dropped,objective,utilization,energy_per_work,budget_exhausted"
        );
        for r in &self.rounds {
            let epw = r.energy_per_work().map(|x| f(&x)).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.round,
                r.start.to_plain_string(),
                r.offered,
                r.scheduled_local,
                r.offloaded,
                r.dropped,
                r.high_priority_offered,
                r.high_priority_dropped,
                f(&r.objective),
                f(&r.utilization),
                epw,
                r.budget_exhausted
            );
        }
        let _ = writeln!(out, "\n# energy");
        let _ = writeln!(out, "round,machine,energy");
        for r in &self.rounds {
            for (m, e) in &r.energy {
                let _ = writeln!(out, "{},{m},{}", r.round, f(e));
            }
        }
        let _ = writeln!(out, "\n# drop notifications");
        let _ = writeln!(out, "round,image_ids");
        for r in self.rounds.iter().filter(|r| !r.dropped_ids.is_empty()) {
            let ids: Vec<String> = r.dropped_ids.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{},{}", r.round, ids.join(" "));
        }
        let _ = writeln!(out, "\n# totals");
        let _ = writeln!(out, "offered = {}", self.offered());
        let _ = writeln!(out, "scheduled_local = {}", self.scheduled_local());
        let _ = writeln!(out, "offloaded = {}", self.offloaded());
        let _ = writeln!(out, "dropped = {}", self.dropped());
        let _ = writeln!(out, "local_drop_rate = {}", f(&self.local_drop_rate()));
        let _ = writeln!(out, "drop_rate = {}", f(&self.drop_rate()));
        let _ = writeln!(out, "high_priority_drop_rate = {}", f(&self.high_priority_drop_rate()));
        if let Some(v) = &self.verdicts {
            let _ = writeln!(out, "\n# mission verdicts");
            let _ = writeln!(out, "in_m = {}", v.in_m);
            let _ = writeln!(out, "not_in_m = {}", v.not_in_m);
            let _ = writeln!(out, "inconclusive = {}", v.inconclusive);
        }
        out
    }
}

fn hit_budget(status: Option<SolveStatus>) -> bool {
    matches!(
        status,
        Some(SolveStatus::FeasibleIncumbent) | Some(SolveStatus::BudgetExhaustedNoIncumbent)
    )
}

/// Runs every round: local admission on each origin machine, then one
/// offload round for whatever was dropped.
pub fn run_simulation<S: Scalar>(scenario: &Scenario<S>) -> Result<SimulationReport<S>> {
    scenario.validate()?;
    let cluster = &scenario.cluster;
    let default_origin = cluster.machines[0].id;
    let (batches, capped) = match &scenario.source {
        WorkloadSource::Explicit(w) => (
            vec![RoundBatch {
                round: 0,
                start: S::zero(),
                workload: w.clone(),
            }],
            false,
        ),
        WorkloadSource::Stream(spec) => (generate_frame_stream(spec)?.rounds(&scenario.round_ms)?, true),
    };
    let budget = scenario.budget();
    let cores = S::from_int(cluster.total_cores() as i64);
    let mut verdicts = scenario.verdicts.then(VerdictCounts::default);
    let mut rounds = Vec::with_capacity(batches.len());

    for batch in &batches {
        let round_seed = scenario.rng_seed.wrapping_add(batch.round as u64);
        let mut by_origin: BTreeMap<MachineId, Vec<_>> = BTreeMap::new();
        for im in &batch.workload.images {
            let m = if im.origin_machine == 0 { default_origin } else { im.origin_machine };
            by_origin.entry(m).or_default().push(im.clone());
        }
        let mut locals = Vec::new();
        let mut energy: BTreeMap<MachineId, S> = cluster.machines.iter().map(|m| (m.id, S::zero())).collect();
        let mut busy = S::zero();
        let mut work = S::zero();
        let mut objective = S::zero();
        let mut exhausted = 0;
        for (m, images) in by_origin {
            let w = WorkloadInstance::new(images);
            let s = solve_with(&w, scenario.solver, budget, scenario.restarts, round_seed)?;
            exhausted += hit_budget(s.status) as usize;
            if capped && s.busy_time() > scenario.round_ms {
                return Err(Error::Invariant(format!(
                    "round {}: machine {m} local chain runs past the round end",
                    batch.round
                )));
            }
            busy = busy + s.busy_time();
            let local_work = s.first_term(&w);
            work = work + local_work.clone();
            let e = energy.get_mut(&m).expect("origin machine is in the cluster");
            *e = e.clone() + cluster.energy_per_time(m) * local_work;
            objective = objective + s.objective_value.clone();
            if let Some(v) = verdicts.as_mut() {
                let algo = scenario.solver.algorithm(scenario.restarts, round_seed);
                let verdict = classify_with(
                    &w,
                    algo,
                    budget,
                    scenario.epsilon.clone(),
                    Budget::unlimited().with_nodes(scenario.oracle_node_limit),
                )?;
                match verdict.in_m {
                    Some(true) => v.in_m += 1,
                    Some(false) => v.not_in_m += 1,
                    None => v.inconclusive += 1,
                }
            }
            locals.push(LocalRound {
                machine: m,
                workload: w,
                schedule: s,
            });
        }

        let opts = OffloadOptions {
            global: GlobalOptions {
                mode: scenario.mode,
                priority_weight: scenario.priority_weight.clone(),
                lambda: scenario.lambda.clone(),
                excluded: BTreeSet::new(),
            },
            local_elapsed: S::zero(),
        };
        let off = offload_round(&locals, cluster, &opts, budget)?;
        exhausted += hit_budget(off.global.status) as usize;
        for (&(m, c), chain) in &off.global.chains {
            let finish = chain.iter().filter(|s| s.image.is_some()).map(|s| s.finish.clone()).last();
            if let Some(t) = finish {
                if capped && t > scenario.round_ms {
                    return Err(Error::Invariant(format!(
                        "round {}: chain ({m},{c}) runs past the round end",
                        batch.round
                    )));
                }
                busy = busy + t;
            }
        }
        for (m, e) in &off.global.energy_used {
            let slot = energy.entry(*m).or_insert_with(S::zero);
            *slot = slot.clone() + e.clone();
        }
        work = work + off.global.work(&off.offered);
        objective = objective + off.global.objective_value.clone();

        let scheduled_local: usize = locals.iter().map(|l| l.schedule.scheduled.len()).sum();
        let offloaded = off.global.scheduled.len();
        let dropped_ids = off.still_dropped.clone();
        let offered = batch.workload.len();
        if scheduled_local + offloaded + dropped_ids.len() != offered {
            return Err(Error::Invariant(format!(
                "round {}: offered {offered} != local {scheduled_local} + offloaded {offloaded} + dropped {}",
                batch.round,
                dropped_ids.len()
            )));
        }
        let hp: BTreeSet<u32> = batch.workload.images.iter().filter(|im| im.priority).map(|im| im.id).collect();
        rounds.push(RoundMetrics {
            round: batch.round,
            start: batch.start.clone(),
            offered,
            scheduled_local,
            offloaded,
            dropped: dropped_ids.len(),
            high_priority_offered: hp.len(),
            high_priority_dropped: hp.intersection(&dropped_ids).count(),
            objective,
            utilization: busy / (scenario.round_ms.clone() * cores.clone()),
            energy,
            work,
            budget_exhausted: exhausted,
            dropped_ids,
        });
    }
    Ok(SimulationReport {
        solver: scenario.solver,
        round_ms: scenario.round_ms.clone(),
        machines: cluster.machines.iter().map(|m| m.id).collect(),
        rounds,
        verdicts,
    })
}
