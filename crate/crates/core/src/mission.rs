//! Mission computability: did an algorithm, run under a field budget,
//! land within `epsilon` of the optimum?
//!
//! Scheduling instances use the relative gap of the analysed time,
//! `(opt - approx) / max(opt, 1)`. Decision problems (directed s-t
//! reachability and Hamiltonian s-t paths) use 0 for a correct answer and
//! 1 otherwise. The reference answer is computed offline under a separate,
//! usually much larger, allowance.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::{greedy_edf, local_search, randomized_restarts};
use crate::budget::{Budget, BudgetClock};
use crate::error::{Error, Result};
use crate::local::{solve_local, Schedule, WorkloadInstance};
use crate::scalar::{max_of, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct MissionVerdict<S> {
    pub completed_in_budget: bool,
    pub elapsed: Duration,
    /// Value of the field answer; `None` when nothing was produced.
    pub approx_value: Option<S>,
    /// `None` when the offline reference did not finish in its allowance.
    pub optimal_value: Option<S>,
    pub distance: Option<S>,
    pub epsilon: S,
    /// `None` when the distance is unknown.
    pub in_m: Option<bool>,
}

impl<S: Scalar> MissionVerdict<S> {
    fn assemble(
        completed_in_budget: bool,
        elapsed: Duration,
        approx_value: Option<S>,
        optimal_value: Option<S>,
        distance: Option<S>,
        epsilon: S,
    ) -> Self {
        let in_m = distance
            .as_ref()
            .map(|d| completed_in_budget && *d < epsilon);
        MissionVerdict {
            completed_in_budget,
            elapsed,
            approx_value,
            optimal_value,
            distance,
            epsilon,
            in_m,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.in_m {
            Some(true) => "IN_M",
            Some(false) => "NOT_IN_M",
            None => "INCONCLUSIVE",
        }
    }
}

impl<S: Scalar> fmt::Display for MissionVerdict<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: &Option<S>| v.as_ref().map(|x| x.to_plain_string()).unwrap_or_else(|| "-".into());
        writeln!(f, "verdict: {}", self.label())?;
        writeln!(f, "completed_in_budget: {}", self.completed_in_budget)?;
        writeln!(f, "elapsed_ms: {:.3}", self.elapsed.as_secs_f64() * 1e3)?;
        writeln!(f, "approx_value: {}", opt(&self.approx_value))?;
        writeln!(f, "optimal_value: {}", opt(&self.optimal_value))?;
        writeln!(f, "distance: {}", opt(&self.distance))?;
        write!(f, "epsilon: {}", self.epsilon.to_plain_string())
    }
}

/// A field algorithm for the admission problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Exact,
    Greedy,
    LocalSearch { rng_seed: u64 },
    Randomized { restarts: usize, rng_seed: u64 },
}

impl Algorithm {
    /// Anytime algorithms hand back their incumbent when the budget runs
    /// out; their answer is on time by construction.
    pub fn is_anytime(self) -> bool {
        !matches!(self, Algorithm::Greedy)
    }
}

fn budget_is_zero(b: &Budget) -> bool {
    b.time.is_some_and(|t| t.is_zero()) || b.nodes == Some(0)
}

/// Runs `algorithm` under `budget`. The flag tells whether an answer was
/// available within the budget.
pub fn run_algorithm<S: Scalar>(
    workload: &WorkloadInstance<S>,
    algorithm: Algorithm,
    budget: Budget,
) -> Result<(Schedule<S>, bool, Duration)> {
    let clock = budget.start();
    let (schedule, produced) = match algorithm {
        Algorithm::Exact => {
            let s = solve_local(workload, budget)?;
            let produced = !s.fallback;
            (s, produced)
        }
        Algorithm::Greedy => (greedy_edf(workload)?, true),
        Algorithm::LocalSearch { rng_seed } => {
            let seed = greedy_edf(workload)?;
            (local_search(workload, &seed, budget, rng_seed)?, true)
        }
        Algorithm::Randomized { restarts, rng_seed } => {
            (randomized_restarts(workload, restarts, budget, rng_seed)?, true)
        }
    };
    let elapsed = clock.elapsed();
    let on_time = match budget.time {
        Some(limit) if !algorithm.is_anytime() => elapsed <= limit,
        _ => true,
    };
    let completed = produced && on_time && !budget_is_zero(&budget);
    Ok((schedule, completed, elapsed))
}

/// Relative analysed-time gap, clamped at zero.
pub fn relative_gap<S: Scalar>(optimal: &S, approx: &S) -> S {
    let d = (optimal.clone() - approx.clone()) / max_of(optimal.clone(), S::one());
    if d.is_negative() {
        S::zero()
    } else {
        d
    }
}

/// Classifies a scheduling instance with wall-clock budgets.
pub fn classify<S: Scalar>(
    instance: &WorkloadInstance<S>,
    algorithm: Algorithm,
    mission_budget: Duration,
    epsilon: S,
    oracle_allowance: Duration,
) -> Result<MissionVerdict<S>> {
    classify_with(
        instance,
        algorithm,
        Budget::time(mission_budget),
        epsilon,
        Budget::time(oracle_allowance),
    )
}

/// Classifies a scheduling instance with arbitrary budgets. The offline
/// reference runs on a second thread.
pub fn classify_with<S: Scalar>(
    instance: &WorkloadInstance<S>,
    algorithm: Algorithm,
    mission: Budget,
    epsilon: S,
    oracle: Budget,
) -> Result<MissionVerdict<S>> {
    if !epsilon.is_positive() {
        return Err(Error::Argument("epsilon must be > 0".into()));
    }
    instance.validate()?;
    let (field, reference) = std::thread::scope(|scope| {
        let handle = scope.spawn(|| solve_local(instance, oracle));
        let field = run_algorithm(instance, algorithm, mission);
        let reference = handle.join().expect("oracle thread panicked");
        (field, reference)
    });
    let (schedule, completed, elapsed) = field?;
    let reference = reference?;
    let approx = schedule.first_term(instance);
    let optimal = (reference.status == Some(crate::ilp::SolveStatus::Optimal)).then(|| reference.first_term(instance));
    let distance = optimal.as_ref().map(|o| relative_gap(o, &approx));
    Ok(MissionVerdict::assemble(completed, elapsed, Some(approx), optimal, distance, epsilon))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    adj: Vec<Vec<usize>>,
    edges: usize,
}

impl DirectedGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u},{v}) references a vertex >= {n}")));
            }
            if !set.insert((u, v)) {
                return Err(Error::Graph(format!("duplicate edge ({u},{v})")));
            }
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &set {
            adj[u].push(v);
        }
        Ok(DirectedGraph { n, adj, edges: set.len() })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn successors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    /// Complete digraph without self-loops.
    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)));
        Self::new(n, edges).expect("complete graph is valid")
    }

    /// Each ordered pair `u != v` is an edge with probability `p`.
    pub fn random(n: usize, p: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.gen_bool(p.clamp(0.0, 1.0)) {
                    edges.push((u, v));
                }
            }
        }
        Self::new(n, edges).expect("random graph is valid")
    }

    /// About `out_degree` random successors per vertex.
    pub fn sparse_random(n: usize, out_degree: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = BTreeSet::new();
        if n > 1 {
            for u in 0..n {
                for _ in 0..out_degree {
                    let v = rng.gen_range(0..n);
                    if v != u {
                        set.insert((u, v));
                    }
                }
            }
        }
        Self::new(n, set).expect("sparse graph is valid")
    }

    /// Removes every edge entering `t`.
    pub fn without_edges_into(&self, t: usize) -> Self {
        let edges: Vec<_> = self.edges().filter(|&(_, v)| v != t).collect();
        Self::new(self.n, edges).expect("subgraph is valid")
    }

    /// Plain text: `n m`, then `m` lines `u v` (0-based). `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: origin.to_path_buf(), line, msg };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "missing header `n m`".into()))?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(err(hl, "header must be `n m`".into()));
        }
        let n: usize = nums[0].parse().map_err(|_| err(hl, format!("bad vertex count `{}`", nums[0])))?;
        let m: usize = nums[1].parse().map_err(|_| err(hl, format!("bad edge count `{}`", nums[1])))?;
        let mut edges = Vec::with_capacity(m);
        let mut seen = BTreeSet::new();
        for (ln, l) in lines {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(err(ln, "edge line must be `u v`".into()));
            }
            let u: usize = parts[0].parse().map_err(|_| err(ln, format!("bad vertex `{}`", parts[0])))?;
            let v: usize = parts[1].parse().map_err(|_| err(ln, format!("bad vertex `{}`", parts[1])))?;
            if u >= n || v >= n {
                return Err(err(ln, format!("vertex out of range 0..{n}")));
            }
            if !seen.insert((u, v)) {
                return Err(err(ln, format!("duplicate edge {u} {v}")));
            }
            edges.push((u, v));
        }
        if edges.len() != m {
            return Err(err(hl, format!("header declares {m} edges, found {}", edges.len())));
        }
        Self::new(n, edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.edges);
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n {
            return Err(Error::Graph(format!("vertex {v} out of range 0..{}", self.n)));
        }
        Ok(())
    }
}

/// Breadth-first reachability; `s == t` is reachable by the empty path.
pub fn path_exists(g: &DirectedGraph, s: usize, t: usize) -> Result<bool> {
    g.check_vertex(s)?;
    g.check_vertex(t)?;
    let mut clock = Budget::unlimited().start();
    Ok(bfs(g, s, t, &mut clock).expect("unlimited budget"))
}

fn bfs(g: &DirectedGraph, s: usize, t: usize, clock: &mut BudgetClock) -> Option<bool> {
    if s == t {
        return Some(true);
    }
    let mut seen = vec![false; g.n];
    let mut queue = VecDeque::from([s]);
    seen[s] = true;
    while let Some(u) = queue.pop_front() {
        if clock.tick() {
            return None;
        }
        for &v in &g.adj[u] {
            if v == t {
                return Some(true);
            }
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    Some(false)
}

/// Iterative depth-first reachability, kept apart from [`path_exists`] as a
/// reference answer.
fn dfs_reachable(g: &DirectedGraph, s: usize, t: usize) -> bool {
    let mut seen = vec![false; g.n];
    let mut stack = vec![s];
    while let Some(u) = stack.pop() {
        if u == t {
            return true;
        }
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        stack.extend(g.adj[u].iter().copied().filter(|&v| !seen[v]));
    }
    false
}

/// Largest graph the Hamiltonian search accepts.
pub const HAM_MAX_VERTICES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HamOutcome {
    Found(Vec<usize>),
    Absent,
    Interrupted,
}

fn ham_preconditions(g: &DirectedGraph, s: usize, t: usize) -> Result<()> {
    if g.n > HAM_MAX_VERTICES {
        return Err(Error::SizeGuard {
            what: "Hamiltonian path graph",
            size: g.n,
            limit: HAM_MAX_VERTICES,
        });
    }
    g.check_vertex(s)?;
    g.check_vertex(t)?;
    if s == t && g.n != 1 {
        return Err(Error::Argument("Hamiltonian s-t path needs s != t unless n == 1".into()));
    }
    Ok(())
}

/// Depth-first search over vertex orders with fixed endpoints, extending
/// only along edges. `t` may only be appended as the last vertex.
pub fn ham_search(g: &DirectedGraph, s: usize, t: usize, budget: Budget) -> Result<HamOutcome> {
    ham_preconditions(g, s, t)?;
    if g.n == 1 {
        return Ok(HamOutcome::Found(vec![s]));
    }
    let mut clock = budget.start();
    let mut path = vec![s];
    let mut used = vec![false; g.n];
    used[s] = true;
    // per depth: index of the next successor to try
    let mut cursor = vec![0usize];
    while let Some(&u) = path.last() {
        if clock.tick() {
            return Ok(HamOutcome::Interrupted);
        }
        let depth = path.len() - 1;
        let succ = &g.adj[u];
        let mut advanced = false;
        while cursor[depth] < succ.len() {
            let v = succ[cursor[depth]];
            cursor[depth] += 1;
            if used[v] {
                continue;
            }
            let last = path.len() + 1 == g.n;
            if (v == t) != last {
                continue;
            }
            if last {
                path.push(v);
                return Ok(HamOutcome::Found(path));
            }
            used[v] = true;
            path.push(v);
            cursor.push(0);
            advanced = true;
            break;
        }
        if !advanced {
            let v = path.pop().unwrap();
            used[v] = false;
            cursor.pop();
        }
    }
    Ok(HamOutcome::Absent)
}

/// A Hamiltonian `s`-`t` path, if one exists.
pub fn ham_path(g: &DirectedGraph, s: usize, t: usize) -> Result<Option<Vec<usize>>> {
    Ok(match ham_search(g, s, t, Budget::unlimited())? {
        HamOutcome::Found(p) => Some(p),
        _ => None,
    })
}

/// Checks a witness: starts at `s`, ends at `t`, visits every vertex
/// exactly once, and follows edges.
pub fn verify_ham_path(g: &DirectedGraph, s: usize, t: usize, path: &[usize]) -> bool {
    if path.len() != g.n || path.first() != Some(&s) || path.last() != Some(&t) {
        return false;
    }
    let mut seen = vec![false; g.n];
    for &v in path {
        if v >= g.n || std::mem::replace(&mut seen[v], true) {
            return false;
        }
    }
    path.windows(2).all(|w| g.has_edge(w[0], w[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionProblem {
    Path,
    HamPath,
}

impl fmt::Display for DecisionProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecisionProblem::Path => "PATH",
            DecisionProblem::HamPath => "HAMPATH",
        })
    }
}

/// Runs a decision problem under the mission budget and scores it against
/// the offline answer.
pub fn demo_mission_run<S: Scalar>(
    problem: DecisionProblem,
    g: &DirectedGraph,
    s: usize,
    t: usize,
    mission_budget: Duration,
    oracle_allowance: Duration,
    epsilon: S,
) -> Result<MissionVerdict<S>> {
    demo_mission_run_with(problem, g, s, t, Budget::time(mission_budget), Budget::time(oracle_allowance), epsilon)
}

pub fn demo_mission_run_with<S: Scalar>(
    problem: DecisionProblem,
    g: &DirectedGraph,
    s: usize,
    t: usize,
    mission: Budget,
    oracle: Budget,
    epsilon: S,
) -> Result<MissionVerdict<S>> {
    if !epsilon.is_positive() {
        return Err(Error::Argument("epsilon must be > 0".into()));
    }
    let as_value = |b: bool| if b { S::one() } else { S::zero() };
    let (answer, elapsed, reference) = match problem {
        DecisionProblem::Path => {
            g.check_vertex(s)?;
            g.check_vertex(t)?;
            let mut clock = mission.start();
            let answer = if budget_is_zero(&mission) { None } else { bfs(g, s, t, &mut clock) };
            let elapsed = clock.elapsed();
            (answer, elapsed, Some(dfs_reachable(g, s, t)))
        }
        DecisionProblem::HamPath => {
            ham_preconditions(g, s, t)?;
            let clock = mission.start();
            let answer = if budget_is_zero(&mission) {
                None
            } else {
                match ham_search(g, s, t, mission)? {
                    HamOutcome::Found(p) => {
                        debug_assert!(verify_ham_path(g, s, t, &p));
                        Some(true)
                    }
                    HamOutcome::Absent => Some(false),
                    HamOutcome::Interrupted => None,
                }
            };
            let elapsed = clock.elapsed();
            let reference = match ham_search(g, s, t, oracle)? {
                HamOutcome::Found(_) => Some(true),
                HamOutcome::Absent => Some(false),
                HamOutcome::Interrupted => None,
            };
            (answer, elapsed, reference)
        }
    };
    let completed = answer.is_some();
    let distance = reference.map(|r| if answer == Some(r) { S::zero() } else { S::one() });
    Ok(MissionVerdict::assemble(
        completed,
        elapsed,
        answer.map(as_value),
        reference.map(as_value),
        distance,
        epsilon,
    ))
}
