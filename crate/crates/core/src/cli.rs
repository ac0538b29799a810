//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 bad
//! input, 3 internal invariant failure.

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::budget::Budget;
use crate::error::Error;
use crate::global::{schedule_cluster, GlobalOptions, ObjectiveMode};
use crate::local::{validate_schedule, MachineId};
use crate::mission::{classify, demo_mission_run, DecisionProblem, DirectedGraph};
use crate::scalar::{parse_decimal, Scalar};
use crate::sim::{read_cluster, read_scenario, read_workload_csv, render_global_schedule, render_local_schedule, run_simulation, solve_with, SolverChoice};
use crate::Rational;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mission-sched", version, about = "Deadline-aware image admission, offloading and mission-budget classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Greedy,
    LocalSearch,
    Randomized,
}

impl From<SolverArg> for SolverChoice {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Exact => SolverChoice::Exact,
            SolverArg::Greedy => SolverChoice::Greedy,
            SolverArg::LocalSearch => SolverChoice::LocalSearch,
            SolverArg::Randomized => SolverChoice::Randomized,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    MaxComputation,
    MinEnergyPerWork,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProblemArg {
    Path,
    Hampath,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GraphKind {
    /// About `--degree` random successors per vertex.
    Sparse,
    /// Every ordered pair is an edge.
    Complete,
    /// Complete graph with every edge into `t` removed.
    Blocked,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Schedule one workload file and print the chains.
    Solve {
        #[arg(long)]
        workload: PathBuf,
        /// Schedule on a cluster instead of a single machine.
        #[arg(long)]
        cluster: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "exact")]
        solver: SolverArg,
        /// Wall-clock budget in milliseconds.
        #[arg(long)]
        budget_ms: Option<f64>,
        #[arg(long)]
        node_limit: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        /// Machine id printed for single-machine schedules.
        #[arg(long, default_value_t = 1)]
        machine: MachineId,
        #[arg(long, value_enum, default_value = "max-computation")]
        objective: ObjectiveArg,
        #[arg(long, default_value = "10")]
        priority_weight: String,
        #[arg(long, default_value = "0.1")]
        lambda: String,
    },
    /// Run a scenario file and print the report.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Classify an algorithm on a workload under a mission budget.
    Classify {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, value_enum)]
        algorithm: SolverArg,
        #[arg(long)]
        budget_ms: f64,
        #[arg(long)]
        epsilon: String,
        /// Allowance for the offline reference solve.
        #[arg(long, default_value_t = 60_000.0)]
        oracle_ms: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
    /// PATH or HamPATH under a mission budget.
    Demo {
        #[arg(long, value_enum)]
        problem: ProblemArg,
        /// Graph file: `n m`, then `m` lines `u v`.
        #[arg(long, conflicts_with = "generate")]
        graph: Option<PathBuf>,
        #[arg(long, value_enum)]
        generate: Option<GraphKind>,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        s: usize,
        /// Defaults to the last vertex.
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        budget_ms: f64,
        #[arg(long, default_value_t = 60_000.0)]
        oracle_ms: f64,
        #[arg(long, default_value = "0.5")]
        epsilon: String,
    },
}

fn duration_ms(ms: f64, flag: &str) -> Result<Duration, Error> {
    if !ms.is_finite() || ms < 0.0 {
        return Err(Error::Argument(format!("{flag} must be a non-negative number of milliseconds")));
    }
    Ok(Duration::from_secs_f64(ms / 1000.0))
}

fn rational(text: &str, flag: &str) -> Result<Rational, Error> {
    parse_decimal(text).ok_or_else(|| Error::Argument(format!("{flag}: not a decimal `{text}`")))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) => EXIT_USAGE,
        Error::Invariant(_) | Error::AssignmentLength { .. } => EXIT_INTERNAL,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), Error> {
    let mut text = String::new();
    match cmd {
        Command::Solve {
            workload,
            cluster,
            solver,
            budget_ms,
            node_limit,
            seed,
            restarts,
            machine,
            objective,
            priority_weight,
            lambda,
        } => {
            let w = read_workload_csv::<Rational>(&workload)?;
            let budget = Budget {
                time: budget_ms.map(|ms| duration_ms(ms, "--budget-ms")).transpose()?,
                nodes: node_limit,
            };
            match cluster {
                None => {
                    let s = solve_with(&w, solver.into(), budget, restarts, seed)?;
                    if let Some(v) = validate_schedule(&w, &s)?.first() {
                        return Err(Error::Invariant(format!("returned schedule fails validation: {v}")));
                    }
                    text.push_str(&render_local_schedule(machine, &s));
                    text.push_str(&format!("objective: {}\n", s.objective_value.to_plain_string()));
                    let status = s.status.map(|st| st.to_string()).unwrap_or_else(|| "HEURISTIC".into());
                    text.push_str(&format!("status: {status}\n"));
                }
                Some(path) => {
                    if !matches!(solver, SolverArg::Exact) {
                        return Err(Error::Argument("cluster schedules need --solver exact".into()));
                    }
                    let c = read_cluster::<Rational>(&path)?;
                    let opts = GlobalOptions {
                        mode: match objective {
                            ObjectiveArg::MaxComputation => ObjectiveMode::MaxComputation,
                            ObjectiveArg::MinEnergyPerWork => ObjectiveMode::MinEnergyPerWork,
                        },
                        priority_weight: rational(&priority_weight, "--priority-weight")?,
                        lambda: rational(&lambda, "--lambda")?,
                        ..GlobalOptions::default()
                    };
                    let g = schedule_cluster(&w, &c, &opts, budget)?;
                    let violations = crate::global::check_global_schedule(&w, &c, &opts, &g)?;
                    if let Some(v) = violations.first() {
                        return Err(Error::Invariant(format!("returned schedule fails validation: {v}")));
                    }
                    text.push_str(&render_global_schedule(&g));
                    text.push_str(&format!("objective: {}\n", g.objective_value.to_plain_string()));
                    let status = g.status.map(|st| st.to_string()).unwrap_or_else(|| "EMPTY".into());
                    text.push_str(&format!("status: {status}\n"));
                }
            }
        }
        Command::Simulate { scenario, seed, output } => {
            let mut scen = read_scenario::<Rational>(&scenario)?;
            if let Some(s) = seed {
                scen.rng_seed = s;
                if let crate::sim::WorkloadSource::Stream(spec) = &mut scen.source {
                    spec.rng_seed = s;
                }
            }
            let report = run_simulation(&scen)?.render();
            match output {
                Some(p) => std::fs::write(&p, report).map_err(|e| Error::Io { path: p, msg: e.to_string() })?,
                None => text = report,
            }
        }
        Command::Classify {
            workload,
            algorithm,
            budget_ms,
            epsilon,
            oracle_ms,
            seed,
            restarts,
        } => {
            let w = read_workload_csv::<Rational>(&workload)?;
            let algo = SolverChoice::from(algorithm).algorithm(restarts, seed);
            let v = classify(
                &w,
                algo,
                duration_ms(budget_ms, "--budget-ms")?,
                rational(&epsilon, "--epsilon")?,
                duration_ms(oracle_ms, "--oracle-ms")?,
            )?;
            text = format!("{v}\n");
        }
        Command::Demo {
            problem,
            graph,
            generate,
            n,
            degree,
            seed,
            s,
            t,
            budget_ms,
            oracle_ms,
            epsilon,
        } => {
            let g = match (graph, generate) {
                (Some(p), _) => {
                    let body = crate::sim::formats::read_text(&p)?;
                    DirectedGraph::parse(&body, &p)?
                }
                (None, Some(kind)) => {
                    let t = t.unwrap_or(n.saturating_sub(1));
                    match kind {
                        GraphKind::Sparse => DirectedGraph::sparse_random(n, degree, seed),
                        GraphKind::Complete => DirectedGraph::complete(n),
                        GraphKind::Blocked => {
                            if t >= n {
                                return Err(Error::Argument(format!("--t {t} is not a vertex of a {n}-vertex graph")));
                            }
                            DirectedGraph::complete(n).without_edges_into(t)
                        }
                    }
                }
                (None, None) => return Err(Error::Argument("give --graph or --generate".into())),
            };
            let t = t.unwrap_or(g.vertex_count().saturating_sub(1));
            let problem = match problem {
                ProblemArg::Path => DecisionProblem::Path,
                ProblemArg::Hampath => DecisionProblem::HamPath,
            };
            let v = demo_mission_run(
                problem,
                &g,
                s,
                t,
                duration_ms(budget_ms, "--budget-ms")?,
                duration_ms(oracle_ms, "--oracle-ms")?,
                rational(&epsilon, "--epsilon")?,
            )?;
            text = format!(
                "problem: {problem}\nvertices: {}\nedges: {}\n{v}\n",
                g.vertex_count(),
                g.edge_count()
            );
        }
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::Io {
        path: PathBuf::from("<stdout>"),
        msg: e.to_string(),
    })
}
