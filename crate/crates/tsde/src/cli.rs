//! The `tsde` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tsde_core::agents::AgentError;
use tsde_core::harness::HarnessError;
use tsde_core::{make_random_mdp, make_riverswim, solve, solve_bruteforce, Mdp, RandomMdpSpec, SolveError, SolverOptions};

use crate::config::{ConfigError, FileConfig, Overrides};
use crate::experiment::{downsample_grid, run_experiment, ExperimentError};
use crate::io::{load_mdp, mdp_to_json, save_mdp, LoadError};
use crate::output::{emit_plot_data, write_agent_results, write_config_echo, OutputError, Summary};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// File system and other I/O failures.
    pub const IO: i32 = 1;
    /// Malformed input: bad JSON/TOML, unknown keys, bad flags.
    pub const PARSE: i32 = 2;
    /// Well-formed but invalid input: row sums, cost range, bad parameters.
    pub const VALIDATION: i32 = 3;
    /// Value iteration did not converge, or the oracle disagreed.
    pub const CONVERGENCE: i32 = 4;
    /// A run broke a sample-path invariant.
    pub const INVARIANT: i32 = 5;
}

const AFTER_HELP: &str = "\
EXIT CODES
  0  success
  1  I/O error
  2  parse error (malformed JSON/TOML, unknown key, bad flag)
  3  validation error (invalid MDP or parameter values)
  4  convergence failure (value iteration, or --oracle disagreement)
  5  invariant violation in an experiment run

MDP JSON (solve, make-env, env.kind = \"file\")
  {
    \"num_states\": S,
    \"num_actions\": A,
    \"initial_state\": s0,
    \"cost\": [[c(0,0), ..., c(0,A-1)], ..., [c(S-1,0), ...]],
    \"kernel\": [[[p(0|0,0), ..., p(S-1|0,0)], ...], ...]
  }
  cost[s][a] in [0,1]; kernel[s][a][s'] rows sum to 1 within 1e-9.
  All indices are 0-based. Unknown keys are rejected.

RESULTS (run)
  <out>/config.toml              effective configuration, re-runnable as is
  <out>/<label>/results.csv      columns: run_id,t,cumulative_cost,regret
                                 regret = cumulative_cost - t * J_star
  <out>/<label>/summary.json     per-run K_T, M, J_star, span, seed, final_regret
  Run i uses seed base_seed + i.

PLOT DATA (emit-plot-data)
  <label>.mean_regret.dat        columns: t mean_regret
  <label>.stderr.dat             columns: t stderr
  regret.gp                      gnuplot script plotting every series
";

#[derive(Debug, Parser)]
#[command(name = "tsde", version, about = "Posterior sampling with dynamic episodes for average-cost MDPs")]
#[command(after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an MDP file and print the result as JSON.
    Solve {
        mdp: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iters: u64,
        /// Also enumerate all stationary policies and report the oracle gain.
        #[arg(long)]
        oracle: bool,
    },
    /// Write a benchmark environment as MDP JSON.
    MakeEnv {
        kind: EnvKind,
        /// Output file; stdout if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Seed of the random MDP's truth stream.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 0.1)]
        dirichlet: f64,
    },
    /// Run an experiment config and write results.
    Run {
        config: PathBuf,
        #[arg(short, long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        runs: Option<u64>,
        /// Base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Only run agents with this label or kind (repeatable).
        #[arg(long)]
        agent: Vec<String>,
        #[arg(long)]
        grid_points: Option<usize>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// No progress output on stderr.
        #[arg(short, long)]
        quiet: bool,
    },
    /// Turn a results directory into plot-ready series.
    EmitPlotData {
        results_dir: PathBuf,
        /// Defaults to `<results_dir>/plot`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnvKind {
    Riverswim,
    Random,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl ToString) -> Self {
        Self { code, message: message.to_string() }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        let code = match &e {
            LoadError::Io { .. } => exit::IO,
            LoadError::Parse { .. } => exit::PARSE,
            LoadError::Format { .. } => exit::VALIDATION,
        };
        Failure::new(code, e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Env(inner) => inner.into(),
            ConfigError::Io { .. } => Failure::new(exit::IO, e),
            ConfigError::Invalid(_) => Failure::new(exit::VALIDATION, e),
            ConfigError::Toml { .. } | ConfigError::Json { .. } => Failure::new(exit::PARSE, e),
        }
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        let code = match e {
            OutputError::Io { .. } => exit::IO,
            _ => exit::PARSE,
        };
        Failure::new(code, e)
    }
}

fn solve_code(e: &SolveError) -> i32 {
    match e {
        SolveError::NotConverged { .. } | SolveError::NonFinite | SolveError::SingularChain => exit::CONVERGENCE,
        _ => exit::VALIDATION,
    }
}

fn harness_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Truth(s) => solve_code(s),
        HarnessError::Agent { source: AgentError::Planning { source, .. }, .. } => solve_code(source),
        HarnessError::Invariants(_) => exit::INVARIANT,
        _ => exit::VALIDATION,
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::Run { source, .. } => harness_code(source),
            ExperimentError::Invariants(_) => exit::INVARIANT,
            ExperimentError::Pool(_) => exit::IO,
        };
        Failure::new(code, e)
    }
}

#[derive(Serialize)]
struct SolveOutput {
    gain: f64,
    values: Vec<f64>,
    policy: Vec<usize>,
    span: f64,
    iterations: u64,
    bellman_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleOutput>,
}

#[derive(Serialize)]
struct OracleOutput {
    gain: f64,
    policy: Vec<usize>,
    gain_difference: f64,
}

/// Gain agreement required between `solve` and the oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

fn cmd_solve(path: &Path, tol: f64, max_iters: u64, oracle: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let mdp = load_mdp(path)?;
    let r = solve(&mdp, &SolverOptions { tol, max_iters }).map_err(|e| Failure::new(solve_code(&e), e))?;
    let oracle = if oracle {
        let o = solve_bruteforce(&mdp).map_err(|e| Failure::new(solve_code(&e), e))?;
        Some(OracleOutput { gain: o.gain, policy: o.policy.as_slice().to_vec(), gain_difference: r.gain - o.gain })
    } else {
        None
    };
    let disagree = oracle.as_ref().is_some_and(|o| o.gain_difference.abs() > ORACLE_TOLERANCE);
    let output = SolveOutput {
        gain: r.gain,
        values: r.values,
        policy: r.policy.as_slice().to_vec(),
        span: r.span,
        iterations: r.iterations,
        bellman_residual: r.bellman_residual,
        oracle,
    };
    let text = serde_json::to_string_pretty(&output).expect("solve output serializes");
    writeln!(out, "{text}").map_err(|e| Failure::new(exit::IO, e))?;
    if disagree {
        return Err(Failure::new(exit::CONVERGENCE, "solver and oracle gains differ by more than 1e-6"));
    }
    Ok(())
}

fn make_env(kind: EnvKind, seed: u64, states: usize, actions: usize, dirichlet: f64) -> Result<Mdp, Failure> {
    match kind {
        EnvKind::Riverswim => Ok(make_riverswim()),
        EnvKind::Random => {
            let spec =
                RandomMdpSpec { num_states: states, num_actions: actions, dirichlet_param: dirichlet, seed, ..Default::default() };
            let mut rng = tsde_core::rng::stream(seed, tsde_core::rng::Stream::Truth);
            make_random_mdp(&spec, &mut rng).map_err(|e| Failure::new(exit::VALIDATION, e))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &Path,
    out_dir: &Path,
    overrides: Overrides,
    jobs: usize,
    quiet: bool,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let mut cfg = FileConfig::load(config)?;
    cfg.apply(&overrides)?;
    let experiments = cfg.experiments()?;
    write_config_echo(out_dir, &cfg)?;
    let grid = downsample_grid(cfg.experiment.horizon, cfg.experiment.grid_points);
    for ((label, exp), entry) in experiments.iter().zip(&cfg.agents) {
        let truth = exp.truth_for(0).map_err(|e| Failure::new(harness_code(&e), e))?;
        let total = exp.num_runs;
        let step = (total / 20).max(1);
        let progress = |done: u64| {
            if !quiet && (done % step == 0 || done == total) {
                eprintln!("[{label}] {done}/{total} runs");
            }
        };
        let agg = run_experiment(label, exp, &grid, jobs, &progress)?;
        let summary = Summary::new(&agg, entry, &cfg, truth.num_states(), truth.num_actions());
        let dir = write_agent_results(out_dir, &agg, &summary)?;
        writeln!(
            out,
            "{label}: final mean regret {:.3} +/- {:.3} (SE, {} runs), max K_T {}, max M {}, {:.1}s -> {}",
            agg.final_mean(),
            agg.final_stderr(),
            agg.runs.len(),
            agg.max_k_t(),
            agg.max_m(),
            agg.wall_seconds,
            dir.display()
        )
        .map_err(|e| Failure::new(exit::IO, e))?;
    }
    Ok(())
}

fn cmd_emit(results_dir: &Path, out_dir: Option<PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    let out_dir = out_dir.unwrap_or_else(|| results_dir.join("plot"));
    let series = emit_plot_data(results_dir, &out_dir)?;
    for s in &series {
        let last = s.mean.last().copied().unwrap_or(f64::NAN);
        writeln!(out, "{}: {} points, final mean regret {last:.3}", s.label, s.t.len()).map_err(|e| Failure::new(exit::IO, e))?;
    }
    writeln!(out, "wrote {}", out_dir.join("regret.gp").display()).map_err(|e| Failure::new(exit::IO, e))?;
    Ok(())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { mdp, tol, max_iters, oracle } => cmd_solve(&mdp, tol, max_iters, oracle, out),
        Command::MakeEnv { kind, output, seed, states, actions, dirichlet } => {
            let mdp = make_env(kind, seed, states, actions, dirichlet)?;
            match output {
                Some(path) => save_mdp(&mdp, &path)
                    .map_err(|e| Failure::new(exit::IO, format!("{}: {e}", path.display()))),
                None => out.write_all(mdp_to_json(&mdp).as_bytes()).map_err(|e| Failure::new(exit::IO, e)),
            }
        }
        Command::Run { config, out: dir, horizon, runs, seed, agent, grid_points, jobs, quiet } => {
            let overrides = Overrides { horizon, runs, seed, agents: agent, grid_points };
            cmd_run(&config, &dir, overrides, jobs, quiet, out)
        }
        Command::EmitPlotData { results_dir, out: dir } => cmd_emit(&results_dir, dir, out),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::PARSE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => exit::OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
