//! Learning unknown average-cost MDPs by posterior sampling with dynamically
//! determined episodes (TSDE), plus the baselines it is usually compared
//! against (UCRL2, Lazy PSRL, TSMDP).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the parallel
//! experiment runner and the CLI live in the `tsde` companion crate.
//!
//! Conventions used throughout:
//!
//! * states and actions are dense 0-based indices;
//! * costs lie in `[0, 1]` and are minimized;
//! * time is 1-based (`t = 1, 2, ..., T`), matching the episode bookkeeping.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod agents;
pub mod envs;
pub mod harness;
mod linalg;
pub mod mdp;
pub mod posterior;
pub mod rng;
pub mod schedule;
pub mod solver;

pub use agents::{Agent, AgentError, AgentKind, AgentSpec, WidthConvention};
pub use envs::{make_random_mdp, make_riverswim, make_riverswim_with, RandomMdpSpec, RiverSwimParams};
pub use harness::{check_invariants, run_one, EnvSpec, ExperimentConfig, HarnessError, RegretTrace, TruthMode};
pub use mdp::{Kernel, KnownStructure, Mdp, MdpError, StationaryPolicy, Trajectory, Violation};
pub use posterior::{TabularPosterior, VisitCounts};
pub use rng::SimRng;
pub use schedule::EpisodeSchedule;
pub use solver::{solve, solve_approx, EpsilonSchedule, solve_bruteforce, span_of, SolveError, SolveResult, SolverOptions};
