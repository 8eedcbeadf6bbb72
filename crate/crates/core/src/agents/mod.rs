//! Learning agents behind one interface: TSDE, Lazy PSRL and TSMDP (all
//! posterior sampling, differing only in when an episode ends), UCRL2, and
//! an oracle that plays the true optimal policy.

mod oracle;
mod psrl;
mod ucrl2;

use alloc::boxed::Box;

use crate::mdp::{KnownStructure, Mdp};
use crate::posterior::PosteriorError;
use crate::rng::SimRng;
use crate::schedule::EpisodeSchedule;
use crate::solver::{EpsilonSchedule, SolveError, SolverOptions};

pub use oracle::OptimalAgent;
pub use psrl::{EpisodeRule, PosteriorSamplingAgent, MAX_RESAMPLES};
pub use ucrl2::{
    confidence_width, extended_value_iteration, optimistic_row, ucrl2_plan, ConfidenceSet, EviResult, Ucrl2Agent,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum AgentKind {
    Tsde,
    Ucrl2,
    LazyPsrl,
    Tsmdp,
    /// Plays the optimal policy of the true model; a control, not a learner.
    Optimal,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Tsde => "tsde",
            AgentKind::Ucrl2 => "ucrl2",
            AgentKind::LazyPsrl => "lazy_psrl",
            AgentKind::Tsmdp => "tsmdp",
            AgentKind::Optimal => "optimal",
        }
    }
}

/// Which `delta` goes into the UCRL2 confidence width
/// `sqrt(14 S ln(2 A t_k / delta) / max(1, N))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum WidthConvention {
    /// The configured `delta` (0.05 in the benchmarks).
    #[default]
    Experiment,
    /// `delta = 1 / T`, i.e. `ln(2 A t_k T)`.
    Analysis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub kind: AgentKind,
    /// UCRL2 confidence parameter.
    pub delta: f64,
    pub width: WidthConvention,
    /// TSMDP resampling state (0-based).
    pub resample_state: usize,
    pub epsilon_schedule: EpsilonSchedule,
    /// Symmetric Dirichlet pseudo-count of the posterior-sampling agents.
    pub prior_alpha: f64,
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self {
            kind: AgentKind::Tsde,
            delta: 0.05,
            width: WidthConvention::Experiment,
            resample_state: 0,
            epsilon_schedule: EpsilonSchedule::None,
            prior_alpha: 0.1,
        }
    }
}

impl AgentSpec {
    pub fn new(kind: AgentKind) -> Self {
        Self { kind, ..Self::default() }
    }

    /// Instantiates the agent. Only [`AgentKind::Optimal`] looks at `truth`.
    pub fn build(
        &self,
        known: KnownStructure,
        truth: &Mdp,
        horizon: u64,
        solver: SolverOptions,
    ) -> Result<Box<dyn Agent + Send>, AgentError> {
        let epsilon = self.epsilon_schedule;
        Ok(match self.kind {
            AgentKind::Tsde => {
                Box::new(PosteriorSamplingAgent::new(EpisodeRule::Tsde, known, self.prior_alpha, epsilon, solver)?)
            }
            AgentKind::LazyPsrl => Box::new(PosteriorSamplingAgent::new(
                EpisodeRule::DoublingOnly,
                known,
                self.prior_alpha,
                epsilon,
                solver,
            )?),
            AgentKind::Tsmdp => {
                if self.resample_state >= known.num_states {
                    return Err(AgentError::ResampleStateOutOfRange {
                        state: self.resample_state,
                        num_states: known.num_states,
                    });
                }
                Box::new(PosteriorSamplingAgent::new(
                    EpisodeRule::OnVisit(self.resample_state),
                    known,
                    self.prior_alpha,
                    epsilon,
                    solver,
                )?)
            }
            AgentKind::Ucrl2 => {
                if !(self.delta > 0.0 && self.delta < 1.0) {
                    return Err(AgentError::InvalidDelta(self.delta));
                }
                Box::new(Ucrl2Agent::new(known, self.delta, self.width, horizon, solver))
            }
            AgentKind::Optimal => Box::new(OptimalAgent::new(truth, &solver)?),
        })
    }
}

/// Per-episode planning record.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeInfo {
    pub start: u64,
    /// `J(theta_k)` of the sampled (or optimistic) model.
    pub gain: f64,
    /// Requested slack `epsilon_k` (zero for exact solves).
    pub epsilon: f64,
    /// Certified Bellman residual of the plan.
    pub residual: f64,
    pub iterations: u64,
    /// Extra posterior draws needed because the solver failed.
    pub resamples: u32,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("planning failed in episode {episode} after {attempts} posterior draws: {source}")]
    Planning { episode: usize, attempts: u32, source: SolveError },
    #[error("solving the true model failed: {0}")]
    Truth(SolveError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error("UCRL2 delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("resample state {state} out of range for {num_states} states")]
    ResampleStateOutOfRange { state: usize, num_states: usize },
}

/// A learner interacting with the system one step at a time.
///
/// At each `t = 1, 2, ...` the harness calls [`Agent::act`] with the current
/// state and then [`Agent::observe`] with the realized transition.
pub trait Agent {
    fn kind(&self) -> AgentKind;

    /// Chooses `a_t`. Episode boundaries are decided here, before acting.
    fn act(&mut self, t: u64, state: usize, rng: &mut SimRng) -> Result<usize, AgentError>;

    fn observe(&mut self, state: usize, action: usize, next_state: usize) -> Result<(), AgentError>;

    fn schedule(&self) -> &EpisodeSchedule;

    fn episodes(&self) -> &[EpisodeInfo];
}
