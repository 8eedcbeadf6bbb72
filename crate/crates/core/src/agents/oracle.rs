use alloc::vec;
use alloc::vec::Vec;

use super::{Agent, AgentError, AgentKind, EpisodeInfo};
use crate::mdp::{Mdp, StationaryPolicy};
use crate::rng::SimRng;
use crate::schedule::EpisodeSchedule;
use crate::solver::{solve, SolverOptions};

/// Plays `pi*(theta*)` for the whole run (a single episode).
#[derive(Debug, Clone)]
pub struct OptimalAgent {
    policy: StationaryPolicy,
    schedule: EpisodeSchedule,
    episodes: Vec<EpisodeInfo>,
}

impl OptimalAgent {
    pub fn new(truth: &Mdp, solver: &SolverOptions) -> Result<Self, AgentError> {
        let r = solve(truth, solver).map_err(AgentError::Truth)?;
        let info = EpisodeInfo {
            start: 1,
            gain: r.gain,
            epsilon: 0.0,
            residual: r.bellman_residual,
            iterations: r.iterations,
            resamples: 0,
        };
        Ok(Self { policy: r.policy, schedule: EpisodeSchedule::new(), episodes: vec![info] })
    }

    pub fn policy(&self) -> &StationaryPolicy {
        &self.policy
    }
}

impl Agent for OptimalAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Optimal
    }

    fn act(&mut self, t: u64, state: usize, _rng: &mut SimRng) -> Result<usize, AgentError> {
        if self.schedule.num_episodes() == 0 {
            self.schedule.begin(t, true);
        }
        Ok(self.policy.action(state))
    }

    fn observe(&mut self, _state: usize, _action: usize, _next: usize) -> Result<(), AgentError> {
        Ok(())
    }

    fn schedule(&self) -> &EpisodeSchedule {
        &self.schedule
    }

    fn episodes(&self) -> &[EpisodeInfo] {
        &self.episodes
    }
}
