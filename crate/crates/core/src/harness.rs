//! Single-run simulation and the bookkeeping checks applied to its output.
//!
//! A run with seed `base_seed + run_index` draws the truth (when the
//! environment is random and resampled), then alternates `act` / `step` /
//! `observe` for `t = 1..=T`. Three independent ChaCha streams keep the
//! truth, the environment noise and the agent's randomness apart, so two
//! agents with the same seed face the same truth.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::agents::{AgentError, AgentKind, AgentSpec, EpisodeInfo};
use crate::envs::{make_random_mdp, make_riverswim_with, EnvError, RandomMdpSpec, RiverSwimParams};
use crate::mdp::{Mdp, MdpError};
use crate::rng::{stream, Stream};
use crate::schedule::{episode_count_bound, macro_episode_bound, EpisodeSchedule};
use crate::solver::{solve, SolveError, SolverOptions};

/// Whether a random environment is redrawn for every run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum TruthMode {
    /// `theta*` drawn from the prior on each run's `Truth` stream.
    PerRun,
    /// One model shared by all runs.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    RiverSwim(RiverSwimParams),
    Random(RandomMdpSpec),
    Explicit(Mdp),
}

impl EnvSpec {
    pub fn default_truth_mode(&self) -> TruthMode {
        match self {
            EnvSpec::Random(_) => TruthMode::PerRun,
            _ => TruthMode::Fixed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: AgentSpec,
    pub horizon: u64,
    pub num_runs: u64,
    pub base_seed: u64,
    /// `None` picks [`EnvSpec::default_truth_mode`].
    pub truth: Option<TruthMode>,
    /// Fail a run whose trace violates [`check_invariants`].
    pub invariant_checks: bool,
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, agent: AgentSpec, horizon: u64) -> Self {
        Self {
            env,
            agent,
            horizon,
            num_runs: 1,
            base_seed: 0,
            truth: None,
            invariant_checks: false,
            solver: SolverOptions::default(),
        }
    }

    pub fn truth_mode(&self) -> TruthMode {
        self.truth.unwrap_or_else(|| self.env.default_truth_mode())
    }

    pub fn run_seed(&self, run_index: u64) -> u64 {
        self.base_seed.wrapping_add(run_index)
    }

    /// The true model faced by run `run_index`.
    pub fn truth_for(&self, run_index: u64) -> Result<Mdp, HarnessError> {
        match (&self.env, self.truth_mode()) {
            (EnvSpec::Random(spec), TruthMode::PerRun) => {
                Ok(make_random_mdp(spec, &mut stream(self.run_seed(run_index), Stream::Truth))?)
            }
            (EnvSpec::Random(spec), TruthMode::Fixed) => Ok(spec.generate()?),
            (_, TruthMode::PerRun) => Err(HarnessError::Config(String::from(
                "per_run truth is only meaningful for random environments",
            ))),
            (EnvSpec::RiverSwim(p), TruthMode::Fixed) => Ok(make_riverswim_with(p)?),
            (EnvSpec::Explicit(m), TruthMode::Fixed) => {
                let violations = m.validate();
                if violations.is_empty() {
                    Ok(m.clone())
                } else {
                    Err(HarnessError::Mdp(MdpError::Invalid(violations)))
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("solving the true model failed: {0}")]
    Truth(SolveError),
    #[error("building the agent failed: {0}")]
    Build(AgentError),
    #[error("agent failed at t = {t}: {source}")]
    Agent { t: u64, source: AgentError },
    #[error("{} invariant violations, first: {}", .0.len(), .0[0])]
    Invariants(Vec<InvariantViolation>),
}

/// Everything recorded about one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretTrace {
    pub run_index: u64,
    pub seed: u64,
    pub agent: AgentSpec,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: u64,
    /// `J(theta*)`.
    pub j_star: f64,
    /// `sp(h(theta*))`.
    pub span: f64,
    /// `cumulative_cost[t - 1] = sum_{tau <= t} c(s_tau, a_tau)`.
    pub cumulative_cost: Vec<f64>,
    /// `s_t * A + a_t` for each step.
    pub pairs: Vec<u32>,
    /// Finalized with `end = T + 1`.
    pub schedule: EpisodeSchedule,
    pub episodes: Vec<EpisodeInfo>,
    pub solver: SolverOptions,
}

impl RegretTrace {
    /// `R(t) = sum_{tau <= t} c_tau - t * J(theta*)`; `R(0) = 0`.
    pub fn regret(&self, t: u64) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.cumulative_cost[(t - 1) as usize] - t as f64 * self.j_star
    }

    pub fn final_regret(&self) -> f64 {
        self.regret(self.horizon)
    }

    pub fn num_episodes(&self) -> usize {
        self.schedule.num_episodes()
    }

    pub fn num_macro_episodes(&self) -> usize {
        self.schedule.num_macro_episodes()
    }

    pub fn state_at(&self, t: u64) -> usize {
        self.pairs[(t - 1) as usize] as usize / self.num_actions
    }

    pub fn action_at(&self, t: u64) -> usize {
        self.pairs[(t - 1) as usize] as usize % self.num_actions
    }

    /// `sum_k T_k epsilon_k`.
    pub fn weighted_epsilon_sum(&self) -> f64 {
        self.schedule.lengths().iter().zip(&self.episodes).map(|(&len, e)| len as f64 * e.epsilon).sum()
    }
}

/// Simulates run `run_index` of `config`.
pub fn run_one(config: &ExperimentConfig, run_index: u64) -> Result<RegretTrace, HarnessError> {
    if config.horizon == 0 {
        return Err(HarnessError::Mdp(MdpError::EmptyHorizon));
    }
    let seed = config.run_seed(run_index);
    let truth = config.truth_for(run_index)?;
    let opt = solve(&truth, &config.solver).map_err(HarnessError::Truth)?;
    let mut agent = config
        .agent
        .build(truth.known_structure(), &truth, config.horizon, config.solver)
        .map_err(HarnessError::Build)?;
    let mut env_rng = stream(seed, Stream::Environment);
    let mut agent_rng = stream(seed, Stream::Agent);

    let n = config.horizon as usize;
    let num_actions = truth.num_actions();
    let mut cumulative_cost = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    let mut state = truth.initial_state();
    let mut total = 0.0;
    for t in 1..=config.horizon {
        let action = agent.act(t, state, &mut agent_rng).map_err(|source| HarnessError::Agent { t, source })?;
        let (next, cost) = truth.step(state, action, &mut env_rng)?;
        agent.observe(state, action, next).map_err(|source| HarnessError::Agent { t, source })?;
        total += cost;
        cumulative_cost.push(total);
        pairs.push((state * num_actions + action) as u32);
        state = next;
    }
    let mut schedule = agent.schedule().clone();
    schedule.finalize(config.horizon);
    let trace = RegretTrace {
        run_index,
        seed,
        agent: config.agent.clone(),
        num_states: truth.num_states(),
        num_actions,
        horizon: config.horizon,
        j_star: opt.gain,
        span: opt.span,
        cumulative_cost,
        pairs,
        schedule,
        episodes: agent.episodes().to_vec(),
        solver: config.solver,
    };
    if config.invariant_checks {
        let violations = check_invariants(&trace);
        if !violations.is_empty() {
            return Err(HarnessError::Invariants(violations));
        }
    }
    Ok(trace)
}

/// Which invariant a [`InvariantViolation`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    /// Episode starts begin at 1, increase, and the schedule ends at `T + 1`.
    Schedule,
    /// `K_T <= sqrt(2 S A T ln T)`.
    EpisodeBound,
    /// `M_T <= S A ln T`.
    MacroBound,
    /// `K_T <= sqrt(2 M_T T)`.
    EpisodeMacroBound,
    /// `T_k <= T_{k-1} + 1`.
    LengthGrowth,
    /// Inside a macro episode every episode but the last has `T_k = T_{k-1} + 1`.
    MacroInterior,
    /// Recorded boundaries differ from a replay of the stopping rule.
    Replay,
    /// Recorded macro flags differ from a replay of the doubling rule.
    MacroReplay,
    /// A plan's Bellman residual exceeds its slack.
    Slack,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantViolation {
    pub check: Check,
    /// 1-based episode index, when the violation is tied to one.
    pub episode: Option<usize>,
    pub detail: String,
}

impl core::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self.episode {
            Some(k) => write!(f, "{:?} (episode {}): {}", self.check, k, self.detail),
            None => write!(f, "{:?}: {}", self.check, self.detail),
        }
    }
}

fn violation(check: Check, episode: Option<usize>, detail: String) -> InvariantViolation {
    InvariantViolation { check, episode, detail }
}

/// Replays the episode rule of `kind` on the recorded pairs and returns the
/// starts and macro flags it implies. Counts are rebuilt from scratch.
pub fn replay_schedule(trace: &RegretTrace) -> (Vec<u64>, Vec<bool>) {
    let pairs = trace.num_states * trace.num_actions;
    let mut n = vec![0u64; pairs];
    let mut at_start = vec![0u64; pairs];
    let mut starts: Vec<u64> = Vec::new();
    let mut flags: Vec<bool> = Vec::new();
    let kind = trace.agent.kind;
    for t in 1..=trace.horizon {
        let doubled = n.iter().zip(&at_start).any(|(&now, &then)| now > 2 * then);
        let fire = match starts.last() {
            None => true,
            Some(&start) => match kind {
                AgentKind::Tsde => {
                    let prev = if starts.len() < 2 { 1 } else { start - starts[starts.len() - 2] };
                    t > start + prev || doubled
                }
                AgentKind::LazyPsrl | AgentKind::Ucrl2 => doubled,
                AgentKind::Tsmdp => trace.state_at(t) == trace.agent.resample_state,
                AgentKind::Optimal => false,
            },
        };
        if fire {
            flags.push(starts.is_empty() || doubled);
            starts.push(t);
            at_start.copy_from_slice(&n);
        }
        n[trace.pairs[(t - 1) as usize] as usize] += 1;
    }
    (starts, flags)
}

/// All bookkeeping checks that apply to the trace's agent. Empty means the
/// trace is consistent.
pub fn check_invariants(trace: &RegretTrace) -> Vec<InvariantViolation> {
    let mut out = Vec::new();
    let sched = &trace.schedule;
    let starts = sched.starts();
    let t_max = trace.horizon;

    if starts.first() != Some(&1) {
        out.push(violation(Check::Schedule, None, format!("first start is {:?}, expected 1", starts.first())));
    }
    if let Some(k) = starts.windows(2).position(|w| w[1] <= w[0]) {
        out.push(violation(Check::Schedule, Some(k + 2), format!("start {} follows {}", starts[k + 1], starts[k])));
    }
    if sched.end() != Some(t_max + 1) {
        out.push(violation(Check::Schedule, None, format!("end {:?}, expected {}", sched.end(), t_max + 1)));
    }
    if sched.macro_flags().len() != starts.len() || trace.episodes.len() != starts.len() {
        out.push(violation(
            Check::Schedule,
            None,
            format!("{} starts, {} macro flags, {} episode records", starts.len(), sched.macro_flags().len(), trace.episodes.len()),
        ));
    }
    if !out.is_empty() {
        return out;
    }

    let (replayed, replayed_flags) = replay_schedule(trace);
    if replayed != starts {
        let k = replayed.iter().zip(starts).position(|(a, b)| a != b).unwrap_or(replayed.len().min(starts.len()));
        out.push(violation(
            Check::Replay,
            Some(k + 1),
            format!("recorded start {:?}, replay gives {:?}", starts.get(k), replayed.get(k)),
        ));
    } else if replayed_flags != sched.macro_flags() {
        let k = replayed_flags.iter().zip(sched.macro_flags()).position(|(a, b)| a != b).unwrap_or(0);
        out.push(violation(
            Check::MacroReplay,
            Some(k + 1),
            format!("recorded flag {}, replay gives {}", sched.macro_flags()[k], replayed_flags[k]),
        ));
    }

    for (k, e) in trace.episodes.iter().enumerate() {
        let allowed = e.epsilon.max(trace.solver.tol);
        let planned = matches!(trace.agent.kind, AgentKind::Tsde | AgentKind::LazyPsrl | AgentKind::Tsmdp);
        if planned && !(e.residual <= allowed) {
            out.push(violation(Check::Slack, Some(k + 1), format!("residual {:e} exceeds {:e}", e.residual, allowed)));
        }
    }

    let k_t = starts.len();
    let m_t = sched.num_macro_episodes();
    // Doubling-only schedules obey the macro-episode count too.
    if matches!(trace.agent.kind, AgentKind::Tsde | AgentKind::LazyPsrl) && t_max >= 2 {
        let mb = macro_episode_bound(trace.num_states, trace.num_actions, t_max);
        if m_t as f64 > mb {
            out.push(violation(Check::MacroBound, None, format!("M_T = {m_t} > {mb:.3}")));
        }
    }
    if trace.agent.kind != AgentKind::Tsde {
        return out;
    }

    let lengths = sched.lengths();
    if t_max >= 2 {
        let kb = episode_count_bound(trace.num_states, trace.num_actions, t_max);
        if k_t as f64 > kb {
            out.push(violation(Check::EpisodeBound, None, format!("K_T = {k_t} > {kb:.3}")));
        }
    }
    let kmb = libm::sqrt(2.0 * m_t as f64 * t_max as f64);
    if k_t as f64 > kmb {
        out.push(violation(Check::EpisodeMacroBound, None, format!("K_T = {k_t} > sqrt(2 M_T T) = {kmb:.3}")));
    }
    let mut prev = 1;
    for (k, &len) in lengths.iter().enumerate() {
        if len > prev + 1 {
            out.push(violation(Check::LengthGrowth, Some(k + 1), format!("T_k = {len} > T_(k-1) + 1 = {}", prev + 1)));
        }
        let next_is_macro = sched.macro_flags().get(k + 1).copied();
        if next_is_macro == Some(false) && len != prev + 1 {
            out.push(violation(
                Check::MacroInterior,
                Some(k + 1),
                format!("T_k = {len} but the next episode is not a macro start, expected {}", prev + 1),
            ));
        }
        prev = len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::EpsilonSchedule;

    fn config(kind: AgentKind, horizon: u64) -> ExperimentConfig {
        ExperimentConfig::new(EnvSpec::RiverSwim(RiverSwimParams::default()), AgentSpec::new(kind), horizon)
    }

    #[test]
    fn traces_are_consistent_for_every_agent() {
        for kind in [AgentKind::Tsde, AgentKind::LazyPsrl, AgentKind::Tsmdp, AgentKind::Ucrl2, AgentKind::Optimal] {
            let trace = run_one(&config(kind, 3000), 7).unwrap();
            assert_eq!(trace.cumulative_cost.len(), 3000);
            assert_eq!(trace.regret(0), 0.0);
            let v = check_invariants(&trace);
            assert!(v.is_empty(), "{kind:?}: {v:?}");
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let c = config(AgentKind::Tsde, 2000);
        assert_eq!(run_one(&c, 3).unwrap(), run_one(&c, 3).unwrap());
        assert_ne!(run_one(&c, 3).unwrap().cumulative_cost, run_one(&c, 4).unwrap().cumulative_cost);
    }

    #[test]
    fn tampered_schedule_is_caught() {
        let mut trace = run_one(&config(AgentKind::Tsde, 2000), 1).unwrap();
        let mut starts = trace.schedule.starts().to_vec();
        let flags = trace.schedule.macro_flags().to_vec();
        let k = (1..starts.len() - 1).find(|&k| starts[k] + 1 < starts[k + 1]).unwrap();
        starts[k] += 1;
        trace.schedule = EpisodeSchedule::from_parts(starts, flags, Some(2001));
        let v = check_invariants(&trace);
        assert!(v.iter().any(|x| x.check == Check::Replay));
    }

    #[test]
    fn per_run_truth_rejected_for_riverswim() {
        let mut c = config(AgentKind::Tsde, 10);
        c.truth = Some(TruthMode::PerRun);
        assert!(matches!(run_one(&c, 0), Err(HarnessError::Config(_))));
    }

    #[test]
    fn per_run_truth_differs_between_runs() {
        let c = ExperimentConfig::new(EnvSpec::Random(RandomMdpSpec::default()), AgentSpec::new(AgentKind::Tsde), 10);
        assert_ne!(c.truth_for(0).unwrap(), c.truth_for(1).unwrap());
        let mut fixed = c.clone();
        fixed.truth = Some(TruthMode::Fixed);
        assert_eq!(fixed.truth_for(0).unwrap(), fixed.truth_for(1).unwrap());
    }

    #[test]
    fn epsilon_accounting() {
        let mut c = config(AgentKind::Tsde, 5000);
        c.agent.epsilon_schedule = EpsilonSchedule::OneOverKPlusOne;
        let trace = run_one(&c, 2).unwrap();
        assert!(check_invariants(&trace).is_empty());
        assert!(trace.weighted_epsilon_sum() <= trace.num_episodes() as f64);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        assert!(run_one(&config(AgentKind::Tsde, 0), 0).is_err());
    }
}
