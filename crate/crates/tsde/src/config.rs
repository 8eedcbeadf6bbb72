//! Experiment configuration files (TOML, or JSON by `.json` extension).
//!
//! ```toml
//! [experiment]
//! horizon = 100000
//! runs = 500
//! base_seed = 0              # run i uses seed base_seed + i
//! resample_truth = "per_run" # or "fixed"; default per_run for random envs
//! invariant_checks = true
//! grid_points = 200          # downsampled t grid written to results.csv
//!
//! [env]
//! kind = "riverswim"         # "riverswim" | "random" | "file"
//!
//! [solver]
//! tol = 1e-8
//! max_iters = 1000000
//!
//! [[agents]]
//! agent = "tsde"             # "tsde" | "ucrl2" | "lazy_psrl" | "tsmdp" | "optimal"
//!
//! [[agents]]
//! agent = "tsmdp"
//! resample_state = 2         # 0-based
//! ```
//!
//! Unknown keys are errors everywhere.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsde_core::agents::{AgentKind, AgentSpec, WidthConvention};
use tsde_core::harness::{EnvSpec, ExperimentConfig, TruthMode};
use tsde_core::{EpsilonSchedule, RandomMdpSpec, RiverSwimParams, SolverOptions};

use crate::io::{load_mdp, LoadError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Env(#[from] LoadError),
}

impl ConfigError {
    /// Whether the failure is a syntax/schema problem rather than bad values.
    pub fn is_parse(&self) -> bool {
        matches!(self, ConfigError::Toml { .. } | ConfigError::Json { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: ExperimentSection,
    pub env: EnvSection,
    #[serde(default)]
    pub solver: SolverOptions,
    pub agents: Vec<AgentEntry>,
}

fn default_true() -> bool {
    true
}

fn default_grid_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub horizon: u64,
    pub runs: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_truth: Option<TruthMode>,
    #[serde(default = "default_true")]
    pub invariant_checks: bool,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSection {
    Riverswim(RiverSwimParams),
    Random(RandomMdpSpec),
    /// An MDP JSON file; relative paths resolve against the config's directory.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub agent: AgentKind,
    /// Output subdirectory name; defaults to the agent name, with the
    /// resample state for TSMDP and `_eps` for approximate planning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<WidthConvention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_state: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_schedule: Option<EpsilonSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_alpha: Option<f64>,
}

impl AgentEntry {
    pub fn new(agent: AgentKind) -> Self {
        Self {
            agent,
            label: None,
            delta: None,
            width: None,
            resample_state: None,
            epsilon_schedule: None,
            prior_alpha: None,
        }
    }

    pub fn spec(&self) -> AgentSpec {
        let d = AgentSpec::new(self.agent);
        AgentSpec {
            kind: self.agent,
            delta: self.delta.unwrap_or(d.delta),
            width: self.width.unwrap_or(d.width),
            resample_state: self.resample_state.unwrap_or(d.resample_state),
            epsilon_schedule: self.epsilon_schedule.unwrap_or(d.epsilon_schedule),
            prior_alpha: self.prior_alpha.unwrap_or(d.prior_alpha),
        }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let spec = self.spec();
        let mut l = String::from(self.agent.name());
        if self.agent == AgentKind::Tsmdp {
            l.push_str(&format!("_s{}", spec.resample_state));
        }
        if !spec.epsilon_schedule.is_exact() {
            l.push_str("_eps");
        }
        l
    }

    /// Same agent with every default written out, keeping only the fields
    /// that matter for its kind.
    pub fn resolved(&self) -> Self {
        let s = self.spec();
        let mut out = Self::new(self.agent);
        out.label = Some(self.label());
        match self.agent {
            AgentKind::Ucrl2 => {
                out.delta = Some(s.delta);
                out.width = Some(s.width);
            }
            AgentKind::Tsde | AgentKind::LazyPsrl | AgentKind::Tsmdp => {
                out.prior_alpha = Some(s.prior_alpha);
                out.epsilon_schedule = Some(s.epsilon_schedule);
                if self.agent == AgentKind::Tsmdp {
                    out.resample_state = Some(s.resample_state);
                }
            }
            AgentKind::Optimal => {}
        }
        out
    }
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub horizon: Option<u64>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
    /// Keep only agents whose label or kind name is listed.
    pub agents: Vec<String>,
    pub grid_points: Option<usize>,
}

impl FileConfig {
    pub fn parse_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Toml { path: origin.to_path_buf(), source })
    }

    pub fn parse_json(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Json { path: origin.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::parse_json(&text, path)?
        } else {
            Self::parse_toml(&text, path)?
        };
        if let EnvSection::File { path: p } = &mut cfg.env {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(h) = o.horizon {
            self.experiment.horizon = h;
        }
        if let Some(r) = o.runs {
            self.experiment.runs = r;
        }
        if let Some(s) = o.seed {
            self.experiment.base_seed = s;
        }
        if let Some(g) = o.grid_points {
            self.experiment.grid_points = g;
        }
        if !o.agents.is_empty() {
            for want in &o.agents {
                if !self.agents.iter().any(|a| &a.label() == want || a.agent.name() == want) {
                    return Err(ConfigError::Invalid(format!("no agent matches `{want}`")));
                }
            }
            self.agents.retain(|a| o.agents.iter().any(|w| *w == a.label() || w == a.agent.name()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.experiment.horizon == 0 {
            return bad("experiment.horizon must be at least 1".into());
        }
        if self.experiment.runs == 0 {
            return bad("experiment.runs must be at least 1".into());
        }
        if self.experiment.grid_points == 0 {
            return bad("experiment.grid_points must be at least 1".into());
        }
        if self.agents.is_empty() {
            return bad("at least one [[agents]] entry is required".into());
        }
        if self.experiment.resample_truth == Some(TruthMode::PerRun) && !matches!(self.env, EnvSection::Random(_)) {
            return bad("resample_truth = \"per_run\" needs env.kind = \"random\"".into());
        }
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) {
            return bad(format!("solver.tol must be positive, got {}", self.solver.tol));
        }
        let mut labels = BTreeSet::new();
        for a in &self.agents {
            let label = a.label();
            if label.is_empty() || label.contains(['/', '\\']) || label.starts_with('.') {
                return bad(format!("agent label `{label}` is not a valid directory name"));
            }
            if !labels.insert(label.clone()) {
                return bad(format!("duplicate agent label `{label}`; set `label` to tell them apart"));
            }
            let s = a.spec();
            if !(s.delta > 0.0 && s.delta < 1.0) {
                return bad(format!("{label}: delta must lie in (0, 1), got {}", s.delta));
            }
            if !(s.prior_alpha > 0.0 && s.prior_alpha.is_finite()) {
                return bad(format!("{label}: prior_alpha must be positive, got {}", s.prior_alpha));
            }
        }
        Ok(())
    }

    pub fn env_spec(&self) -> Result<EnvSpec, ConfigError> {
        Ok(match &self.env {
            EnvSection::Riverswim(p) => EnvSpec::RiverSwim(p.clone()),
            EnvSection::Random(s) => EnvSpec::Random(s.clone()),
            EnvSection::File { path } => EnvSpec::Explicit(load_mdp(path)?),
        })
    }

    /// One harness configuration per agent, in file order.
    pub fn experiments(&self) -> Result<Vec<(String, ExperimentConfig)>, ConfigError> {
        self.validate()?;
        let env = self.env_spec()?;
        Ok(self
            .agents
            .iter()
            .map(|a| {
                let cfg = ExperimentConfig {
                    env: env.clone(),
                    agent: a.spec(),
                    horizon: self.experiment.horizon,
                    num_runs: self.experiment.runs,
                    base_seed: self.experiment.base_seed,
                    truth: self.experiment.resample_truth,
                    invariant_checks: self.experiment.invariant_checks,
                    solver: self.solver,
                };
                (a.label(), cfg)
            })
            .collect())
    }

    /// The configuration with all defaults written out.
    pub fn effective(&self) -> Self {
        let mut out = self.clone();
        if out.experiment.resample_truth.is_none() {
            out.experiment.resample_truth = Some(match self.env {
                EnvSection::Random(_) => TruthMode::PerRun,
                _ => TruthMode::Fixed,
            });
        }
        out.agents = self.agents.iter().map(AgentEntry::resolved).collect();
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}
