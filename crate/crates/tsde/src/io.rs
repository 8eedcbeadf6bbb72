//! MDP JSON files.
//!
//! ```json
//! {
//!   "num_states": 2,
//!   "num_actions": 2,
//!   "initial_state": 0,
//!   "cost":   [[c00, c01], [c10, c11]],
//!   "kernel": [[[p000, p001], [p010, p011]],
//!              [[p100, p101], [p110, p111]]]
//! }
//! ```
//!
//! `cost[s][a]` and `kernel[s][a][s']`, all indices 0-based. Unknown keys
//! are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsde_core::{Mdp, MdpError};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
}

/// A well-formed JSON document that does not describe a valid MDP.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("field `{field}` {detail}")]
    Shape { field: String, detail: String },
    #[error("invalid MDP:\n{}", format_violations(.0))]
    Invalid(MdpError),
}

impl FormatError {
    pub fn is_validation(&self) -> bool {
        matches!(self, FormatError::Invalid(_))
    }
}

fn format_violations(e: &MdpError) -> String {
    match e {
        MdpError::Invalid(vs) => vs.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"),
        other => format!("  {other}"),
    }
}

/// On-disk layout of an MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub initial_state: usize,
    pub cost: Vec<Vec<f64>>,
    pub kernel: Vec<Vec<Vec<f64>>>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
        let cost = (0..s_n).map(|s| (0..a_n).map(|a| mdp.cost(s, a)).collect()).collect();
        let kernel = (0..s_n).map(|s| (0..a_n).map(|a| mdp.kernel().row(s, a).to_vec()).collect()).collect();
        Self { num_states: s_n, num_actions: a_n, initial_state: mdp.initial_state(), cost, kernel }
    }

    /// Checks nesting lengths, flattens and validates.
    pub fn into_mdp(self) -> Result<Mdp, FormatError> {
        let (s_n, a_n) = (self.num_states, self.num_actions);
        let shape = |field: String, detail: String| Err(FormatError::Shape { field, detail });
        if self.cost.len() != s_n {
            return shape("cost".into(), format!("has {} rows, expected num_states = {s_n}", self.cost.len()));
        }
        if self.kernel.len() != s_n {
            return shape("kernel".into(), format!("has {} rows, expected num_states = {s_n}", self.kernel.len()));
        }
        let mut cost = Vec::with_capacity(s_n * a_n);
        for (s, row) in self.cost.iter().enumerate() {
            if row.len() != a_n {
                return shape(format!("cost[{s}]"), format!("has {} entries, expected num_actions = {a_n}", row.len()));
            }
            cost.extend_from_slice(row);
        }
        let mut kernel = Vec::with_capacity(s_n * a_n * s_n);
        for (s, rows) in self.kernel.iter().enumerate() {
            if rows.len() != a_n {
                return shape(format!("kernel[{s}]"), format!("has {} rows, expected num_actions = {a_n}", rows.len()));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != s_n {
                    return shape(
                        format!("kernel[{s}][{a}]"),
                        format!("has {} entries, expected num_states = {s_n}", row.len()),
                    );
                }
                kernel.extend_from_slice(row);
            }
        }
        Mdp::new(s_n, a_n, cost, kernel, self.initial_state).map_err(FormatError::Invalid)
    }
}

/// Parses and validates MDP JSON; `origin` only labels errors.
pub fn parse_mdp(text: &str, origin: &Path) -> Result<Mdp, LoadError> {
    let file: MdpFile =
        serde_json::from_str(text).map_err(|source| LoadError::Parse { path: origin.to_path_buf(), source })?;
    file.into_mdp().map_err(|source| LoadError::Format { path: origin.to_path_buf(), source })
}

pub fn load_mdp(path: &Path) -> Result<Mdp, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })?;
    parse_mdp(&text, path)
}

pub fn mdp_to_json(mdp: &Mdp) -> String {
    let mut s = serde_json::to_string_pretty(&MdpFile::from_mdp(mdp)).expect("MDP tables serialize");
    s.push('\n');
    s
}

pub fn save_mdp(mdp: &Mdp, path: &Path) -> std::io::Result<()> {
    fs::write(path, mdp_to_json(mdp))
}
