//! Result files.
//!
//! A results directory holds `config.toml` (the effective configuration) and
//! one subdirectory per agent label with:
//!
//! * `results.csv`: header `run_id,t,cumulative_cost,regret`, one row per run
//!   and grid time, runs in index order and times increasing;
//! * `summary.json`: per-run `K_T`, `M`, `J_star`, `span`, `seed` and the
//!   final mean regret with its standard error.
//!
//! `emit_plot_data` turns these into `<label>.mean_regret.dat` (`t mean_regret`),
//! `<label>.stderr.dat` (`t stderr`) and a gnuplot script `regret.gp`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsde_core::schedule::{episode_count_bound, macro_episode_bound};

use crate::config::{AgentEntry, FileConfig};
use crate::experiment::{mean_and_stderr, AggregateResult};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_ECHO: &str = "config.toml";
pub const CSV_HEADER: [&str; 4] = ["run_id", "t", "cumulative_cost", "regret"];

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("{0}: no agent results found (expected <label>/{RESULTS_CSV})")]
    NoResults(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: u64,
    pub seed: u64,
    #[serde(rename = "K_T")]
    pub k_t: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "J_star")]
    pub j_star: f64,
    pub span: f64,
    pub final_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub agent: AgentEntry,
    pub horizon: u64,
    pub num_runs: u64,
    pub base_seed: u64,
    pub final_mean_regret: f64,
    pub final_stderr: f64,
    pub max_k_t: usize,
    pub max_m: usize,
    pub k_t_bound: f64,
    pub m_bound: f64,
    pub runs: Vec<RunSummary>,
}

impl Summary {
    pub fn new(agg: &AggregateResult, agent: &AgentEntry, cfg: &FileConfig, num_states: usize, num_actions: usize) -> Self {
        let horizon = cfg.experiment.horizon;
        Self {
            label: agg.label.clone(),
            agent: agent.resolved(),
            horizon,
            num_runs: agg.runs.len() as u64,
            base_seed: cfg.experiment.base_seed,
            final_mean_regret: agg.final_mean(),
            final_stderr: agg.final_stderr(),
            max_k_t: agg.max_k_t(),
            max_m: agg.max_m(),
            k_t_bound: episode_count_bound(num_states, num_actions, horizon),
            m_bound: macro_episode_bound(num_states, num_actions, horizon),
            runs: agg
                .runs
                .iter()
                .map(|r| RunSummary {
                    run_id: r.run_id,
                    seed: r.seed,
                    k_t: r.k_t,
                    m: r.m,
                    j_star: r.j_star,
                    span: r.span,
                    final_regret: r.final_regret,
                })
                .collect(),
        }
    }
}

pub fn write_config_echo(dir: &Path, cfg: &FileConfig) -> Result<PathBuf, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(CONFIG_ECHO);
    fs::write(&path, cfg.effective().to_toml()).map_err(io_err(&path))?;
    Ok(path)
}

pub fn write_results_csv(path: &Path, agg: &AggregateResult) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &agg.runs {
        for (i, t) in agg.grid.iter().enumerate() {
            w.write_record([r.run_id.to_string(), t.to_string(), r.cumulative_cost[i].to_string(), r.regret[i].to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Writes `<dir>/<label>/results.csv` and `summary.json`.
pub fn write_agent_results(dir: &Path, agg: &AggregateResult, summary: &Summary) -> Result<PathBuf, OutputError> {
    let sub = dir.join(&agg.label);
    fs::create_dir_all(&sub).map_err(io_err(&sub))?;
    write_results_csv(&sub.join(RESULTS_CSV), agg)?;
    let path = sub.join(SUMMARY_JSON);
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(sub)
}

/// Mean and standard-error series recovered from one `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub t: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub fn read_series(label: &str, csv_path: &Path) -> Result<Series, OutputError> {
    let csv_err = |source| OutputError::Csv { path: csv_path.to_path_buf(), source };
    let corrupt = |detail: String| OutputError::Corrupt { path: csv_path.to_path_buf(), detail };
    let mut r = csv::Reader::from_path(csv_path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(corrupt(format!("header {:?}, expected {:?}", header.iter().collect::<Vec<_>>(), CSV_HEADER)));
    }
    let mut by_t: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let t: u64 = rec[1].parse().map_err(|_| corrupt(format!("row {}: bad t `{}`", line + 2, &rec[1])))?;
        let regret: f64 = rec[3].parse().map_err(|_| corrupt(format!("row {}: bad regret `{}`", line + 2, &rec[3])))?;
        by_t.entry(t).or_default().push(regret);
    }
    if by_t.is_empty() {
        return Err(corrupt("no data rows".into()));
    }
    let mut s = Series { label: label.to_string(), t: Vec::new(), mean: Vec::new(), stderr: Vec::new() };
    for (t, xs) in by_t {
        let (m, se) = mean_and_stderr(&xs);
        s.t.push(t);
        s.mean.push(m);
        s.stderr.push(se);
    }
    Ok(s)
}

/// Reads every `<label>/results.csv` under `results_dir` (labels sorted) and
/// writes the plot data into `out_dir`.
pub fn emit_plot_data(results_dir: &Path, out_dir: &Path) -> Result<Vec<Series>, OutputError> {
    let mut labels = Vec::new();
    for entry in fs::read_dir(results_dir).map_err(io_err(results_dir))? {
        let entry = entry.map_err(io_err(results_dir))?;
        if entry.path().join(RESULTS_CSV).is_file() {
            labels.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    if labels.is_empty() {
        return Err(OutputError::NoResults(results_dir.to_path_buf()));
    }
    labels.sort();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut all = Vec::new();
    for label in &labels {
        let s = read_series(label, &results_dir.join(label).join(RESULTS_CSV))?;
        write_columns(&out_dir.join(format!("{label}.mean_regret.dat")), "t mean_regret", &s.t, &s.mean)?;
        write_columns(&out_dir.join(format!("{label}.stderr.dat")), "t stderr", &s.t, &s.stderr)?;
        all.push(s);
    }
    let gp = out_dir.join("regret.gp");
    fs::write(&gp, gnuplot_script(&labels)).map_err(io_err(&gp))?;
    Ok(all)
}

fn write_columns(path: &Path, header: &str, t: &[u64], y: &[f64]) -> Result<(), OutputError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    let mut body = || -> std::io::Result<()> {
        writeln!(f, "# {header}")?;
        for (t, y) in t.iter().zip(y) {
            writeln!(f, "{t} {y}")?;
        }
        f.flush()
    };
    body().map_err(io_err(path))
}

fn gnuplot_script(labels: &[String]) -> String {
    let mut s = String::from(
        "# gnuplot regret.gp\nset terminal pngcairo size 900,600\nset output 'regret.png'\n\
         set xlabel 'T'\nset ylabel 'expected regret'\nset key left top\n",
    );
    let plots: Vec<String> = labels
        .iter()
        .map(|l| format!("'< paste {l}.mean_regret.dat {l}.stderr.dat' using 1:2:(2*$4) with yerrorlines title '{l}'"))
        .collect();
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}
