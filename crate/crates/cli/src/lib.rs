//! Experiment driver: configuration, orchestration and report output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub mod config;
pub mod experiments;
pub mod search;
pub mod svg;

pub use config::{BoundaryData, Experiment, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Core(dmpcut_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<dmpcut_core::Error> for CliError {
    fn from(e: dmpcut_core::Error) -> Self {
        match e {
            dmpcut_core::Error::Config(m) => CliError::Config(m),
            dmpcut_core::Error::Io(source) => CliError::Io { path: PathBuf::new(), source },
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 1 for failed checks and numerical errors, 2 for configuration, 3 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) | CliError::Core(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

/// One asserted inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.to_string(), passed, detail: detail.into() }
    }

    /// `lhs <= rhs`, with the values in the detail.
    pub fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Check::new(name, lhs <= rhs, format!("{lhs:e} <= {rhs:e}"))
    }
}

/// Everything an experiment produces before it is written out.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    /// `key=value` lines.
    pub results: String,
    pub notes: Vec<String>,
    pub csv: String,
    pub checks: Vec<Check>,
    /// Extra files (`name`, contents) for the output directory.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn report(&self, cfg: &ExperimentConfig) -> String {
        let mut s = String::from("[config]\n");
        s.push_str(&cfg.describe());
        s.push_str("\n[results]\n");
        s.push_str(&self.results);
        if !self.notes.is_empty() {
            s.push_str("\n[notes]\n");
            for n in &self.notes {
                let _ = writeln!(s, "{n}");
            }
        }
        s.push_str("\n[checks]\n");
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Writes `report.txt`, `results.csv` and the extra files into `cfg.output_dir`.
pub fn write_outcome(cfg: &ExperimentConfig, outcome: &Outcome) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    write_file(&dir.join("report.txt"), &outcome.report(cfg))?;
    write_file(&dir.join("results.csv"), &outcome.csv)?;
    for (name, contents) in &outcome.files {
        write_file(&dir.join(name), contents)?;
    }
    Ok(())
}

/// Runs, writes artifacts, and turns the first failed check into an error.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let outcome = experiments::execute(cfg)?;
    write_outcome(cfg, &outcome)?;
    if let Some(c) = outcome.first_failure() {
        return Err(CliError::Check(format!("{}: {}", c.name, c.detail)));
    }
    Ok(outcome)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    ExperimentConfig::parse(&text)
}
