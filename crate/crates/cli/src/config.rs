//! Flat `key = value` experiment configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Unknown or repeated
//! keys are rejected so that typos never fall back to defaults silently.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use dmpcut_core::analytics::MAX_REFERENCE_LEVEL;
use dmpcut_core::cutoff::CutoffMode;
use dmpcut_core::mesh::{MeshFamily, MeshKind};
use dmpcut_core::plap::P_RANGE;

use crate::CliError;

pub const MAX_TRIALS: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    ScalarRd,
    ScalarLaplace,
    VectorLaplace,
    PLaplace,
    DmpSearch,
    Convergence,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::ScalarRd => "scalar_rd",
            Experiment::ScalarLaplace => "scalar_laplace",
            Experiment::VectorLaplace => "vector_laplace",
            Experiment::PLaplace => "p_laplace",
            Experiment::DmpSearch => "dmp_search",
            Experiment::Convergence => "convergence",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "scalar_rd" => Experiment::ScalarRd,
            "scalar_laplace" => Experiment::ScalarLaplace,
            "vector_laplace" => Experiment::VectorLaplace,
            "p_laplace" => Experiment::PLaplace,
            "dmp_search" => Experiment::DmpSearch,
            "convergence" => Experiment::Convergence,
            _ => {
                return Err(format!(
                    "unknown experiment `{s}` (expected scalar_rd, scalar_laplace, vector_laplace, \
                     p_laplace, dmp_search or convergence)"
                ))
            }
        })
    }
}

/// Dirichlet data accepted in configuration files.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryData {
    /// `a + b x + c y`
    Linear([f64; 3]),
    /// `amplitude` times the hat function of a boundary vertex of the mesh.
    Spike { vertex: usize, amplitude: f64 },
}

impl BoundaryData {
    pub fn describe(&self) -> String {
        match self {
            BoundaryData::Linear([a, b, c]) => format!("linear:{a},{b},{c}"),
            BoundaryData::Spike { vertex, amplitude } => format!("spike:{vertex},{amplitude}"),
        }
    }
}

impl FromStr for BoundaryData {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<&str> = args.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
        let real = |a: &str| a.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(format!("`{a}` is not a finite number"));
        match kind.trim() {
            "constant" if nums.len() == 1 => Ok(BoundaryData::Linear([real(nums[0])?, 0.0, 0.0])),
            "linear" if nums.len() == 3 => {
                Ok(BoundaryData::Linear([real(nums[0])?, real(nums[1])?, real(nums[2])?]))
            }
            "spike" if (1..=2).contains(&nums.len()) => {
                let vertex = nums[0].parse().map_err(|_| format!("`{}` is not a vertex index", nums[0]))?;
                let amplitude = if nums.len() == 2 { real(nums[1])? } else { -1.0 };
                Ok(BoundaryData::Spike { vertex, amplitude })
            }
            _ => Err(format!(
                "`{s}` is not boundary data (expected constant:V, linear:A,B,C or spike:VERTEX[,AMPLITUDE])"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub trials: u64,
    pub top_k: usize,
    pub threshold: f64,
    pub amplitude: f64,
    pub kinds: Vec<MeshKind>,
    pub resolutions: Vec<usize>,
    pub perturbations: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub mesh: MeshFamily,
    pub degree: usize,
    pub c: f64,
    pub f: f64,
    pub g: BoundaryData,
    pub g2: BoundaryData,
    pub p: f64,
    pub mode: CutoffMode,
    pub include_origin: bool,
    pub solver_tol: f64,
    pub output_dir: PathBuf,
    pub reference_level: u32,
    pub search: SearchConfig,
    pub convergence_n: Vec<usize>,
}

const KEYS: &[&str] = &[
    "experiment",
    "mesh.kind",
    "mesh.n",
    "mesh.perturbation",
    "mesh.seed",
    "fe.degree",
    "problem.c",
    "problem.f",
    "problem.g",
    "problem.g2",
    "problem.p",
    "cutoff.mode",
    "cutoff.include_origin",
    "solver.tol",
    "output.dir",
    "reference.level",
    "search.trials",
    "search.top_k",
    "search.threshold",
    "search.amplitude",
    "search.kinds",
    "search.n",
    "search.perturbation",
    "convergence.n",
];

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn get<T: FromStr>(&self, key: &str, default: Option<T>) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            Some((line, v)) => v
                .parse()
                .map_err(|e| CliError::Config(format!("line {line}: {key}: {e}"))),
            None => default.ok_or_else(|| CliError::Config(format!("{key}: missing required key"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let (line, raw) = self.0.get(key).map(|(l, v)| (*l, v.as_str())).unwrap_or((0, default));
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| CliError::Config(format!("line {line}: {key}: `{s}`: {e}"))))
            .collect()
    }
}

fn invalid(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {message}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}

fn parse_mode(s: &str) -> Result<CutoffMode, String> {
    match s {
        "positive_part_sup" => Ok(CutoffMode::PositivePartSup),
        "plain_sup" => Ok(CutoffMode::PlainSup),
        _ => Err(format!("unknown cutoff mode `{s}` (expected positive_part_sup or plain_sup)")),
    }
}

/// Wrapper so that core parse errors display without their prefix.
struct Kind(MeshKind);

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse().map(Kind).map_err(|_| format!("unknown mesh kind `{s}` (expected structured, perturbed or obtuse_band)"))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected `key = value`", i + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(CliError::Config(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if map.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        let e = Entries(map);

        let experiment: Experiment = e.get("experiment", None)?;
        let kind = e.get::<Kind>("mesh.kind", Some(Kind(MeshKind::Structured)))?.0;
        let n: usize = e.get("mesh.n", Some(4))?;
        let perturbation: f64 = e.get("mesh.perturbation", Some(0.0))?;
        let seed: u64 = e.get("mesh.seed", Some(0))?;
        let degree: usize = e.get("fe.degree", Some(1))?;
        let c: f64 = e.get("problem.c", Some(0.0))?;
        let f: f64 = e.get("problem.f", Some(0.0))?;
        let g: BoundaryData = e.get("problem.g", Some(BoundaryData::Linear([0.0; 3])))?;
        let g2: BoundaryData = e.get("problem.g2", Some(BoundaryData::Linear([0.0; 3])))?;
        let p: f64 = e.get("problem.p", Some(2.0))?;
        let mode = match e.0.get("cutoff.mode") {
            Some((line, v)) => parse_mode(v).map_err(|m| CliError::Config(format!("line {line}: cutoff.mode: {m}")))?,
            None => CutoffMode::PositivePartSup,
        };
        let include_origin = match e.0.get("cutoff.include_origin") {
            Some((line, v)) => parse_bool(v)
                .map_err(|m| CliError::Config(format!("line {line}: cutoff.include_origin: {m}")))?,
            None => true,
        };
        let solver_tol: f64 = e.get("solver.tol", Some(1e-10))?;
        let output_dir: PathBuf = e.get("output.dir", Some(PathBuf::from("out")))?;
        let reference_level: u32 = e.get("reference.level", Some(5))?;
        let search = SearchConfig {
            trials: e.get("search.trials", Some(20))?,
            top_k: e.get("search.top_k", Some(10))?,
            threshold: e.get("search.threshold", Some(1e-12))?,
            amplitude: e.get("search.amplitude", Some(-1.0))?,
            kinds: e.list::<Kind>("search.kinds", kind.as_str())?.into_iter().map(|k| k.0).collect(),
            resolutions: e.list("search.n", &n.to_string())?,
            perturbations: e.list("search.perturbation", &perturbation.to_string())?,
        };
        let convergence_n: Vec<usize> = e.list("convergence.n", "2,4,8,16")?;

        let cfg = ExperimentConfig {
            experiment,
            mesh: MeshFamily::new(kind, n, perturbation, seed),
            degree,
            c,
            f,
            g,
            g2,
            p,
            mode,
            include_origin,
            solver_tol,
            output_dir,
            reference_level,
            search,
            convergence_n,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let min_n = if self.mesh.kind == MeshKind::ObtuseBand { 2 } else { 1 };
        if self.mesh.resolution < min_n {
            return Err(invalid("mesh.n", format!("must be at least {min_n} for {}", self.mesh.kind.as_str())));
        }
        if !(0.0..0.5).contains(&self.mesh.perturbation) {
            return Err(invalid("mesh.perturbation", "must lie in [0, 0.5)"));
        }
        if !matches!(self.degree, 1 | 2) {
            return Err(invalid("fe.degree", "must be 1 or 2"));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(invalid("problem.c", format!("sign condition c >= 0 violated (c = {})", self.c)));
        }
        if !(self.f.is_finite() && self.f <= 0.0) {
            return Err(invalid("problem.f", format!("sign condition f <= 0 violated (f = {})", self.f)));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-4) {
            return Err(invalid("solver.tol", "must lie in (0, 1e-4]"));
        }
        if self.reference_level > MAX_REFERENCE_LEVEL {
            return Err(invalid("reference.level", format!("must be at most {MAX_REFERENCE_LEVEL}")));
        }
        match self.experiment {
            Experiment::ScalarLaplace if self.c != 0.0 => {
                return Err(invalid("problem.c", "scalar_laplace requires c = 0 (use scalar_rd)"));
            }
            Experiment::VectorLaplace if self.degree != 1 => {
                return Err(invalid("fe.degree", "vector_laplace supports degree 1 only"));
            }
            Experiment::PLaplace => {
                if !(P_RANGE.0..=P_RANGE.1).contains(&self.p) {
                    return Err(invalid("problem.p", format!("must lie in [{}, {}]", P_RANGE.0, P_RANGE.1)));
                }
                if self.c != 0.0 {
                    return Err(invalid("problem.c", "p_laplace has no reaction term; set c = 0"));
                }
            }
            Experiment::Convergence => {
                let n = &self.convergence_n;
                if n.len() < 2 || n.windows(2).any(|w| w[1] <= w[0]) || n[0] == 0 {
                    return Err(invalid("convergence.n", "needs at least two increasing positive resolutions"));
                }
                let finest = *n.last().unwrap();
                if (1usize << self.reference_level) < 2 * finest {
                    return Err(invalid(
                        "reference.level",
                        format!("2^level must be at least twice the finest resolution {finest}"),
                    ));
                }
            }
            _ => {}
        }
        let s = &self.search;
        if s.trials > MAX_TRIALS {
            return Err(invalid("search.trials", format!("must be at most {MAX_TRIALS}")));
        }
        if !(s.threshold.is_finite() && s.threshold >= 0.0) {
            return Err(invalid("search.threshold", "must be a nonnegative number"));
        }
        if !(s.amplitude.is_finite() && s.amplitude != 0.0) {
            return Err(invalid("search.amplitude", "must be a nonzero number"));
        }
        if s.kinds.is_empty() || s.resolutions.is_empty() || s.perturbations.is_empty() {
            return Err(invalid("search", "kinds, n and perturbation lists must be nonempty"));
        }
        for &n in &s.resolutions {
            if n < 2 {
                return Err(invalid("search.n", "resolutions must be at least 2"));
            }
        }
        for &p in &s.perturbations {
            if !(0.0..0.5).contains(&p) {
                return Err(invalid("search.perturbation", "values must lie in [0, 0.5)"));
            }
        }
        Ok(())
    }

    /// The configuration as `key=value` lines, for report headers.
    pub fn describe(&self) -> String {
        let m = &self.mesh;
        let mut lines = vec![
            format!("experiment={}", self.experiment.as_str()),
            format!("mesh.kind={}", m.kind.as_str()),
            format!("mesh.n={}", m.resolution),
            format!("mesh.perturbation={}", m.perturbation),
            format!("mesh.seed={}", m.seed),
            format!("fe.degree={}", self.degree),
            format!("problem.c={}", self.c),
            format!("problem.f={}", self.f),
            format!("problem.g={}", self.g.describe()),
        ];
        match self.experiment {
            Experiment::VectorLaplace => {
                lines.push(format!("problem.g2={}", self.g2.describe()));
                lines.push(format!("cutoff.include_origin={}", self.include_origin));
            }
            Experiment::PLaplace => lines.push(format!("problem.p={}", self.p)),
            Experiment::DmpSearch => {
                let s = &self.search;
                let join = |v: Vec<String>| v.join(",");
                lines.push(format!("cutoff.mode={}", self.mode.as_str()));
                lines.push(format!("search.trials={}", s.trials));
                lines.push(format!("search.top_k={}", s.top_k));
                lines.push(format!("search.threshold={:e}", s.threshold));
                lines.push(format!("search.amplitude={}", s.amplitude));
                lines.push(format!("search.kinds={}", join(s.kinds.iter().map(|k| k.as_str().to_string()).collect())));
                lines.push(format!("search.n={}", join(s.resolutions.iter().map(ToString::to_string).collect())));
                lines.push(format!("search.perturbation={}", join(s.perturbations.iter().map(ToString::to_string).collect())));
            }
            Experiment::Convergence => {
                let n: Vec<String> = self.convergence_n.iter().map(ToString::to_string).collect();
                lines.push(format!("convergence.n={}", n.join(",")));
            }
            _ => lines.push(format!("cutoff.mode={}", self.mode.as_str())),
        }
        lines.push(format!("solver.tol={:e}", self.solver_tol));
        lines.push(format!("reference.level={}", self.reference_level));
        lines.join("\n") + "\n"
    }
}
