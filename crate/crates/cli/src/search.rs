//! Deterministic scan for discrete maximum principle violations.
//!
//! Every mesh of the configured families is paired with a boundary spike at
//! each of its boundary vertices; the resulting solves are ranked by their
//! DMP violation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use dmpcut_core::analytics::dmp_violation;
use dmpcut_core::assembly::{assemble, solve, ProblemSpec};
use dmpcut_core::cutoff::{sup_boundary, CutoffMode};
use dmpcut_core::data::boundary_spike;
use dmpcut_core::fespace::{FEFunction, FESpace};
use dmpcut_core::field::Located;
use dmpcut_core::mesh::{generate, Mesh, MeshFamily};

use crate::config::{Experiment, ExperimentConfig, SearchConfig};
use crate::experiments::violation_grid;
use crate::{svg, Check, CliError, Outcome};

/// A mesh and spike vertex, with the violation of the discrete solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub family: MeshFamily,
    pub vertex: usize,
    pub amplitude: f64,
    pub violation: f64,
}

impl Fixture {
    pub fn mesh(&self) -> Result<Arc<Mesh>, CliError> {
        Ok(Arc::new(generate(&self.family)?))
    }

    pub fn spec(&self, mesh: &Arc<Mesh>, c: f64, f: f64) -> Result<ProblemSpec, CliError> {
        Ok(ProblemSpec::laplace(boundary_spike(mesh.clone(), self.vertex, self.amplitude)?)
            .with_reaction(c)
            .with_source(f))
    }
}

/// Problem data shared by every fixture of a scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanSettings {
    pub degree: usize,
    pub c: f64,
    pub f: f64,
    pub mode: CutoffMode,
    pub tol: f64,
}

/// Summary of a scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanResult {
    /// Solves performed, duplicates included.
    pub solves: usize,
    /// Distinct (mesh, vertex) pairs.
    pub distinct: usize,
    pub above_threshold: usize,
    /// At most `top_k` fixtures above the threshold, largest violation first.
    pub top: Vec<Fixture>,
}

pub fn families(search: &SearchConfig) -> Vec<MeshFamily> {
    let mut out = Vec::new();
    for &kind in &search.kinds {
        for &n in &search.resolutions {
            for &p in &search.perturbations {
                for seed in 0..search.trials {
                    out.push(MeshFamily::new(kind, n, p, seed));
                }
            }
        }
    }
    out
}

fn solve_spike(space: &Arc<FESpace>, vertex: usize, amplitude: f64, s: &ScanSettings) -> Result<FEFunction, CliError> {
    let spec = ProblemSpec::laplace(boundary_spike(space.mesh_arc().clone(), vertex, amplitude)?)
        .with_reaction(s.c)
        .with_source(s.f);
    Ok(solve(&assemble(space, &spec)?, s.tol)?)
}

pub fn scan(search: &SearchConfig, settings: &ScanSettings) -> Result<ScanResult, CliError> {
    let per_mesh: Vec<Result<(String, Vec<Fixture>), CliError>> = families(search)
        .into_par_iter()
        .map(|family| {
            let mesh = Arc::new(generate(&family)?);
            let space = FESpace::new(mesh.clone(), settings.degree)?;
            let mut found = Vec::new();
            for vertex in mesh.boundary_vertices() {
                let u = solve_spike(&space, vertex, search.amplitude, settings)?;
                let violation = dmp_violation(&u, settings.mode)?;
                found.push(Fixture { family, vertex, amplitude: search.amplitude, violation });
            }
            Ok((mesh.to_text(), found))
        })
        .collect();

    let mut result = ScanResult::default();
    let mut seen = HashSet::new();
    let mut distinct = Vec::new();
    for r in per_mesh {
        let (text, found) = r?;
        result.solves += found.len();
        for fx in found {
            if seen.insert((text.clone(), fx.vertex)) {
                distinct.push(fx);
            }
        }
    }
    result.distinct = distinct.len();
    distinct.retain(|f| f.violation > search.threshold);
    result.above_threshold = distinct.len();
    // stable: ties keep scan order
    distinct.sort_by(|a, b| b.violation.total_cmp(&a.violation));
    distinct.truncate(search.top_k);
    result.top = distinct;
    Ok(result)
}

/// A `dmpcut run` configuration reproducing `fx`.
pub fn fixture_config(fx: &Fixture, cfg: &ExperimentConfig, output_dir: &str) -> String {
    let experiment = if cfg.c == 0.0 { Experiment::ScalarLaplace } else { Experiment::ScalarRd };
    let m = &fx.family;
    format!(
        "# violation {:e}\nexperiment = {}\nmesh.kind = {}\nmesh.n = {}\nmesh.perturbation = {}\nmesh.seed = {}\n\
         fe.degree = {}\nproblem.c = {}\nproblem.f = {}\nproblem.g = spike:{},{}\ncutoff.mode = {}\n\
         solver.tol = {:e}\nreference.level = {}\noutput.dir = {output_dir}\n",
        fx.violation,
        experiment.as_str(),
        m.kind.as_str(),
        m.resolution,
        m.perturbation,
        m.seed,
        cfg.degree,
        cfg.c,
        cfg.f,
        fx.vertex,
        fx.amplitude,
        cfg.mode.as_str(),
        cfg.solver_tol,
        cfg.reference_level
    )
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let settings = ScanSettings { degree: cfg.degree, c: cfg.c, f: cfg.f, mode: cfg.mode, tol: cfg.solver_tol };
    let result = scan(&cfg.search, &settings)?;

    let mut csv = String::from("rank,mesh_kind,n,perturbation,seed,vertex,amplitude,degree,c,f,violation\n");
    let mut files = Vec::new();
    for (rank, fx) in result.top.iter().enumerate() {
        let m = &fx.family;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{:e}",
            rank + 1,
            m.kind.as_str(),
            m.resolution,
            m.perturbation,
            m.seed,
            fx.vertex,
            fx.amplitude,
            cfg.degree,
            cfg.c,
            cfg.f,
            fx.violation
        );
        let name = format!("fixture_{:02}", rank + 1);
        let dir = cfg.output_dir.join(&name);
        files.push((format!("{name}.conf"), fixture_config(fx, cfg, &dir.display().to_string())));
    }
    if let Some(fx) = result.top.first() {
        let mesh = fx.mesh()?;
        let space = FESpace::new(mesh, cfg.degree)?;
        let u = solve_spike(&space, fx.vertex, fx.amplitude, &settings)?;
        let level = sup_boundary(&u, cfg.mode)?;
        let grid = violation_grid(&Located::new(u), level, 60);
        files.push(("violation.svg".into(), svg::heatmap(&grid, 60, "largest DMP violation found")));
    }

    let max = result.top.first().map_or(0.0, |f| f.violation);
    let mut results = String::new();
    let _ = writeln!(results, "meshes={}", families(&cfg.search).len());
    let _ = writeln!(results, "solves={}", result.solves);
    let _ = writeln!(results, "distinct={}", result.distinct);
    let _ = writeln!(results, "above_threshold={}", result.above_threshold);
    let _ = writeln!(results, "reported={}", result.top.len());
    let _ = writeln!(results, "max_violation={max:e}");
    let finite = result.top.iter().all(|f| f.violation.is_finite());
    let checks = vec![Check::new("finite_report", finite, "all violations finite")];
    Ok(Outcome { results, notes: Vec::new(), csv, checks, files })
}
