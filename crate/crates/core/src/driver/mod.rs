//! Run orchestration: configuration, the five run modes, and artifacts.
//!
//! Every mode writes `report.json` into the output directory; trajectory
//! modes add `series.csv` and a `checkpoint.bin`/`checkpoint.json` pair.
//! Outputs contain no timestamps or absolute paths, so identical configs
//! give byte-identical files.

mod config;
mod io;
mod selftest;

use std::fs;
use std::path::Path;

use serde::Serialize;

pub use config::{Checks, FixedPointSection, Mode, SolverConfig, StudySection};
pub use io::{load_checkpoint, save_checkpoint, write_json, write_series, CheckpointMeta, CHECKPOINT_MAGIC};
pub use selftest::{random_profile, run_selftest, SelfCheck};

use crate::assembly::Problem;
use crate::diagnostics::{check_smallness_regime, energy_report, fit_power_law, EnergyReport, SmallnessFit};
use crate::fixed_point::{
    coupling_defect, find_fixed_point, initial_guess, refinement_ladder, solve_decoupled, FixedPointOutcome,
    FixedPointStatus, IterationRecord,
};
use crate::integrator::CoefficientTrajectory;
use crate::{Error, Result};

/// One pass/fail line of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

impl Assertion {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
        }
    }

    fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            passed: ok,
            value: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AmplitudeResult {
    pub amplitude: f64,
    pub status: String,
    pub sup_energy: f64,
    pub forcing_norm: f64,
    pub bound_constant: f64,
    pub sup_eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyReport {
    pub amplitudes: Vec<AmplitudeResult>,
    /// Slope of `log sup E` against `log A`.
    pub energy_exponent: f64,
    /// Largest `sup E / (C^2 + C + m^2)` over the runs.
    pub shared_constant: f64,
    pub smallness: SmallnessFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub passed: bool,
    pub status: String,
    pub deterministic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling_defect: Option<f64>,
    pub assertions: Vec<Assertion>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<IterationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<RunReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub selftest: Vec<SelfCheck>,
}

impl RunReport {
    fn new(cfg: &SolverConfig, mode: Mode) -> Self {
        Self {
            mode,
            passed: false,
            status: String::new(),
            deterministic: cfg.deterministic,
            iterations: None,
            coupling_defect: None,
            assertions: Vec::new(),
            history: Vec::new(),
            energy: None,
            levels: Vec::new(),
            study: None,
            selftest: Vec::new(),
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.assertions.iter().all(|a| a.passed) && self.levels.iter().all(|l| l.passed);
        self
    }

    /// Human-readable pass/fail lines.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, level) in self.levels.iter().enumerate() {
            out.extend(level.lines().into_iter().map(|l| format!("level {i}: {l}")));
        }
        for a in &self.assertions {
            let tag = if a.passed { "PASS" } else { "FAIL" };
            out.push(format!("{tag} {} value={:e} limit={:e}", a.name, a.value, a.limit));
        }
        out.push(format!(
            "{} mode={} status={}",
            if self.passed { "OK" } else { "FAILED" },
            self.mode,
            self.status
        ));
        out
    }
}

fn status_name(status: &FixedPointStatus) -> String {
    match status {
        FixedPointStatus::Converged => "converged".into(),
        FixedPointStatus::MaxIterations => "max_iterations".into(),
        FixedPointStatus::SolverFailure(e) => format!("solver_failure: {e}"),
    }
}

/// Checks shared by every trajectory-producing mode.
fn trajectory_assertions(cfg: &SolverConfig, report: &EnergyReport, periodic: bool) -> Vec<Assertion> {
    let c = &cfg.checks;
    let mut out = Vec::new();
    if let Some(tol) = c.mean {
        out.push(Assertion::at_most("mean_conservation", report.mean_deviation, tol));
    }
    if let Some(tol) = c.balance {
        out.push(Assertion::at_most("energy_balance", report.max_residual, tol));
    }
    if periodic {
        if let Some(tol) = c.periodicity {
            out.push(Assertion::at_most("periodicity_defect", report.periodicity_defect, tol));
        }
        if let Some(limit) = c.bound_constant {
            out.push(Assertion::at_most("bound_constant", report.bound_constant, limit));
        }
    }
    if c.inequalities {
        out.push(Assertion::flag("coercivity", report.flags.coercivity));
        out.push(Assertion::flag("trace", report.flags.trace));
        if periodic {
            out.push(Assertion::flag("diffusion", report.flags.diffusion));
        }
    }
    out
}

/// Write the artifacts of a fixed-point outcome into `dir` and collect its
/// assertions. `offset` counts iterations spent before a resume.
fn record_outcome(
    cfg: &SolverConfig,
    problem: &Problem,
    out: &FixedPointOutcome,
    offset: usize,
    dir: &Path,
) -> Result<RunReport> {
    fs::create_dir_all(dir)?;
    let mut report = RunReport::new(cfg, Mode::Fixpoint);
    report.status = status_name(&out.status);
    report.iterations = Some(offset + out.iterations);
    report.history = out.history.clone();
    for h in &mut report.history {
        h.iteration += offset;
    }
    save_checkpoint(&dir.join("checkpoint.bin"), &out.iterate, offset + out.iterations)?;
    let residual = out.history.iter().map(|h| h.residual).fold(f64::INFINITY, f64::min);
    report.assertions.push(Assertion {
        name: "fixed_point".into(),
        passed: out.converged(),
        value: residual,
        limit: cfg.fixed_point.tolerance,
    });
    if let Some(geo) = &out.geometry {
        let energy = energy_report(problem, &out.solution, geo, cfg.checks.periodicity.unwrap_or(1e-8))?;
        write_series(&dir.join("series.csv"), &energy)?;
        let defect = coupling_defect(problem, geo, &out.solution);
        report.coupling_defect = Some(defect);
        if let Some(tol) = cfg.checks.coupling {
            report.assertions.push(Assertion::at_most("coupling_defect", defect, tol));
        }
        report.assertions.extend(trajectory_assertions(cfg, &energy, true));
        report.energy = Some(energy);
    }
    let report = report.finish();
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

/// Starting iterate and the iterations already spent on it.
fn starting_point(cfg: &SolverConfig, problem: &Problem) -> Result<(CoefficientTrajectory, usize)> {
    match &cfg.fixed_point.resume {
        Some(path) => {
            let (traj, meta) = load_checkpoint(path)?;
            if meta.n != problem.n() || meta.nt != cfg.nt || meta.period != cfg.period {
                return Err(Error::config(
                    "fixed_point.resume",
                    format!("checkpoint has n = {}, nt = {}, period = {}", meta.n, meta.nt, meta.period),
                ));
            }
            Ok((traj, meta.iterations))
        }
        None => Ok((initial_guess(problem, cfg.nt), 0)),
    }
}

fn run_solve(cfg: &SolverConfig, dir: &Path) -> Result<RunReport> {
    let problem = cfg.problem(cfg.n, 1.0)?;
    let fp = cfg.fixed_point_config()?;
    let (start, _) = starting_point(cfg, &problem)?;
    let mut report = RunReport::new(cfg, Mode::Solve);
    match solve_decoupled(&problem, &start, &fp) {
        Ok((run, geo)) => {
            let energy = energy_report(&problem, &run.trajectory, &geo, cfg.checks.periodicity.unwrap_or(1e-8))?;
            write_series(&dir.join("series.csv"), &energy)?;
            save_checkpoint(&dir.join("checkpoint.bin"), &run.trajectory, 0)?;
            report.status = "solved".into();
            report.coupling_defect = Some(coupling_defect(&problem, &geo, &run.trajectory));
            report.assertions = trajectory_assertions(cfg, &energy, false);
            report.energy = Some(energy);
        }
        Err(e) => {
            report.status = format!("solver_failure: {e}");
            report.assertions.push(Assertion::flag("solve", false));
        }
    }
    let report = report.finish();
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn run_fixpoint(cfg: &SolverConfig, dir: &Path) -> Result<RunReport> {
    let problem = cfg.problem(cfg.n, 1.0)?;
    let mut fp = cfg.fixed_point_config()?;
    let (start, offset) = starting_point(cfg, &problem)?;
    fp.max_iterations = fp.max_iterations.saturating_sub(offset);
    let out = find_fixed_point(&problem, &start, &fp)?;
    record_outcome(cfg, &problem, &out, offset, dir)
}

fn run_ladder(cfg: &SolverConfig, dir: &Path) -> Result<RunReport> {
    let base = cfg.fixed_point_config()?;
    let results = refinement_ladder(&cfg.ladder, |n| cfg.problem(n, 1.0), &base)?;
    let mut report = RunReport::new(cfg, Mode::Ladder);
    let mut distances = csv::Writer::from_path(dir.join("distances.csv"))?;
    distances.write_record(["level", "n", "nt", "epsilon", "sigma", "status", "eta_distance", "energy_distance"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for (i, res) in results.iter().enumerate() {
        let level_dir = dir.join(format!("level_{i}"));
        let level_cfg = SolverConfig {
            n: res.level.n,
            nt: res.level.nt,
            epsilon: Some(res.level.epsilon),
            sigma: res.level.sigma,
            ..cfg.clone()
        };
        let level_report = match &res.outcome {
            Ok(out) => record_outcome(&level_cfg, &cfg.problem(res.level.n, 1.0)?, out, 0, &level_dir)?,
            Err(e) => {
                fs::create_dir_all(&level_dir)?;
                let mut r = RunReport::new(&level_cfg, Mode::Fixpoint);
                r.status = format!("error: {e}");
                r.assertions.push(Assertion::flag("fixed_point", false));
                let r = r.finish();
                write_json(&level_dir.join("report.json"), &r)?;
                r
            }
        };
        distances.write_record([
            i.to_string(),
            res.level.n.to_string(),
            res.level.nt.to_string(),
            format!("{:.16e}", res.level.epsilon),
            format!("{:.16e}", res.level.sigma),
            level_report.status.clone(),
            opt(res.eta_distance),
            opt(res.energy_distance),
        ])?;
        report.levels.push(level_report);
    }
    distances.flush()?;
    report.status = format!("{} levels", results.len());
    let report = report.finish();
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn run_study(cfg: &SolverConfig, dir: &Path) -> Result<RunReport> {
    let fp = cfg.fixed_point_config()?;
    let mut report = RunReport::new(cfg, Mode::Study);
    let mut rows = Vec::new();
    for (i, &a) in cfg.study.amplitudes.iter().enumerate() {
        let problem = cfg.problem(cfg.n, a)?;
        let out = find_fixed_point(&problem, &initial_guess(&problem, cfg.nt), &fp)?;
        let level = record_outcome(cfg, &problem, &out, 0, &dir.join(format!("amplitude_{i}")))?;
        let e = level.energy.as_ref();
        rows.push(AmplitudeResult {
            amplitude: a,
            status: level.status.clone(),
            sup_energy: e.map_or(f64::NAN, |e| e.sup_energy),
            forcing_norm: e.map_or(f64::NAN, |e| e.forcing_norm),
            bound_constant: e.map_or(f64::NAN, |e| e.bound_constant),
            sup_eta: e.map_or(f64::NAN, |e| e.sup_eta.iter().copied().fold(0.0, f64::max)),
        });
        report.levels.push(level);
    }
    let amps: Vec<f64> = rows.iter().map(|r| r.amplitude).collect();
    let sup_e: Vec<f64> = rows.iter().map(|r| r.sup_energy).collect();
    let sup_eta: Vec<f64> = rows.iter().map(|r| r.sup_eta).collect();
    let study = StudyReport {
        energy_exponent: fit_power_law(&amps, &sup_e),
        shared_constant: rows.iter().map(|r| r.bound_constant).fold(0.0, f64::max),
        smallness: check_smallness_regime(&amps, &sup_eta, cfg.kappa),
        amplitudes: rows,
    };
    if let Some(tol) = cfg.study.exponent_tolerance {
        let dev = (study.energy_exponent - 2.0).abs() / 2.0;
        report.assertions.push(Assertion::at_most("energy_exponent", dev, tol));
    }
    report.assertions.push(Assertion::flag("smallness_admissible", study.smallness.admissible));
    report.assertions.push(Assertion::flag("shared_constant_finite", study.shared_constant.is_finite()));
    report.status = format!("{} amplitudes", study.amplitudes.len());
    report.study = Some(study);
    let report = report.finish();
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn run_selftest_mode(cfg: &SolverConfig, dir: &Path) -> Result<RunReport> {
    let mut report = RunReport::new(cfg, Mode::Selftest);
    report.selftest = run_selftest(cfg.seed)?;
    report.assertions = report
        .selftest
        .iter()
        .map(|c| Assertion {
            name: c.name.clone(),
            passed: c.passed,
            value: c.value,
            limit: c.limit,
        })
        .collect();
    report.status = format!("seed {}", cfg.seed);
    let report = report.finish();
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

/// Validate `cfg`, run its mode and write the artifacts to `cfg.output`.
pub fn run(cfg: &SolverConfig) -> Result<RunReport> {
    cfg.validate()?;
    let dir = cfg.output.as_path();
    fs::create_dir_all(dir)?;
    match cfg.mode {
        Mode::Solve => run_solve(cfg, dir),
        Mode::Fixpoint => run_fixpoint(cfg, dir),
        Mode::Ladder => run_ladder(cfg, dir),
        Mode::Study => run_study(cfg, dir),
        Mode::Selftest => run_selftest_mode(cfg, dir),
    }
}
