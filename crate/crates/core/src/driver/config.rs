use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assembly::{ForcingSpec, Problem};
use crate::basis::GalerkinBasis;
use crate::fixed_point::{FixedPointConfig, LadderLevel, PeriodizationParams};
use crate::geometry::{ReferenceSlab, DEFAULT_KAPPA};
use crate::integrator::StepOptions;
use crate::plate::KoiterModel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solve,
    #[default]
    Fixpoint,
    Ladder,
    Study,
    Selftest,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Fixpoint => "fixpoint",
            Mode::Ladder => "ladder",
            Mode::Study => "study",
            Mode::Selftest => "selftest",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "solve" => Mode::Solve,
            "fixpoint" => Mode::Fixpoint,
            "ladder" => Mode::Ladder,
            "study" => Mode::Study,
            "selftest" => Mode::Selftest,
            other => return Err(Error::config("mode", format!("unknown mode `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointSection {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Anderson depth; zero is plain damped iteration.
    pub anderson: usize,
    /// Checkpoint to resume from.
    pub resume: Option<PathBuf>,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        let d = FixedPointConfig::default();
        Self {
            damping: d.damping,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            anderson: d.anderson,
            resume: None,
        }
    }
}

/// Thresholds for the pass/fail checks of a run. `None` disables a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    pub mean: Option<f64>,
    pub periodicity: Option<f64>,
    pub coupling: Option<f64>,
    /// Bound on the largest energy-balance residual.
    pub balance: Option<f64>,
    /// Bound on `sup E / (C^2 + C + m^2)`.
    pub bound_constant: Option<f64>,
    /// Coercivity, trace and diffusion flags.
    pub inequalities: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            mean: Some(1e-12),
            periodicity: Some(1e-8),
            coupling: Some(1e-6),
            balance: None,
            bound_constant: None,
            inequalities: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Multipliers applied to the configured forcing.
    pub amplitudes: Vec<f64>,
    /// Allowed relative deviation of the fitted `sup E` exponent from 2.
    pub exponent_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: Mode,
    pub period: f64,
    pub n: usize,
    pub nt: usize,
    /// Pool bounds; derived from `n` when absent.
    pub k_max: Option<usize>,
    pub j_max: Option<usize>,
    pub m_max: Option<usize>,
    pub nx: usize,
    pub nz: usize,
    pub kappa: f64,
    pub mean: f64,
    /// Periodization width; two time steps when absent.
    pub epsilon: Option<f64>,
    pub sigma: f64,
    pub output: PathBuf,
    pub deterministic: bool,
    pub seed: u64,
    pub koiter: KoiterModel,
    pub fixed_point: FixedPointSection,
    pub step: StepOptions,
    pub forcing: ForcingSpec,
    pub checks: Checks,
    pub ladder: Vec<LadderLevel>,
    pub study: StudySection,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            period: 1.0,
            n: 8,
            nt: 128,
            k_max: None,
            j_max: None,
            m_max: None,
            nx: 32,
            nz: 16,
            kappa: DEFAULT_KAPPA,
            mean: 0.0,
            epsilon: None,
            sigma: 0.0,
            output: PathBuf::from("out"),
            deterministic: true,
            seed: 0,
            koiter: KoiterModel::default(),
            fixed_point: FixedPointSection::default(),
            step: StepOptions::default(),
            forcing: ForcingSpec::default(),
            checks: Checks::default(),
            ladder: Vec::new(),
            study: StudySection::default(),
        }
    }
}

impl SolverConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Parse without validating; callers apply overrides first.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn dt(&self) -> f64 {
        self.period / self.nt as f64
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(2.0 * self.dt())
    }

    /// `(k_max, j_max, m_max)` for a basis of size `n`.
    pub fn pools(&self, n: usize) -> (usize, usize, usize) {
        let half = (n / 2).max(1);
        (
            self.k_max.unwrap_or(half.div_ceil(2)),
            self.j_max.unwrap_or(half),
            self.m_max.unwrap_or(half),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::config("period", "must be positive and finite"));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::config("kappa", "must lie in (0, 1)"));
        }
        if !(self.mean.abs() < 0.5 * self.kappa) {
            return Err(Error::config("mean", "need |m| < kappa / 2 for an admissible rest state"));
        }
        if self.nt < 4 {
            return Err(Error::config("nt", "need at least 4 time steps"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma", "must be finite and non-negative"));
        }
        ReferenceSlab::new(self.nx, self.nz)?;
        self.check_basis(self.n)?;
        PeriodizationParams::new(self.epsilon(), self.dt(), self.nt)
            .map_err(|_| Error::config("epsilon", "must be a multiple of dt with 2 <= eps/dt < nt"))?;
        let fp = &self.fixed_point;
        if !(fp.damping > 0.0 && fp.damping <= 1.0) {
            return Err(Error::config("fixed_point.damping", "must lie in (0, 1]"));
        }
        if !(fp.tolerance > 0.0) {
            return Err(Error::config("fixed_point.tolerance", "must be positive"));
        }
        if !(self.koiter.membrane >= 0.0 && self.koiter.bending > 0.0) {
            return Err(Error::config("koiter", "need membrane >= 0 and bending > 0"));
        }
        match self.mode {
            Mode::Ladder => {
                if self.ladder.is_empty() {
                    return Err(Error::config("ladder", "ladder mode needs at least one level"));
                }
                for (i, level) in self.ladder.iter().enumerate() {
                    self.check_basis(level.n)
                        .map_err(|e| Error::config(format!("ladder[{i}].n"), e.to_string()))?;
                    if level.nt < 4 {
                        return Err(Error::config(format!("ladder[{i}].nt"), "need at least 4 time steps"));
                    }
                    PeriodizationParams::new(level.epsilon, self.period / level.nt as f64, level.nt)
                        .map_err(|e| Error::config(format!("ladder[{i}].epsilon"), e.to_string()))?;
                    if !(level.sigma >= 0.0) {
                        return Err(Error::config(format!("ladder[{i}].sigma"), "must be non-negative"));
                    }
                }
            }
            Mode::Study => {
                if self.study.amplitudes.len() < 2 {
                    return Err(Error::config("study.amplitudes", "need at least two amplitudes"));
                }
                if self.study.amplitudes.iter().any(|a| !(*a > 0.0)) {
                    return Err(Error::config("study.amplitudes", "amplitudes must be positive"));
                }
                if self.forcing.is_zero() {
                    return Err(Error::config("forcing", "a study needs nonzero forcing to scale"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn check_basis(&self, n: usize) -> Result<GalerkinBasis> {
        let (k, j, m) = self.pools(n);
        GalerkinBasis::new(n, k, j, m, self.kappa).map_err(|e| match e {
            Error::OddBasisSize(_) => Error::config("n", "must be a positive even number"),
            Error::BasisTooLarge { family, .. } => {
                let field = if family == "plate" { "k_max" } else { "j_max/m_max" };
                Error::config(field, e.to_string())
            }
            other => other,
        })
    }

    /// Problem of basis size `n` with the forcing scaled by `amplitude`.
    pub fn problem(&self, n: usize, amplitude: f64) -> Result<Problem> {
        Ok(Problem {
            grid: ReferenceSlab::new(self.nx, self.nz)?,
            basis: self.check_basis(n)?,
            kappa: self.kappa,
            mean: self.mean,
            koiter: self.koiter,
            forcing: self.forcing.scaled(amplitude),
            period: self.period,
        })
    }

    pub fn fixed_point_config(&self) -> Result<FixedPointConfig> {
        let cells = PeriodizationParams::new(self.epsilon(), self.dt(), self.nt)?.cells;
        Ok(FixedPointConfig {
            damping: self.fixed_point.damping,
            max_iterations: self.fixed_point.max_iterations,
            tolerance: self.fixed_point.tolerance,
            sigma: self.sigma,
            epsilon_cells: cells,
            anderson: self.fixed_point.anderson,
            step: self.step,
        })
    }
}
