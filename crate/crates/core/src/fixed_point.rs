//! Periodization, truncation and regularization of a prescribed geometry, the
//! decoupled solve map `a -> b`, and the damped search for its fixed point.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::anderson::Anderson;
use crate::assembly::Problem;
use crate::diagnostics::forcing_norm;
use crate::geometry::GeometryTrajectory;
use crate::integrator::{integrate, CoefficientTrajectory, Integration, StepOptions};
use crate::interp::hermite_channel;
use crate::plate::PlateProfile;
use crate::{Error, Result};

/// Width `epsilon = cells * dt` of the closing segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodizationParams {
    pub cells: usize,
}

impl PeriodizationParams {
    pub fn new(epsilon: f64, dt: f64, nt: usize) -> Result<Self> {
        let cells = (epsilon / dt).round();
        if !(cells >= 2.0) || (cells * dt - epsilon).abs() > 1e-9 * epsilon || cells as usize >= nt {
            return Err(Error::NotGridAligned { epsilon, dt });
        }
        Ok(Self {
            cells: cells as usize,
        })
    }
}

/// Keep `f` on `[0, T - eps]` and close it with the segment from
/// `f(T - eps)` back to `f(0)`. The end sample is set to `f(0)` bitwise.
pub fn periodize(samples: &[f64], params: PeriodizationParams) -> Result<Vec<f64>> {
    let nt = samples.len().saturating_sub(1);
    if params.cells < 2 || params.cells >= nt {
        return Err(Error::NotGridAligned {
            epsilon: params.cells as f64,
            dt: 1.0,
        });
    }
    let j0 = nt - params.cells;
    let (start, end) = (samples[j0], samples[0]);
    let mut out = samples.to_vec();
    for (i, o) in out.iter_mut().enumerate().skip(j0 + 1) {
        let s = (i - j0) as f64 / params.cells as f64;
        *o = start + (end - start) * s;
    }
    out[nt] = end;
    Ok(out)
}

/// `periodize` on values, with rates replaced by the segment slope on
/// `(T - eps, T]`.
pub fn periodize_with_rate(
    values: &[f64],
    rates: &[f64],
    params: PeriodizationParams,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = periodize(values, params)?;
    let nt = values.len() - 1;
    let j0 = nt - params.cells;
    let slope = (values[0] - values[j0]) / (params.cells as f64 * dt);
    let mut r = rates.to_vec();
    r.iter_mut().skip(j0 + 1).for_each(|x| *x = slope);
    Ok((v, r))
}

/// Bound every sample by `kappa / 2` and smooth in time and space.
///
/// Samples whose sup-norm exceeds `kappa / 2` are scaled down to it (which
/// preserves signs and shape). With `sigma > 0` the samples are then
/// convolved with a discrete periodic Gaussian of width `sigma` in time and
/// their Fourier modes damped by `exp(-(2 pi k sigma)^2 / 2)`; both are
/// averages against positive kernels, so the sup-norm does not grow. The
/// time smoothing treats samples `0..Nt` as one period and copies the first
/// sample to the end.
pub fn clamp_and_regularize(delta: &GeometryTrajectory, kappa: f64, sigma: f64) -> GeometryTrajectory {
    let cap = 0.5 * kappa;
    let mut profiles = delta.profiles.clone();
    let mut rates = delta.rates.clone();
    for (p, r) in profiles.iter_mut().zip(rates.iter_mut()) {
        let sup = p.sup_norm();
        if sup > cap {
            let s = cap / sup;
            *p = p.scaled(s);
            *r = r.scaled(s);
        }
    }
    if sigma > 0.0 {
        profiles = smooth_in_time(&profiles, sigma, delta.dt());
        rates = smooth_in_time(&rates, sigma, delta.dt());
        for p in profiles.iter_mut().chain(rates.iter_mut()) {
            *p = damp_modes(p, sigma);
        }
    }
    GeometryTrajectory {
        period: delta.period,
        profiles,
        rates,
    }
}

fn smooth_in_time(samples: &[PlateProfile], sigma: f64, dt: f64) -> Vec<PlateProfile> {
    let nt = samples.len() - 1;
    let reach = ((4.0 * sigma / dt).ceil() as usize).min(nt / 2);
    let mut kernel: Vec<f64> = (0..=reach)
        .map(|j| (-0.5 * (j as f64 * dt / sigma).powi(2)).exp())
        .collect();
    let total = kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>();
    kernel.iter_mut().for_each(|w| *w /= total);
    let mut out: Vec<PlateProfile> = (0..nt)
        .map(|i| {
            let mut acc = samples[i].scaled(kernel[0]);
            for (j, w) in kernel.iter().enumerate().skip(1) {
                acc = acc.axpy(*w, &samples[(i + j) % nt]);
                acc = acc.axpy(*w, &samples[(i + nt - j) % nt]);
            }
            acc
        })
        .collect();
    out.push(out[0].clone());
    out
}

fn damp_modes(p: &PlateProfile, sigma: f64) -> PlateProfile {
    let mut out = p.clone();
    for k in 1..=p.k_max() {
        let f = (-0.5 * (2.0 * PI * k as f64 * sigma).powi(2)).exp();
        out.set_cos(k, f * p.cos_coeff(k));
        out.set_sin(k, f * p.sin_coeff(k));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Damping `omega` in `a <- (1 - omega) a + omega T(a)`.
    pub damping: f64,
    pub max_iterations: usize,
    /// Stopping tolerance on the discrete C^1 distance `|a - T(a)|`.
    pub tolerance: f64,
    /// Regularization width.
    pub sigma: f64,
    /// Periodization width in time cells.
    pub epsilon_cells: usize,
    /// Anderson depth for the outer iteration; zero keeps plain damping.
    pub anderson: usize,
    pub step: StepOptions,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iterations: 200,
            tolerance: 1e-6,
            sigma: 0.0,
            epsilon_cells: 2,
            anderson: 0,
            step: StepOptions::default(),
        }
    }
}

/// Geometry prescribed by `a`: plate channels periodized, assembled into
/// profiles with the conserved mean, then clamped and regularized.
pub fn geometry_from_coefficients(
    problem: &Problem,
    a: &CoefficientTrajectory,
    cfg: &FixedPointConfig,
) -> Result<GeometryTrajectory> {
    let nt = a.nt();
    let dt = a.dt();
    let params = PeriodizationParams { cells: cfg.epsilon_cells };
    let np = problem.basis.plate_count();
    let mut values = vec![vec![0.0; problem.n()]; nt + 1];
    let mut rates = vec![vec![0.0; problem.n()]; nt + 1];
    for p in 0..np {
        let (v, r) = a.channel(2 * p);
        let (v, r) = periodize_with_rate(&v, &r, params, dt)?;
        for i in 0..=nt {
            values[i][2 * p] = v[i];
            rates[i][2 * p] = r[i];
        }
    }
    let profiles = values.iter().map(|v| problem.plate_profile(v)).collect();
    let rate_profiles = rates.iter().map(|r| problem.basis.plate_profile(r, 0.0)).collect();
    let geo = GeometryTrajectory::new(a.period, profiles, rate_profiles)?;
    Ok(clamp_and_regularize(&geo, problem.kappa, cfg.sigma))
}

/// The map `T`: solve on the geometry prescribed by `a`, starting from
/// `(a(T), a'(T))`.
pub fn solve_decoupled(
    problem: &Problem,
    a: &CoefficientTrajectory,
    cfg: &FixedPointConfig,
) -> Result<(Integration, GeometryTrajectory)> {
    let geo = geometry_from_coefficients(problem, a, cfg)?;
    let last = a.nt();
    let run = integrate(problem, &a.values[last], &a.derivatives[last], &geo, &cfg.step)?;
    Ok((run, geo))
}

/// `max_i |delta(t_i) - eta(t_i)|` over Fourier coefficients and mean.
pub fn coupling_defect(problem: &Problem, geometry: &GeometryTrajectory, b: &CoefficientTrajectory) -> f64 {
    geometry
        .profiles
        .iter()
        .zip(&b.values)
        .map(|(d, v)| d.max_coefficient_distance(&problem.plate_profile(v)))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `|a - T(a)|` in the discrete C^1 norm.
    pub residual: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    pub sup_energy: f64,
    /// `C(f, g)` on this iterate's geometry.
    pub forcing_norm: f64,
    /// `E(T) >= E(0)`: the iterate is in the regime of the ball estimate.
    pub growing: bool,
    /// `sup E / (C^2 + C + m^2)`, zero when the data vanish.
    pub ball_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FixedPointStatus {
    Converged,
    MaxIterations,
    SolverFailure(String),
}

#[derive(Clone, Debug)]
pub struct FixedPointOutcome {
    pub status: FixedPointStatus,
    /// Iterations performed before the accepted map evaluation.
    pub iterations: usize,
    /// `T(a)` for the accepted (or best) iterate.
    pub solution: CoefficientTrajectory,
    /// Last iterate `a` fed to `T`.
    pub iterate: CoefficientTrajectory,
    pub integration: Option<Integration>,
    pub geometry: Option<GeometryTrajectory>,
    pub history: Vec<IterationRecord>,
}

impl FixedPointOutcome {
    pub fn converged(&self) -> bool {
        self.status == FixedPointStatus::Converged
    }
}

/// Zero trajectory; with the ansatz the plate then sits at the mean `m`.
pub fn initial_guess(problem: &Problem, nt: usize) -> CoefficientTrajectory {
    CoefficientTrajectory::zeros(problem.n(), nt, problem.period)
}

pub fn find_fixed_point(
    problem: &Problem,
    initial: &CoefficientTrajectory,
    cfg: &FixedPointConfig,
) -> Result<FixedPointOutcome> {
    if !(cfg.tolerance > 0.0) || !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::config("fixed_point", "need tolerance > 0 and damping in (0, 1]"));
    }
    let mut a = initial.clone();
    let mut history = Vec::new();
    let mut best: Option<(f64, CoefficientTrajectory, CoefficientTrajectory, Integration, GeometryTrajectory)> = None;
    let mut acc = Anderson::new(cfg.anderson, cfg.damping);
    let m2 = problem.mean * problem.mean;

    for iteration in 0..=cfg.max_iterations {
        let (run, geo) = match solve_decoupled(problem, &a, cfg) {
            Ok(r) => r,
            Err(e) => {
                let (solution, integration, geometry) = match best {
                    Some((_, _, b, r, g)) => (b, Some(r), Some(g)),
                    None => (a.clone(), None, None),
                };
                return Ok(FixedPointOutcome {
                    status: FixedPointStatus::SolverFailure(e.to_string()),
                    iterations: iteration,
                    solution,
                    iterate: a,
                    integration,
                    geometry,
                    history,
                });
            }
        };
        let b = run.trajectory.clone();
        let residual = a.c1_distance(&b);
        let c = forcing_norm(&problem.forcing, &geo, &problem.grid, problem.kappa)?;
        let sup_energy = run.energy.iter().copied().fold(0.0, f64::max);
        let denom = c * c + c + m2;
        let (e0, e1) = (run.energy[0], run.energy[run.energy.len() - 1]);
        history.push(IterationRecord {
            iteration,
            residual,
            energy_start: e0,
            energy_end: e1,
            sup_energy,
            forcing_norm: c,
            growing: e1 >= e0,
            ball_constant: if denom > 0.0 { sup_energy / denom } else { 0.0 },
        });
        let done = residual <= cfg.tolerance;
        let last = iteration == cfg.max_iterations;
        let better = best.as_ref().is_none_or(|(r, ..)| residual < *r);
        let next = if done || last {
            None
        } else if cfg.anderson > 0 {
            Some(a.unflatten(&acc.next(&a.flatten(), &b.flatten())))
        } else {
            Some(a.blend(&b, cfg.damping))
        };
        if better {
            best = Some((residual, a.clone(), b, run, geo));
        }
        if done || last {
            let (_, iterate, solution, integration, geometry) = best.expect("at least one evaluation");
            return Ok(FixedPointOutcome {
                status: if done { FixedPointStatus::Converged } else { FixedPointStatus::MaxIterations },
                iterations: iteration,
                solution,
                iterate,
                integration: Some(integration),
                geometry: Some(geometry),
                history,
            });
        }
        a = next.expect("set above");
    }
    unreachable!("loop returns on its last iteration")
}

/// One rung of a refinement ladder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub n: usize,
    pub nt: usize,
    /// Periodization width in time units.
    pub epsilon: f64,
    pub sigma: f64,
}

#[derive(Debug)]
pub struct LevelResult {
    pub level: LadderLevel,
    pub outcome: Result<FixedPointOutcome>,
    /// Distance of the plate displacement to the previous level, sampled on
    /// the previous level's time grid.
    pub eta_distance: Option<f64>,
    /// `|sup E - sup E_prev|`.
    pub energy_distance: Option<f64>,
}

fn check_schedule(levels: &[LadderLevel]) -> Result<()> {
    for w in levels.windows(2) {
        let (p, q) = (&w[0], &w[1]);
        if q.n < p.n || q.nt < p.nt || q.epsilon > p.epsilon || q.sigma > p.sigma {
            return Err(Error::config(
                "ladder",
                "levels must refine monotonically (n, nt up; epsilon, sigma down)",
            ));
        }
    }
    Ok(())
}

/// Run `find_fixed_point` on each level, warm-started from the previous
/// level's solution. Level failures are recorded and the ladder continues.
pub fn refinement_ladder(
    levels: &[LadderLevel],
    make_problem: impl Fn(usize) -> Result<Problem>,
    base: &FixedPointConfig,
) -> Result<Vec<LevelResult>> {
    check_schedule(levels)?;
    let mut results: Vec<LevelResult> = Vec::with_capacity(levels.len());
    let mut warm: Option<(CoefficientTrajectory, Problem)> = None;
    for level in levels {
        let run = || -> Result<(FixedPointOutcome, Problem)> {
            let problem = make_problem(level.n)?;
            let dt = problem.period / level.nt as f64;
            let cells = PeriodizationParams::new(level.epsilon, dt, level.nt)?.cells;
            let cfg = FixedPointConfig {
                sigma: level.sigma,
                epsilon_cells: cells,
                ..*base
            };
            let start = match &warm {
                Some((prev, _)) => prev.resampled(problem.n(), level.nt),
                None => initial_guess(&problem, level.nt),
            };
            Ok((find_fixed_point(&problem, &start, &cfg)?, problem))
        };
        let (outcome, eta_distance, energy_distance) = match run() {
            Ok((out, problem)) => {
                let dists = warm.as_ref().zip(results.last()).and_then(|((prev, prev_problem), prev_res)| {
                    let prev_out = prev_res.outcome.as_ref().ok()?;
                    let eta = eta_distance(prev_problem, prev, &problem, &out.solution);
                    let sup = |o: &FixedPointOutcome| {
                        o.integration.as_ref().map(|r| r.energy.iter().copied().fold(0.0, f64::max))
                    };
                    let de = sup(&out).zip(sup(prev_out)).map(|(x, y)| (x - y).abs());
                    Some((eta, de))
                });
                if out.integration.is_some() {
                    warm = Some((out.solution.clone(), problem));
                }
                let (eta, de) = dists.unzip();
                (Ok(out), eta, de.flatten())
            }
            Err(e) => (Err(e), None, None),
        };
        results.push(LevelResult {
            level: *level,
            outcome,
            eta_distance,
            energy_distance,
        });
    }
    Ok(results)
}

/// Sup over the coarse grid of `prev` of the coefficient distance between
/// the two plate displacements.
fn eta_distance(
    prev_problem: &Problem,
    prev: &CoefficientTrajectory,
    problem: &Problem,
    next: &CoefficientTrajectory,
) -> f64 {
    let dt_next = next.dt();
    let channels: Vec<(Vec<f64>, Vec<f64>)> = (0..next.n()).map(|k| next.channel(k)).collect();
    prev.times()
        .iter()
        .zip(&prev.values)
        .map(|(&t, v)| {
            let sampled: Vec<f64> = channels.iter().map(|(val, der)| hermite_channel(val, der, dt_next, t).0).collect();
            prev_problem
                .plate_profile(v)
                .max_coefficient_distance(&problem.plate_profile(&sampled))
        })
        .fold(0.0, f64::max)
}
