//! Energy bookkeeping and the checkable identities and inequalities of the
//! scheme, evaluated on computed trajectories.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::{energy_of_state, ForcingSpec, Problem};
use crate::basis::{InterleavedBasis, VelocitySample};
use crate::geometry::{integrate_moving_domain, push_forward_point, DeformationMap, Geometry, GeometryTrajectory, ReferenceSlab};
use crate::integrator::CoefficientTrajectory;
use crate::plate::{sup_grid_size, PlateProfile};
use crate::Result;

/// `C(f, g) = int_0^T int_{Omega(t)} |f|^2 + int_0^T int |g|^2`, by the
/// periodic trapezoid rule in time on the grid of `geometry`.
pub fn forcing_norm(forcing: &ForcingSpec, geometry: &GeometryTrajectory, grid: &ReferenceSlab, kappa: f64) -> Result<f64> {
    if forcing.is_zero() {
        return Ok(0.0);
    }
    let nt = geometry.nt();
    let dt = geometry.dt();
    let period = geometry.period;
    let mut total = 0.0;
    for i in 0..nt {
        let t = i as f64 * dt;
        if forcing.has_fluid_force() {
            let map = geometry.map_at(t, kappa)?;
            let samples: Vec<f64> = grid
                .nodes()
                .map(|(x, z)| {
                    let (x, z) = push_forward_point(&map, x, z);
                    let f = forcing.fluid_force(t, period, x, z);
                    f[0] * f[0] + f[1] * f[1]
                })
                .collect();
            total += dt * integrate_moving_domain(&map, grid, &samples)?;
        }
        let g = forcing.plate_load(t, period);
        // squares of trigonometric sums of degree k need more than 2k nodes
        let nx = grid.nx().max(4 * (g.k_max() + 1));
        let sq: f64 = (0..nx).map(|j| g.value(j as f64 / nx as f64).powi(2)).sum::<f64>() / nx as f64;
        total += dt * sq;
    }
    Ok(total)
}

/// Residual series of the discrete energy identity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceCheck {
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub power: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max: f64,
    pub l1: f64,
}

/// Recompute `(E_{i+1} - E_i)/dt + int |grad u|^2 - int f.u - int g d_t eta`
/// from the stored states, with the flux terms at the step midpoints
/// (`beta_m = (beta_i + beta_{i+1}) / 2`, matrices at `t_i + dt/2`).
pub fn check_energy_balance(problem: &Problem, traj: &CoefficientTrajectory, geometry: &GeometryTrajectory) -> Result<BalanceCheck> {
    let nt = traj.nt();
    let dt = traj.dt();
    let mut out = BalanceCheck::default();
    for i in 0..=nt {
        let map = geometry.map_at(i as f64 * dt, problem.kappa)?;
        let snap = problem.snapshot(&map)?;
        out.energy.push(energy_of_state(problem, &snap, &traj.values[i], &traj.derivatives[i]));
    }
    for i in 0..nt {
        let tm = (i as f64 + 0.5) * dt;
        let sys = problem.assemble(&geometry.map_at(tm, problem.kappa)?, tm)?;
        let bm = (DVector::from_column_slice(&traj.derivatives[i]) + DVector::from_column_slice(&traj.derivatives[i + 1])) * 0.5;
        let d = bm.dot(&(&sys.viscous * &bm));
        let p = bm.dot(&sys.load);
        let r = (out.energy[i + 1] - out.energy[i]) / dt + d - p;
        out.dissipation.push(d);
        out.power.push(p);
        out.residuals.push(r);
    }
    out.max = out.residuals.iter().fold(0.0, |m, r| m.max(r.abs()));
    out.l1 = dt * out.residuals.iter().map(|r| r.abs()).sum::<f64>();
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Observed order of `errors` against step sizes `dts`.
pub fn convergence_order(dts: &[f64], errors: &[f64]) -> f64 {
    fit_power_law(dts, errors)
}

/// `(sup E <= c_cfg (C^2 + C + m^2), fitted constant)`. With vanishing data
/// the constant is zero by convention and `sup E` must stay below
/// `abs_tolerance`.
pub fn check_uniform_bound(report: &EnergyReport, c_cfg: f64, abs_tolerance: f64) -> (bool, f64) {
    let c = report.forcing_norm;
    let denom = c * c + c + report.mean * report.mean;
    if denom == 0.0 {
        return (report.sup_energy <= abs_tolerance, 0.0);
    }
    let fitted = report.sup_energy / denom;
    (fitted <= c_cfg, fitted)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCheck {
    /// `int_0^T int |grad u|^2`.
    pub lhs: f64,
    /// `int_0^T int f.u + int g d_t eta`.
    pub rhs: f64,
    /// Trapezoid error bound plus the energy mismatch over one period.
    pub slack: f64,
    pub holds: bool,
    pub skipped: Option<String>,
}

/// Diffusion estimate for a periodic trajectory, integrated in time with the
/// trapezoid rule on the stored nodes. The slack combines the energy
/// mismatch `|E(T) - E(0)|` with the trapezoid bound `T dt^2 max|h''| / 12`
/// for `h = dissipation - power`, `h''` estimated by second differences.
pub fn check_diffusion_estimate(
    problem: &Problem,
    traj: &CoefficientTrajectory,
    geometry: &GeometryTrajectory,
    periodic_tolerance: f64,
) -> Result<DiffusionCheck> {
    let defect = traj.periodicity_defect();
    if defect > periodic_tolerance {
        return Ok(DiffusionCheck {
            skipped: Some(format!("trajectory not periodic (defect {defect:e})")),
            ..Default::default()
        });
    }
    let nt = traj.nt();
    let dt = traj.dt();
    let mut diss = Vec::with_capacity(nt + 1);
    let mut pow = Vec::with_capacity(nt + 1);
    let mut energy = Vec::with_capacity(nt + 1);
    for i in 0..=nt {
        let t = i as f64 * dt;
        let sys = problem.assemble(&geometry.map_at(t, problem.kappa)?, t)?;
        let beta = DVector::from_column_slice(&traj.derivatives[i]);
        diss.push(beta.dot(&(&sys.viscous * &beta)));
        pow.push(beta.dot(&sys.load));
        energy.push(energy_of_state(problem, &sys.basis, &traj.values[i], &traj.derivatives[i]));
    }
    let trap = |v: &[f64]| dt * (0.5 * v[0] + v[1..nt].iter().sum::<f64>() + 0.5 * v[nt]);
    let lhs = trap(&diss);
    let rhs = trap(&pow);
    let h: Vec<f64> = diss.iter().zip(&pow).map(|(d, p)| d - p).collect();
    let curvature = h.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).fold(0.0, f64::max);
    let slack = (energy[nt] - energy[0]).abs() + traj.period * curvature / 12.0;
    Ok(DiffusionCheck {
        lhs,
        rhs,
        slack,
        holds: lhs <= rhs + slack,
        skipped: None,
    })
}

/// Mean of each profile on a dense equispaced grid, compared with `m`.
pub fn check_mean_conservation(profiles: &[PlateProfile], m: f64) -> f64 {
    profiles
        .iter()
        .map(|p| {
            let n = sup_grid_size(p.k_max());
            let avg = (0..n).map(|j| p.value(j as f64 / n as f64)).sum::<f64>() / n as f64;
            (avg - m).abs()
        })
        .fold(0.0, f64::max)
}

/// Plate displacement `eta(t_i)` along a trajectory.
pub fn plate_series(problem: &Problem, traj: &CoefficientTrajectory) -> Vec<PlateProfile> {
    traj.values.iter().map(|v| problem.plate_profile(v)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallnessFit {
    /// Slope of `log sup|eta|` against `log A`.
    pub exponent: f64,
    /// `sup|eta|` decreases with the amplitude.
    pub monotone: bool,
    /// `sup|eta| < kappa` in every run.
    pub admissible: bool,
}

/// Scaling of the displacement with the forcing amplitude.
pub fn check_smallness_regime(amplitudes: &[f64], sup_eta: &[f64], kappa: f64) -> SmallnessFit {
    let mut pairs: Vec<(f64, f64)> = amplitudes.iter().copied().zip(sup_eta.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = pairs.windows(2).all(|w| w[1].1 >= w[0].1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    SmallnessFit {
        exponent: if ys.iter().all(|y| *y > 0.0) && xs.len() > 1 { fit_power_law(&xs, &ys) } else { 0.0 },
        monotone,
        admissible: ys.iter().all(|y| *y < kappa),
    }
}

/// `int |grad u|^2 - 2 int |D u|^2 = -int d_i u_j d_j u_i` over `Omega_delta`
/// for a field given in physical coordinates.
pub fn korn_defect(u: impl Fn(f64, f64) -> VelocitySample, map: &DeformationMap, grid: &ReferenceSlab) -> Result<f64> {
    let samples: Vec<f64> = grid
        .nodes()
        .map(|(x, z)| {
            let (x, z) = push_forward_point(map, x, z);
            korn_density(&u(x, z))
        })
        .collect();
    integrate_moving_domain(map, grid, &samples)
}

/// Korn defect of `u = sum beta_j X_j` on a sampled basis.
pub fn korn_defect_of_state(basis: &InterleavedBasis, beta: &[f64]) -> f64 {
    basis
        .quadrature
        .nodes
        .iter()
        .enumerate()
        .map(|(k, node)| node.weight * korn_density(&basis.velocity(k, beta)))
        .sum()
}

#[inline]
fn korn_density(u: &VelocitySample) -> f64 {
    let g = &u.grad;
    -(g[0][0] * g[0][0] + 2.0 * g[0][1] * g[1][0] + g[1][1] * g[1][1])
}

/// Per-node inequality bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityFlags {
    /// `<K'(eta), eta - m> - 2 K(eta) >= -1e-12` at every node.
    pub coercivity: bool,
    /// `int |d_t eta|^2 <= (1 + kappa) int |grad u|^2` at every node.
    pub trace: bool,
    /// Diffusion estimate within slack (true when skipped).
    pub diffusion: bool,
    /// Largest observed `int |d_t eta|^2 / int |grad u|^2`.
    pub trace_ratio: f64,
    /// Largest observed `int |u|^2 / int |grad u|^2`.
    pub poincare_ratio: f64,
}

/// Everything recorded about one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Midpoint series, one shorter than `times`.
    pub dissipation: Vec<f64>,
    pub power: Vec<f64>,
    pub residual: Vec<f64>,
    pub mean_eta: Vec<f64>,
    pub sup_eta: Vec<f64>,
    pub forcing_norm: f64,
    pub mean: f64,
    pub sup_energy: f64,
    pub bound_constant: f64,
    pub max_residual: f64,
    pub mean_deviation: f64,
    pub periodicity_defect: f64,
    pub diffusion: DiffusionCheck,
    pub flags: InequalityFlags,
}

/// Build the full report for a trajectory on its geometry.
pub fn energy_report(
    problem: &Problem,
    traj: &CoefficientTrajectory,
    geometry: &GeometryTrajectory,
    periodic_tolerance: f64,
) -> Result<EnergyReport> {
    let balance = check_energy_balance(problem, traj, geometry)?;
    let etas = plate_series(problem, traj);
    let dt = traj.dt();
    let mut flags = InequalityFlags {
        coercivity: true,
        trace: true,
        ..Default::default()
    };
    for (i, eta) in etas.iter().enumerate() {
        let shifted = eta.oscillating();
        if problem.koiter.coercivity_gap(&shifted, &problem.grid) < -1e-12 {
            flags.coercivity = false;
        }
        let map = geometry.map_at(i as f64 * dt, problem.kappa)?;
        let snap = problem.snapshot(&map)?;
        let beta = &traj.derivatives[i];
        let (mut grad2, mut u2) = (0.0, 0.0);
        for (k, node) in snap.quadrature.nodes.iter().enumerate() {
            let u = snap.velocity(k, beta);
            u2 += node.weight * (u.value[0].powi(2) + u.value[1].powi(2));
            grad2 += node.weight * u.grad.iter().flatten().map(|g| g * g).sum::<f64>();
        }
        let plate: f64 = beta.iter().step_by(2).map(|v| v * v).sum();
        if plate > (1.0 + problem.kappa) * grad2 * (1.0 + 1e-10) {
            flags.trace = false;
        }
        if grad2 > 0.0 {
            flags.trace_ratio = flags.trace_ratio.max(plate / grad2);
            flags.poincare_ratio = flags.poincare_ratio.max(u2 / grad2);
        }
    }
    let diffusion = check_diffusion_estimate(problem, traj, geometry, periodic_tolerance)?;
    flags.diffusion = diffusion.skipped.is_some() || diffusion.holds;
    let forcing_norm = forcing_norm(&problem.forcing, geometry, &problem.grid, problem.kappa)?;
    let sup_energy = balance.energy.iter().copied().fold(0.0, f64::max);
    let mut report = EnergyReport {
        times: traj.times(),
        mean_eta: etas.iter().map(|e| e.mean).collect(),
        sup_eta: etas.iter().map(|e| e.sup_norm()).collect(),
        mean_deviation: check_mean_conservation(&etas, problem.mean),
        energy: balance.energy,
        dissipation: balance.dissipation,
        power: balance.power,
        residual: balance.residuals,
        max_residual: balance.max,
        forcing_norm,
        mean: problem.mean,
        sup_energy,
        bound_constant: 0.0,
        periodicity_defect: traj.periodicity_defect(),
        diffusion,
        flags,
    };
    report.bound_constant = check_uniform_bound(&report, f64::INFINITY, 0.0).1;
    Ok(report)
}
