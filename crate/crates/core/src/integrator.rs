//! Implicit midpoint integration of the Galerkin system on a prescribed
//! geometry.
//!
//! Each step solves for the stage velocity `beta_m` with `b_m = b + dt/2 beta_m`:
//!
//! ```text
//! M (beta_m - beta) = dt/2 [L - (N + A + C) beta_m - conv(beta_m) - K'(b_m)]
//! ```
//!
//! with all matrices evaluated at `t + dt/2`. The linear bending stiffness is
//! kept on the left so the stage iteration only sees the non-stiff remainder.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::anderson::Anderson;
use crate::assembly::Problem;
use crate::geometry::{Geometry, GeometryTrajectory};
use crate::interp::hermite_channel;
use crate::{Error, Result};

/// `b(t_i)` and `b'(t_i)` on the uniform grid `t_i = i T / Nt`, `i = 0..=Nt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTrajectory {
    pub period: f64,
    pub values: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
}

impl CoefficientTrajectory {
    pub fn zeros(n: usize, nt: usize, period: f64) -> Self {
        Self {
            period,
            values: vec![vec![0.0; n]; nt + 1],
            derivatives: vec![vec![0.0; n]; nt + 1],
        }
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }

    pub fn nt(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.period / self.nt() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.nt()).map(|i| i as f64 * self.dt()).collect()
    }

    /// Samples of channel `k`: `(values, derivatives)`.
    pub fn channel(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.values.iter().map(|v| v[k]).collect(),
            self.derivatives.iter().map(|v| v[k]).collect(),
        )
    }

    /// Discrete C^1 distance: `max_i |a_i - b_i|_inf + max_i |a'_i - b'_i|_inf`.
    pub fn c1_distance(&self, other: &Self) -> f64 {
        let sup = |x: &[Vec<f64>], y: &[Vec<f64>]| {
            x.iter()
                .zip(y)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
                .fold(0.0, f64::max)
        };
        sup(&self.values, &other.values) + sup(&self.derivatives, &other.derivatives)
    }

    /// `|b(0) - b(T)|_inf + |b'(0) - b'(T)|_inf`.
    pub fn periodicity_defect(&self) -> f64 {
        let last = self.nt();
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        d(&self.values[0], &self.values[last]) + d(&self.derivatives[0], &self.derivatives[last])
    }

    /// `(1 - w) self + w other`.
    pub fn blend(&self, other: &Self, w: f64) -> Self {
        let mix = |x: &[Vec<f64>], y: &[Vec<f64>]| {
            x.iter()
                .zip(y)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (1.0 - w) * p + w * q).collect())
                .collect()
        };
        Self {
            period: self.period,
            values: mix(&self.values, &other.values),
            derivatives: mix(&self.derivatives, &other.derivatives),
        }
    }

    /// Flatten values then derivatives into one vector.
    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.values.len() * self.n(),
            self.values.iter().chain(&self.derivatives).flatten().copied(),
        )
    }

    pub fn unflatten(&self, v: &DVector<f64>) -> Self {
        let n = self.n();
        let rows = self.values.len();
        let chunk = |r: usize| v.as_slice()[r * n..(r + 1) * n].to_vec();
        Self {
            period: self.period,
            values: (0..rows).map(chunk).collect(),
            derivatives: (rows..2 * rows).map(chunk).collect(),
        }
    }

    /// Hermite resampling onto `nt` steps and truncation or zero padding to
    /// `n` channels.
    pub fn resampled(&self, n: usize, nt: usize) -> Self {
        let dt_old = self.dt();
        let dt = self.period / nt as f64;
        let keep = n.min(self.n());
        let mut out = Self::zeros(n, nt, self.period);
        for k in 0..keep {
            let (v, d) = self.channel(k);
            for i in 0..=nt {
                let (a, b) = hermite_channel(&v, &d, dt_old, i as f64 * dt);
                out.values[i][k] = a;
                out.derivatives[i][k] = b;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepOptions {
    pub inner_tolerance: f64,
    pub max_inner: usize,
    /// Anderson depth for the stage iteration; zero disables it.
    pub anderson: usize,
    /// Abort when the energy exceeds this value.
    pub energy_ceiling: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            inner_tolerance: 1e-12,
            max_inner: 50,
            anderson: 0,
            energy_ceiling: 1e6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub b: DVector<f64>,
    pub beta: DVector<f64>,
    pub beta_mid: DVector<f64>,
    pub iterations: usize,
    /// `beta_m^T A beta_m` at the midpoint.
    pub dissipation: f64,
    /// `beta_m . L` at the midpoint.
    pub power: f64,
}

/// One implicit midpoint step from `(b, beta)` at `t`.
pub fn step(
    problem: &Problem,
    geometry: &impl Geometry,
    t: f64,
    dt: f64,
    b: &DVector<f64>,
    beta: &DVector<f64>,
    opts: &StepOptions,
) -> Result<StepOutcome> {
    let n = problem.n();
    if b.len() != n || beta.len() != n {
        return Err(Error::DimensionMismatch {
            context: "step",
            expected: n,
            found: b.len().min(beta.len()),
        });
    }
    let tm = t + 0.5 * dt;
    let map = geometry.map_at(tm, problem.kappa)?;
    let sys = problem.assemble(&map, tm)?;
    let bend = problem.bending_diagonal();
    let h = 0.5 * dt;

    let mut stage: DMatrix<f64> = &sys.mass + (&sys.basis_motion + &sys.viscous + &sys.coupling) * h;
    for i in 0..n {
        stage[(i, i)] += h * h * bend[i];
    }
    let lu = stage.lu();
    if !lu.is_invertible() {
        return Err(Error::SingularMass { t: tm });
    }
    let fixed = &sys.mass * beta + (&sys.load - bend.component_mul(b)) * h;
    let nonlinear = |bm: &DVector<f64>| -> DVector<f64> {
        let b_mid = b + bm * h;
        let mut r = sys.convective(bm.as_slice()) + problem.plate_force(b_mid.as_slice());
        r -= bend.component_mul(&b_mid);
        r
    };
    let solve = |bm: &DVector<f64>| -> DVector<f64> {
        let rhs = &fixed - nonlinear(bm) * h;
        lu.solve(&rhs).expect("factorization checked invertible")
    };

    let mut acc = Anderson::new(opts.anderson, 1.0);
    let mut bm = beta.clone();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_inner {
        iterations += 1;
        let g = solve(&bm);
        change = (&g - &bm).amax();
        let scale = g.amax();
        bm = if opts.anderson > 0 { acc.next(&bm, &g) } else { g };
        if change <= opts.inner_tolerance * scale {
            break;
        }
    }
    if !(change <= opts.inner_tolerance * bm.amax()) {
        return Err(Error::InnerSolve {
            t,
            iterations,
            residual: change,
        });
    }
    let dissipation = bm.dot(&(&sys.viscous * &bm));
    let power = bm.dot(&sys.load);
    Ok(StepOutcome {
        b: b + &bm * dt,
        beta: &bm * 2.0 - beta,
        beta_mid: bm,
        iterations,
        dissipation,
        power,
    })
}

/// Trajectory together with the per-step energy record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Integration {
    pub trajectory: CoefficientTrajectory,
    /// `E_n(t_i)`, `i = 0..=Nt`.
    pub energy: Vec<f64>,
    /// Midpoint dissipation `int |grad u|^2`.
    pub dissipation: Vec<f64>,
    /// Midpoint power `int f.u + int g d_t eta`.
    pub power: Vec<f64>,
    /// `(E_{i+1} - E_i)/dt + dissipation - power`.
    pub residual: Vec<f64>,
    pub max_inner_iterations: usize,
}

/// Integrate over the time grid of `geometry` from `(b0, beta0)`.
pub fn integrate(
    problem: &Problem,
    b0: &[f64],
    beta0: &[f64],
    geometry: &GeometryTrajectory,
    opts: &StepOptions,
) -> Result<Integration> {
    let nt = geometry.nt();
    let dt = geometry.dt();
    let n = problem.n();
    let mut trajectory = CoefficientTrajectory::zeros(n, nt, geometry.period);
    let mut b = DVector::from_column_slice(b0);
    let mut beta = DVector::from_column_slice(beta0);
    let node_energy = |i: usize, b: &DVector<f64>, beta: &DVector<f64>| -> Result<f64> {
        let map = geometry.map_at(i as f64 * dt, problem.kappa)?;
        let snap = problem.snapshot(&map)?;
        Ok(problem.energy(&snap, b.as_slice(), beta.as_slice()))
    };
    let mut energy = Vec::with_capacity(nt + 1);
    let mut dissipation = Vec::with_capacity(nt);
    let mut power = Vec::with_capacity(nt);
    let mut residual = Vec::with_capacity(nt);
    let mut max_inner = 0;

    trajectory.values[0] = b.as_slice().to_vec();
    trajectory.derivatives[0] = beta.as_slice().to_vec();
    energy.push(node_energy(0, &b, &beta)?);
    for i in 0..nt {
        let t = i as f64 * dt;
        let out = step(problem, geometry, t, dt, &b, &beta, opts)?;
        b = out.b;
        beta = out.beta;
        let e = node_energy(i + 1, &b, &beta)?;
        if !(e <= opts.energy_ceiling) {
            return Err(Error::EnergyBlowUp {
                t: t + dt,
                energy: e,
                ceiling: opts.energy_ceiling,
            });
        }
        residual.push((e - energy[i]) / dt + out.dissipation - out.power);
        energy.push(e);
        dissipation.push(out.dissipation);
        power.push(out.power);
        max_inner = max_inner.max(out.iterations);
        trajectory.values[i + 1] = b.as_slice().to_vec();
        trajectory.derivatives[i + 1] = beta.as_slice().to_vec();
    }
    Ok(Integration {
        trajectory,
        energy,
        dissipation,
        power,
        residual,
        max_inner_iterations: max_inner,
    })
}
