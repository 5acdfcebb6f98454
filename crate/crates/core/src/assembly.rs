//! Galerkin system at one time instant.
//!
//! For `u = sum beta_j X_j` the system reads
//!
//! ```text
//! b' = beta
//! M beta' = L - (N + A + C) beta - conv(beta) - K'(eta(b))
//! ```
//!
//! with the mass `M`, basis motion `N`, viscous matrix `A`, boundary coupling
//! `C` and load `L` defined in [`AssembledSystem`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{GalerkinBasis, InterleavedBasis, VelocitySample};
use crate::geometry::{DeformationMap, ReferenceSlab};
use crate::plate::{KoiterModel, PlateProfile};
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Cos,
    Sin,
}

impl Phase {
    #[inline]
    fn eval(self, theta: f64) -> f64 {
        match self {
            Phase::Cos => theta.cos(),
            Phase::Sin => theta.sin(),
        }
    }
}

/// `cos(2 pi l t / T)` or `sin(2 pi l t / T)`; integer `l` keeps it T-periodic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeMode {
    pub wavenumber: u32,
    pub phase: Phase,
}

impl TimeMode {
    pub fn eval(&self, t: f64, period: f64) -> f64 {
        self.phase.eval(TWO_PI * self.wavenumber as f64 * t / period)
    }
}

/// One plate load term `amplitude * time(t) * trig(2 pi k x)`; `k = 0` is a
/// uniform pressure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateLoad {
    pub amplitude: f64,
    #[serde(default)]
    pub time: TimeMode,
    pub wavenumber: usize,
    #[serde(default)]
    pub phase: Phase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Z,
}

/// One body-force term along `component`:
/// `amplitude * time(t) * trig(2 pi k x) * v(z)` with `v = sin(pi m z)`
/// (`v = 1` for `m = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidLoad {
    pub amplitude: f64,
    pub component: Component,
    #[serde(default)]
    pub time: TimeMode,
    #[serde(default)]
    pub wavenumber: usize,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default)]
    pub vertical: usize,
}

/// Time-periodic data: fluid body force `f` and plate load `g`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    #[serde(default)]
    pub fluid: Vec<FluidLoad>,
    #[serde(default)]
    pub plate: Vec<PlateLoad>,
}

impl ForcingSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// `g = amplitude * sin(2 pi t / T) cos(2 pi x)`.
    pub fn plate_wave(amplitude: f64) -> Self {
        Self {
            fluid: Vec::new(),
            plate: vec![PlateLoad {
                amplitude,
                time: TimeMode {
                    wavenumber: 1,
                    phase: Phase::Sin,
                },
                wavenumber: 1,
                phase: Phase::Cos,
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.fluid.iter().all(|f| f.amplitude == 0.0) && self.plate.iter().all(|g| g.amplitude == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.fluid.iter_mut().for_each(|f| f.amplitude *= factor);
        out.plate.iter_mut().for_each(|g| g.amplitude *= factor);
        out
    }

    pub fn plate_load(&self, t: f64, period: f64) -> PlateProfile {
        let mut g = PlateProfile::zero(0);
        for term in &self.plate {
            let a = term.amplitude * term.time.eval(t, period);
            if term.wavenumber == 0 {
                g.mean += a;
            } else if term.phase == Phase::Cos {
                g.set_cos(term.wavenumber, g.cos_coeff(term.wavenumber) + a);
            } else {
                g.set_sin(term.wavenumber, g.sin_coeff(term.wavenumber) + a);
            }
        }
        g
    }

    pub fn fluid_force(&self, t: f64, period: f64, x: f64, z: f64) -> [f64; 2] {
        let mut f = [0.0; 2];
        for term in &self.fluid {
            let mut v = term.amplitude * term.time.eval(t, period);
            if term.wavenumber > 0 {
                v *= term.phase.eval(TWO_PI * term.wavenumber as f64 * x);
            }
            if term.vertical > 0 {
                v *= (PI * term.vertical as f64 * z).sin();
            }
            match term.component {
                Component::X => f[0] += v,
                Component::Z => f[1] += v,
            }
        }
        f
    }

    pub fn has_fluid_force(&self) -> bool {
        self.fluid.iter().any(|f| f.amplitude != 0.0)
    }
}

/// Everything that does not change along a run.
#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: ReferenceSlab,
    pub basis: GalerkinBasis,
    pub kappa: f64,
    /// Conserved plate mean `m`.
    pub mean: f64,
    pub koiter: KoiterModel,
    pub forcing: ForcingSpec,
    pub period: f64,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.basis.len()
    }

    /// `eta = sum b_j Y_j + m` (plate entries of `b` only).
    pub fn plate_profile(&self, b: &[f64]) -> PlateProfile {
        self.basis.plate_profile(b, self.mean)
    }

    /// `<K'(eta(b)), Y_k>` scattered to plate entries.
    pub fn plate_force(&self, b: &[f64]) -> DVector<f64> {
        let eta = self.plate_profile(b);
        let f = self.koiter.force(&eta, self.basis.plate_count(), &self.grid);
        let mut out = DVector::zeros(self.n());
        for (p, v) in f.into_iter().enumerate() {
            out[2 * p] = v;
        }
        out
    }

    /// Diagonal of the linear part of the plate force.
    pub fn bending_diagonal(&self) -> DVector<f64> {
        let stiff = self.koiter.bending_stiffness(self.basis.plate_count());
        let mut out = DVector::zeros(self.n());
        for (p, v) in stiff.into_iter().enumerate() {
            out[2 * p] = v;
        }
        out
    }

    pub fn snapshot(&self, map: &DeformationMap) -> Result<InterleavedBasis> {
        self.basis.snapshot(map, &self.grid)
    }

    pub fn assemble(&self, map: &DeformationMap, t: f64) -> Result<AssembledSystem> {
        assemble(self, map, t)
    }

    /// `E = 1/2 int |u|^2 + 1/2 int |d_t eta|^2 + K(eta)`.
    pub fn energy(&self, basis: &InterleavedBasis, b: &[f64], beta: &[f64]) -> f64 {
        energy_of_state(self, basis, b, beta)
    }
}

/// Matrices of the Galerkin system at one time.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub t: f64,
    pub basis: InterleavedBasis,
    /// `int_{Omega} X_j . X_k`.
    pub fluid_gram: DMatrix<f64>,
    /// Fluid Gram plus the plate Gram (identity on plate entries).
    pub mass: DMatrix<f64>,
    /// `N_kj = int d_t X_j . X_k`.
    pub basis_motion: DMatrix<f64>,
    /// `A_kj = int grad X_j : grad X_k`.
    pub viscous: DMatrix<f64>,
    /// `C_kj = 1/2 int_top delta_t Y_j Y_k`.
    pub coupling: DMatrix<f64>,
    pub load: DVector<f64>,
}

impl AssembledSystem {
    pub fn n(&self) -> usize {
        self.basis.len()
    }

    /// Skew form `1/2 int (u.grad)u . X_k - 1/2 int (u.grad)X_k . u`.
    pub fn convective(&self, beta: &[f64]) -> DVector<f64> {
        convective(&self.basis, beta)
    }
}

pub fn convective(basis: &InterleavedBasis, beta: &[f64]) -> DVector<f64> {
    let n = basis.len();
    let mut out = DVector::zeros(n);
    if beta.iter().all(|b| *b == 0.0) {
        return out;
    }
    for (k, node) in basis.quadrature.nodes.iter().enumerate() {
        let u = basis.velocity(k, beta);
        let adv = advect(&u, &u.grad);
        let w = 0.5 * node.weight;
        for (o, s) in out.iter_mut().zip(basis.at_node(k)) {
            let forward = adv[0] * s.value[0] + adv[1] * s.value[1];
            let back = advect(&u, &s.grad);
            let backward = back[0] * u.value[0] + back[1] * u.value[1];
            *o += w * (forward - backward);
        }
    }
    out
}

/// `(u . grad) v` for the gradient `grad` of `v`.
#[inline]
fn advect(u: &VelocitySample, grad: &[[f64; 2]; 2]) -> [f64; 2] {
    [
        grad[0][0] * u.value[0] + grad[0][1] * u.value[1],
        grad[1][0] * u.value[0] + grad[1][1] * u.value[1],
    ]
}

pub fn assemble(problem: &Problem, map: &DeformationMap, t: f64) -> Result<AssembledSystem> {
    let basis = problem.snapshot(map)?;
    let n = basis.len();
    let fluid_gram = fluid_gram(&basis);
    let mut viscous = DMatrix::zeros(n, n);
    let mut basis_motion = DMatrix::zeros(n, n);
    let mut load = DVector::zeros(n);
    let forced = problem.forcing.has_fluid_force();
    for (k, node) in basis.quadrature.nodes.iter().enumerate() {
        let s = basis.at_node(k);
        let w = node.weight;
        let f = if forced {
            problem.forcing.fluid_force(t, problem.period, node.x, node.z)
        } else {
            [0.0; 2]
        };
        for a in 0..n {
            let sa = &s[a];
            if forced {
                load[a] += w * (f[0] * sa.value[0] + f[1] * sa.value[1]);
            }
            for c in 0..=a {
                let sc = &s[c];
                let mut g = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        g += sa.grad[i][j] * sc.grad[i][j];
                    }
                }
                viscous[(a, c)] += w * g;
            }
            // plate entries have no rate
            if !GalerkinBasis::is_plate(a) {
                for c in 0..n {
                    basis_motion[(c, a)] += w * (sa.rate[0] * s[c].value[0] + sa.rate[1] * s[c].value[1]);
                }
            }
        }
    }
    symmetrize_lower(&mut viscous);

    let mut coupling = DMatrix::zeros(n, n);
    let g = problem.forcing.plate_load(t, problem.period);
    for (c, col) in basis.quadrature.columns.iter().enumerate() {
        let w = basis.x_weights[c];
        let trace = &basis.traces[c];
        let gx = g.value(col.x);
        for a in (0..n).step_by(2) {
            load[a] += w * gx * trace[a];
            for b in (0..=a).step_by(2) {
                coupling[(a, b)] += 0.5 * w * col.rate * trace[a] * trace[b];
            }
        }
    }
    symmetrize_lower(&mut coupling);

    let mut mass = fluid_gram.clone();
    for a in (0..n).step_by(2) {
        mass[(a, a)] += 1.0;
    }
    Ok(AssembledSystem {
        t,
        basis,
        fluid_gram,
        mass,
        basis_motion,
        viscous,
        coupling,
        load,
    })
}

fn symmetrize_lower(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for c in 0..a {
            m[(c, a)] = m[(a, c)];
        }
    }
}

/// `int_{Omega_delta} X_j . X_k`, exactly symmetric.
pub fn fluid_gram(basis: &InterleavedBasis) -> DMatrix<f64> {
    let n = basis.len();
    let mut gram = DMatrix::zeros(n, n);
    for (k, node) in basis.quadrature.nodes.iter().enumerate() {
        let s = basis.at_node(k);
        for a in 0..n {
            for c in 0..=a {
                gram[(a, c)] += node.weight * (s[a].value[0] * s[c].value[0] + s[a].value[1] * s[c].value[1]);
            }
        }
    }
    symmetrize_lower(&mut gram);
    gram
}

/// Exact time derivative of the quadrature value of the fluid Gram, moving
/// the nodes and weights with the boundary.
pub fn fluid_gram_rate(basis: &InterleavedBasis) -> DMatrix<f64> {
    let n = basis.len();
    let mut rate = DMatrix::zeros(n, n);
    let mut dots = vec![[0.0; 2]; n];
    for (k, node) in basis.quadrature.nodes.iter().enumerate() {
        let s = basis.at_node(k);
        for (d, e) in dots.iter_mut().zip(s) {
            for i in 0..2 {
                d[i] = e.rate[i] + node.speed * e.grad[i][1];
            }
        }
        for a in 0..n {
            for c in 0..=a {
                let (va, vc) = (s[a].value, s[c].value);
                let cross = dots[a][0] * vc[0] + dots[a][1] * vc[1] + va[0] * dots[c][0] + va[1] * dots[c][1];
                let stretch = node.weight_rate * (va[0] * vc[0] + va[1] * vc[1]);
                rate[(a, c)] += node.weight * (cross + stretch);
            }
        }
    }
    symmetrize_lower(&mut rate);
    rate
}

pub fn energy_of_state(problem: &Problem, basis: &InterleavedBasis, b: &[f64], beta: &[f64]) -> f64 {
    let gram = fluid_gram(basis);
    let beta_v = DVector::from_column_slice(beta);
    let fluid = 0.5 * beta_v.dot(&(&gram * &beta_v));
    let plate: f64 = beta.iter().step_by(2).map(|v| 0.5 * v * v).sum();
    fluid + plate + problem.koiter.energy(&problem.plate_profile(b), &problem.grid)
}

/// `beta . conv(beta) + beta^T (N + C) beta - 1/2 beta^T dM/dt beta`.
///
/// The skew form makes the first term vanish identically. The rest
/// compares the transport form of the kinetic energy rate with the time
/// derivative of the Gram matrix, so it measures the discrete Reynolds
/// identity that the energy balance relies on.
pub fn skew_symmetry_defect(problem: &Problem, map: &DeformationMap, beta: &[f64]) -> Result<f64> {
    if beta.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            context: "skew_symmetry_defect",
            expected: problem.n(),
            found: beta.len(),
        });
    }
    let sys = assemble(problem, map, 0.0)?;
    let rate = fluid_gram_rate(&sys.basis);
    let v = DVector::from_column_slice(beta);
    let conv = sys.convective(beta).dot(&v);
    let transport = v.dot(&((&sys.basis_motion + &sys.coupling) * &v));
    Ok(conv + transport - 0.5 * v.dot(&(rate * &v)))
}
