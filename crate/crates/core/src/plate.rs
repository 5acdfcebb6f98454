//! Plate displacement profiles on the unit torus and the nonlinear Koiter
//! energy in its flat, dimension-reduced form
//!
//! ```text
//! K(eta) = a_m * int (eta')^4 dx + a_b * int (eta'')^2 dx
//! ```
//!
//! with unit weights by default.

use std::f64::consts::{PI, SQRT_2};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::geometry::ReferenceSlab;

const TWO_PI: f64 = 2.0 * PI;

/// Scalar field on the unit torus: `mean + sum_k c_k cos(2 pi k x) + s_k sin(2 pi k x)`.
///
/// `coefficients` is stored as `[c_1, s_1, c_2, s_2, ...]`, so its length is
/// always `2 * k_max`. The oscillating part integrates to zero exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateProfile {
    pub mean: f64,
    pub coefficients: Vec<f64>,
}

/// Value and first two derivatives of a profile at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProfileSample {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl PlateProfile {
    pub fn zero(k_max: usize) -> Self {
        Self {
            mean: 0.0,
            coefficients: vec![0.0; 2 * k_max],
        }
    }

    pub fn constant(value: f64, k_max: usize) -> Self {
        Self {
            mean: value,
            coefficients: vec![0.0; 2 * k_max],
        }
    }

    /// `c cos(2 pi k x)` (k >= 1) on top of an optional mean.
    pub fn cosine(k: usize, amplitude: f64) -> Self {
        let mut p = Self::zero(k);
        p.set_cos(k, amplitude);
        p
    }

    pub fn sine(k: usize, amplitude: f64) -> Self {
        let mut p = Self::zero(k);
        p.set_sin(k, amplitude);
        p
    }

    pub fn k_max(&self) -> usize {
        self.coefficients.len() / 2
    }

    pub fn cos_coeff(&self, k: usize) -> f64 {
        self.coefficients.get(2 * (k - 1)).copied().unwrap_or(0.0)
    }

    pub fn sin_coeff(&self, k: usize) -> f64 {
        self.coefficients.get(2 * (k - 1) + 1).copied().unwrap_or(0.0)
    }

    pub fn set_cos(&mut self, k: usize, c: f64) {
        if k > self.k_max() {
            self.coefficients.resize(2 * k, 0.0);
        }
        self.coefficients[2 * (k - 1)] = c;
    }

    pub fn set_sin(&mut self, k: usize, s: f64) {
        if k > self.k_max() {
            self.coefficients.resize(2 * k, 0.0);
        }
        self.coefficients[2 * (k - 1) + 1] = s;
    }

    /// Copy with `k_max` changed; dropped modes are discarded, new ones are zero.
    pub fn resized(&self, k_max: usize) -> Self {
        let mut coefficients = self.coefficients.clone();
        coefficients.resize(2 * k_max, 0.0);
        Self {
            mean: self.mean,
            coefficients,
        }
    }

    pub fn is_mean_free(&self) -> bool {
        self.mean == 0.0
    }

    pub fn sample(&self, x: f64) -> ProfileSample {
        let theta = TWO_PI * x;
        let mut s = ProfileSample {
            value: self.mean,
            ..Default::default()
        };
        for k in 1..=self.k_max() {
            let (c, sn) = (self.cos_coeff(k), self.sin_coeff(k));
            if c == 0.0 && sn == 0.0 {
                continue;
            }
            let w = TWO_PI * k as f64;
            let (sin_k, cos_k) = (k as f64 * theta).sin_cos();
            s.value += c * cos_k + sn * sin_k;
            s.d1 += w * (sn * cos_k - c * sin_k);
            s.d2 -= w * w * (c * cos_k + sn * sin_k);
        }
        s
    }

    pub fn value(&self, x: f64) -> f64 {
        self.sample(x).value
    }

    pub fn samples(&self, nodes: &[f64]) -> Vec<ProfileSample> {
        nodes.iter().map(|&x| self.sample(x)).collect()
    }

    /// Spectral derivative (always mean-free).
    pub fn derivative(&self) -> Self {
        let mut d = Self::zero(self.k_max());
        for k in 1..=self.k_max() {
            let w = TWO_PI * k as f64;
            d.set_cos(k, w * self.sin_coeff(k));
            d.set_sin(k, -w * self.cos_coeff(k));
        }
        d
    }

    /// The unique mean-free periodic antiderivative. Requires a zero mean.
    pub fn antiderivative(&self) -> crate::Result<Self> {
        if self.mean != 0.0 {
            return Err(crate::Error::NonzeroMean { mean: self.mean });
        }
        let mut a = Self::zero(self.k_max());
        for k in 1..=self.k_max() {
            let w = TWO_PI * k as f64;
            a.set_cos(k, -self.sin_coeff(k) / w);
            a.set_sin(k, self.cos_coeff(k) / w);
        }
        Ok(a)
    }

    /// Mean-free part of the profile.
    pub fn oscillating(&self) -> Self {
        Self {
            mean: 0.0,
            coefficients: self.coefficients.clone(),
        }
    }

    /// Sup-norm: every local maximum of `|eta|` on a grid of
    /// `max(64, 8 (k_max + 1))` points is polished by Newton steps on `eta'`.
    pub fn sup_norm(&self) -> f64 {
        let n = sup_grid_size(self.k_max());
        let h = 1.0 / n as f64;
        let vals: Vec<f64> = (0..n).map(|j| self.value(j as f64 * h).abs()).collect();
        let mut best = vals.iter().copied().fold(0.0, f64::max);
        for j in 0..n {
            if vals[j] < vals[(j + n - 1) % n] || vals[j] < vals[(j + 1) % n] {
                continue;
            }
            let x0 = j as f64 * h;
            let mut x = x0;
            for _ in 0..8 {
                let s = self.sample(x);
                if s.d2 == 0.0 {
                    break;
                }
                let next = x - s.d1 / s.d2;
                // the maximum lies within one cell of the grid point
                if (next - x0).abs() > h {
                    break;
                }
                x = next;
            }
            best = best.max(self.value(x).abs());
        }
        best
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            coefficients: self.coefficients.iter().map(|c| c * factor).collect(),
        }
    }

    /// `self + factor * other`, with the larger of the two mode counts.
    pub fn axpy(&self, factor: f64, other: &Self) -> Self {
        let k = self.k_max().max(other.k_max());
        let mut out = self.resized(k);
        out.mean += factor * other.mean;
        for (o, c) in out.coefficients.iter_mut().zip(&other.coefficients) {
            *o += factor * c;
        }
        out
    }

    /// Largest absolute coefficient difference, mean included.
    pub fn max_coefficient_distance(&self, other: &Self) -> f64 {
        let diff = self.axpy(-1.0, other);
        diff.coefficients
            .iter()
            .fold(diff.mean.abs(), |m, c| m.max(c.abs()))
    }
}

pub(crate) fn sup_grid_size(k_max: usize) -> usize {
    (8 * (k_max + 1)).max(64)
}

impl Add for &PlateProfile {
    type Output = PlateProfile;
    fn add(self, rhs: Self) -> PlateProfile {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &PlateProfile {
    type Output = PlateProfile;
    fn sub(self, rhs: Self) -> PlateProfile {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &PlateProfile {
    type Output = PlateProfile;
    fn mul(self, rhs: f64) -> PlateProfile {
        self.scaled(rhs)
    }
}

/// Index `p` (0-based) of the L2-orthonormal plate family
/// `sqrt2 cos(2 pi x), sqrt2 sin(2 pi x), sqrt2 cos(4 pi x), ...`
/// mapped to `(wavenumber, is_cosine)`.
pub fn plate_mode(p: usize) -> (usize, bool) {
    (p / 2 + 1, p.is_multiple_of(2))
}

/// Profile of the orthonormal plate mode `p`.
pub fn plate_mode_profile(p: usize) -> PlateProfile {
    let (k, is_cos) = plate_mode(p);
    if is_cos {
        PlateProfile::cosine(k, SQRT_2)
    } else {
        PlateProfile::sine(k, SQRT_2)
    }
}

/// Weight function with unit integral used to split off the conserved mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpWeight {
    psi: PlateProfile,
}

impl BumpWeight {
    /// `psi` is rescaled nowhere; its mean must be exactly one.
    pub fn new(psi: PlateProfile) -> crate::Result<Self> {
        if psi.mean != 1.0 {
            return Err(crate::Error::config(
                "psi",
                format!("bump weight must integrate to 1, got {}", psi.mean),
            ));
        }
        Ok(Self { psi })
    }

    pub fn profile(&self) -> &PlateProfile {
        &self.psi
    }
}

impl Default for BumpWeight {
    fn default() -> Self {
        Self {
            psi: PlateProfile::constant(1.0, 0),
        }
    }
}

/// `xi - psi * int(xi)`.
pub fn mean_free_project(xi: &PlateProfile, psi: &BumpWeight) -> PlateProfile {
    let mut out = xi.axpy(-xi.mean, psi.profile());
    // psi has unit mean, so the subtraction cancels the mean up to rounding
    out.mean = 0.0;
    out
}

/// Membrane and bending weights of the reduced Koiter energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KoiterModel {
    pub membrane: f64,
    pub bending: f64,
}

impl Default for KoiterModel {
    fn default() -> Self {
        Self {
            membrane: 1.0,
            bending: 1.0,
        }
    }
}

/// Equispaced nodes used for the quartic/cubic plate integrals: at least
/// `4 (k_max + 1)` points, i.e. the natural grid zero-padded by two, so the
/// integrands of degree `4 k_max` are integrated exactly.
fn padded_nodes(k_max: usize, grid: &ReferenceSlab) -> Vec<f64> {
    let n = grid.nx().max(4 * (k_max + 1));
    (0..n).map(|j| j as f64 / n as f64).collect()
}

impl KoiterModel {
    pub fn energy(&self, eta: &PlateProfile, grid: &ReferenceSlab) -> f64 {
        let (quartic, quadratic) = self.energy_parts(eta, grid);
        quartic + quadratic
    }

    /// `(membrane part, bending part)` of the energy.
    pub fn energy_parts(&self, eta: &PlateProfile, grid: &ReferenceSlab) -> (f64, f64) {
        let nodes = padded_nodes(eta.k_max(), grid);
        let w = 1.0 / nodes.len() as f64;
        let (mut quartic, mut quadratic) = (0.0, 0.0);
        for s in eta.samples(&nodes) {
            quartic += w * s.d1.powi(4);
            quadratic += w * s.d2 * s.d2;
        }
        (self.membrane * quartic, self.bending * quadratic)
    }

    /// `<K'(eta), xi> = int 4 a_m (eta')^3 xi' + 2 a_b eta'' xi''`.
    pub fn directional(&self, eta: &PlateProfile, xi: &PlateProfile, grid: &ReferenceSlab) -> f64 {
        let nodes = padded_nodes(eta.k_max().max(xi.k_max()), grid);
        let w = 1.0 / nodes.len() as f64;
        nodes
            .iter()
            .map(|&x| {
                let (e, v) = (eta.sample(x), xi.sample(x));
                w * (4.0 * self.membrane * e.d1.powi(3) * v.d1 + 2.0 * self.bending * e.d2 * v.d2)
            })
            .sum()
    }

    /// `<K'(eta), Y_p>` for the first `count` orthonormal plate modes.
    pub fn force(&self, eta: &PlateProfile, count: usize, grid: &ReferenceSlab) -> Vec<f64> {
        let k_modes = plate_mode(count.saturating_sub(1)).0;
        let nodes = padded_nodes(eta.k_max().max(k_modes), grid);
        let w = 1.0 / nodes.len() as f64;
        let mut out = vec![0.0; count];
        for &x in &nodes {
            let e = eta.sample(x);
            let cubic = 4.0 * self.membrane * e.d1.powi(3);
            let linear = 2.0 * self.bending * e.d2;
            if cubic == 0.0 && linear == 0.0 {
                continue;
            }
            let theta = TWO_PI * x;
            for (p, o) in out.iter_mut().enumerate() {
                let (k, is_cos) = plate_mode(p);
                let kw = TWO_PI * k as f64;
                let (sin_k, cos_k) = (k as f64 * theta).sin_cos();
                let (d1, d2) = if is_cos {
                    (-SQRT_2 * kw * sin_k, -SQRT_2 * kw * kw * cos_k)
                } else {
                    (SQRT_2 * kw * cos_k, -SQRT_2 * kw * kw * sin_k)
                };
                *o += w * (cubic * d1 + linear * d2);
            }
        }
        out
    }

    /// Diagonal of the (linear) bending stiffness in the orthonormal plate
    /// modes: `2 a_b (2 pi k)^4`.
    pub fn bending_stiffness(&self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|p| {
                let kw = TWO_PI * plate_mode(p).0 as f64;
                2.0 * self.bending * kw.powi(4)
            })
            .collect()
    }

    /// `<K'(eta), eta> - 2 K(eta) = 2 a_m int (eta')^4 >= 0`.
    pub fn coercivity_gap(&self, eta: &PlateProfile, grid: &ReferenceSlab) -> f64 {
        self.directional(eta, eta, grid) - 2.0 * self.energy(eta, grid)
    }
}

pub fn koiter_energy(eta: &PlateProfile, grid: &ReferenceSlab) -> f64 {
    KoiterModel::default().energy(eta, grid)
}

/// Force coefficients against all `2 k_max` orthonormal plate modes of `eta`.
pub fn koiter_force(eta: &PlateProfile, grid: &ReferenceSlab) -> Vec<f64> {
    KoiterModel::default().force(eta, 2 * eta.k_max(), grid)
}

pub fn coercivity_gap(eta: &PlateProfile, grid: &ReferenceSlab) -> f64 {
    KoiterModel::default().coercivity_gap(eta, grid)
}
