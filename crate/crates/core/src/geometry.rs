//! Reference slab, deformation maps and quadrature over moving domains.
//!
//! The deformed channel is `{(x, z) : x in T^1, 0 < z < 1 + delta(x)}`, the
//! image of the unit slab under `psi(x, z) = (x, z (1 + delta(x)))`. Every
//! integral over a deformed domain is evaluated in reference coordinates.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::interp::{hermite_weights, locate};
use crate::plate::{PlateProfile, ProfileSample};
use crate::{Error, Result};

/// Default admissibility bound on `sup |delta|`.
pub const DEFAULT_KAPPA: f64 = 0.5;

/// Tensor quadrature on `T^1 x (0, 1)`: trapezoid in `x`, Gauss-Legendre in `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSlab {
    x_nodes: Vec<f64>,
    x_weights: Vec<f64>,
    z_nodes: Vec<f64>,
    z_weights: Vec<f64>,
}

impl ReferenceSlab {
    pub fn new(nx: usize, nz: usize) -> Result<Self> {
        if nx < 4 || !nx.is_multiple_of(2) {
            return Err(Error::config("nx", format!("need an even count >= 4, got {nx}")));
        }
        if nz < 4 {
            return Err(Error::config("nz", format!("need at least 4 nodes, got {nz}")));
        }
        let x_nodes = (0..nx).map(|j| j as f64 / nx as f64).collect();
        let x_weights = vec![1.0 / nx as f64; nx];
        let rule = GaussLegendre::new(NonZeroUsize::new(nz).expect("nz >= 4"));
        let (z_nodes, z_weights) = rule
            .iter()
            .map(|(node, weight)| (0.5 * (node + 1.0), 0.5 * weight))
            .unzip();
        Ok(Self {
            x_nodes,
            x_weights,
            z_nodes,
            z_weights,
        })
    }

    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn nz(&self) -> usize {
        self.z_nodes.len()
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn x_weights(&self) -> &[f64] {
        &self.x_weights
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z_nodes
    }

    pub fn z_weights(&self) -> &[f64] {
        &self.z_weights
    }

    /// Tensor nodes in x-major order (`i * nz + j`).
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x_nodes
            .iter()
            .flat_map(move |&x| self.z_nodes.iter().map(move |&z| (x, z)))
    }
}

/// `psi_delta(x, z) = (x, z (1 + delta(x)))` together with the boundary rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationMap {
    delta: PlateProfile,
    delta_t: PlateProfile,
    kappa: f64,
}

impl DeformationMap {
    pub fn new(delta: PlateProfile, delta_t: PlateProfile, kappa: f64) -> Result<Self> {
        let sup = delta.sup_norm();
        if !(sup < kappa) {
            return Err(Error::InadmissibleGeometry { sup, kappa });
        }
        Ok(Self {
            delta,
            delta_t,
            kappa,
        })
    }

    /// Static deformation (zero rate).
    pub fn fixed(delta: PlateProfile, kappa: f64) -> Result<Self> {
        let k = delta.k_max();
        Self::new(delta, PlateProfile::zero(k), kappa)
    }

    pub fn identity() -> Self {
        Self {
            delta: PlateProfile::zero(0),
            delta_t: PlateProfile::zero(0),
            kappa: DEFAULT_KAPPA,
        }
    }

    pub fn delta(&self) -> &PlateProfile {
        &self.delta
    }

    pub fn delta_t(&self) -> &PlateProfile {
        &self.delta_t
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn column(&self, x: f64) -> ColumnGeometry {
        ColumnGeometry::new(x, self.delta.sample(x), self.delta_t.sample(x))
    }
}

pub fn push_forward_point(map: &DeformationMap, x: f64, z: f64) -> (f64, f64) {
    let x = x.rem_euclid(1.0);
    (x, z * (1.0 + map.delta.value(x)))
}

/// Quadrature of `int_{Omega_delta} f dx = int_Omega (f o psi)(1 + delta) dx_ref`,
/// `integrand` sampled at the slab nodes in x-major order.
pub fn integrate_moving_domain(
    map: &DeformationMap,
    grid: &ReferenceSlab,
    integrand: &[f64],
) -> Result<f64> {
    let expected = grid.nx() * grid.nz();
    if integrand.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "integrate_moving_domain",
            expected,
            found: integrand.len(),
        });
    }
    let mut total = 0.0;
    for (i, (&x, &wx)) in grid.x_nodes.iter().zip(&grid.x_weights).enumerate() {
        let height = 1.0 + map.delta.value(x);
        let column: f64 = grid
            .z_weights
            .iter()
            .zip(&integrand[i * grid.nz()..(i + 1) * grid.nz()])
            .map(|(w, f)| w * f)
            .sum();
        total += wx * height * column;
    }
    Ok(total)
}

/// Samples of `J = sqrt(delta'^2 + 1)` at the slab x-nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryJacobian {
    pub values: Vec<f64>,
}

pub fn boundary_jacobian(delta: &PlateProfile, grid: &ReferenceSlab) -> BoundaryJacobian {
    let values = grid
        .x_nodes
        .iter()
        .map(|&x| delta.sample(x).d1.hypot(1.0))
        .collect();
    BoundaryJacobian { values }
}

/// Geometry of one vertical column: height `1 + delta`, its first two
/// x-derivatives, and the boundary rate `delta_t` with its slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnGeometry {
    pub x: f64,
    pub height: f64,
    pub slope: f64,
    pub curvature: f64,
    pub rate: f64,
    pub rate_slope: f64,
}

impl ColumnGeometry {
    pub fn new(x: f64, delta: ProfileSample, rate: ProfileSample) -> Self {
        Self {
            x,
            height: 1.0 + delta.value,
            slope: delta.d1,
            curvature: delta.d2,
            rate: rate.value,
            rate_slope: rate.d1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadNode {
    pub column: usize,
    pub x: f64,
    /// Reference height `z / (1 + delta(x))`.
    pub z_ref: f64,
    /// Physical height.
    pub z: f64,
    /// Physical area weight.
    pub weight: f64,
    /// Vertical node velocity induced by the moving top.
    pub speed: f64,
    /// Logarithmic rate of change of `weight`.
    pub weight_rate: f64,
}

/// Column-split quadrature on a deformed domain.
///
/// Each column `0 < z < 1 + delta(x)` is cut at the given physical
/// breakpoints and the slab's Gauss-Legendre rule is mapped onto every
/// piece. Cutting at the kinks of piecewise-smooth integrands keeps the rule
/// spectrally accurate, and it stays consistent under time differentiation
/// because the breakpoints do not move.
#[derive(Clone, Debug)]
pub struct DomainQuadrature {
    pub columns: Vec<ColumnGeometry>,
    pub column_weight: f64,
    pub nodes: Vec<QuadNode>,
}

impl DomainQuadrature {
    pub fn new(grid: &ReferenceSlab, map: &DeformationMap, breakpoints: &[f64]) -> Self {
        let columns: Vec<ColumnGeometry> = grid.x_nodes.iter().map(|&x| map.column(x)).collect();
        let mut nodes = Vec::with_capacity(columns.len() * grid.nz() * (breakpoints.len() + 1));
        for (c, col) in columns.iter().enumerate() {
            let mut lo = 0.0;
            let cuts = breakpoints
                .iter()
                .copied()
                .filter(|&b| b > 0.0 && b < col.height)
                .chain(std::iter::once(col.height));
            for hi in cuts {
                let len = hi - lo;
                // only the top piece moves with the boundary
                let moving = hi == col.height;
                for (&zn, &zw) in grid.z_nodes.iter().zip(&grid.z_weights) {
                    let z = lo + len * zn;
                    let (speed, weight_rate) = if moving {
                        (col.rate * zn, col.rate / len)
                    } else {
                        (0.0, 0.0)
                    };
                    nodes.push(QuadNode {
                        column: c,
                        x: col.x,
                        z_ref: z / col.height,
                        z,
                        weight: grid.x_weights[c] * len * zw,
                        speed,
                        weight_rate,
                    });
                }
                lo = hi;
            }
        }
        Self {
            columns,
            column_weight: 1.0 / grid.nx() as f64,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(&QuadNode) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n)).sum()
    }
}

/// A (possibly time-dependent) prescribed boundary displacement.
pub trait Geometry {
    fn period(&self) -> f64;
    /// `(delta(t), d delta / dt (t))`.
    fn at(&self, t: f64) -> (PlateProfile, PlateProfile);

    fn map_at(&self, t: f64, kappa: f64) -> Result<DeformationMap> {
        let (d, r) = self.at(t);
        DeformationMap::new(d, r, kappa)
    }
}

/// Boundary displacement sampled on the uniform grid `t_i = i T / Nt`,
/// `i = 0..=Nt`, with rate samples; evaluated in between by cubic Hermite
/// interpolation of the profile coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryTrajectory {
    pub period: f64,
    pub profiles: Vec<PlateProfile>,
    pub rates: Vec<PlateProfile>,
}

impl GeometryTrajectory {
    pub fn new(period: f64, profiles: Vec<PlateProfile>, rates: Vec<PlateProfile>) -> Result<Self> {
        if profiles.len() != rates.len() || profiles.len() < 2 {
            return Err(Error::DimensionMismatch {
                context: "GeometryTrajectory",
                expected: profiles.len().max(2),
                found: rates.len(),
            });
        }
        let k = profiles
            .iter()
            .chain(&rates)
            .map(PlateProfile::k_max)
            .max()
            .unwrap_or(0);
        let profiles = profiles.iter().map(|p| p.resized(k)).collect();
        let rates = rates.iter().map(|p| p.resized(k)).collect();
        Ok(Self {
            period,
            profiles,
            rates,
        })
    }

    /// Flat, static geometry.
    pub fn flat(period: f64, nt: usize) -> Self {
        Self {
            period,
            profiles: vec![PlateProfile::zero(0); nt + 1],
            rates: vec![PlateProfile::zero(0); nt + 1],
        }
    }

    /// Sample `f(t) -> (delta, delta_t)` on the grid.
    pub fn sample(period: f64, nt: usize, f: impl Fn(f64) -> (PlateProfile, PlateProfile)) -> Result<Self> {
        let (profiles, rates) = (0..=nt)
            .map(|i| f(period * i as f64 / nt as f64))
            .unzip();
        Self::new(period, profiles, rates)
    }

    pub fn nt(&self) -> usize {
        self.profiles.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.period / self.nt() as f64
    }

    pub fn k_max(&self) -> usize {
        self.profiles[0].k_max()
    }

    /// Largest `sup_x |delta|` over the samples.
    pub fn sup_norm(&self) -> f64 {
        self.profiles
            .iter()
            .map(PlateProfile::sup_norm)
            .fold(0.0, f64::max)
    }
}

impl Geometry for GeometryTrajectory {
    fn period(&self) -> f64 {
        self.period
    }

    fn at(&self, t: f64) -> (PlateProfile, PlateProfile) {
        let (i, s) = locate(t, self.dt(), self.nt());
        let (wv, wd) = hermite_weights(s, self.dt());
        let (p0, p1) = (&self.profiles[i], &self.profiles[i + 1]);
        let (r0, r1) = (&self.rates[i], &self.rates[i + 1]);
        let combine = |w: &[f64; 4]| {
            let mut out = p0.scaled(w[0]);
            out = out.axpy(w[1], r0);
            out = out.axpy(w[2], p1);
            out.axpy(w[3], r1)
        };
        (combine(&wv), combine(&wd))
    }
}

/// Space-time scalar field with a known time derivative.
pub trait SpaceTimeField {
    fn value(&self, t: f64, x: f64, z: f64) -> f64;
    fn time_derivative(&self, t: f64, x: f64, z: f64) -> f64;
}

/// `SpaceTimeField` from a pair of closures.
pub struct AnalyticField<F, G> {
    pub value: F,
    pub time_derivative: G,
}

impl<F, G> SpaceTimeField for AnalyticField<F, G>
where
    F: Fn(f64, f64, f64) -> f64,
    G: Fn(f64, f64, f64) -> f64,
{
    fn value(&self, t: f64, x: f64, z: f64) -> f64 {
        (self.value)(t, x, z)
    }

    fn time_derivative(&self, t: f64, x: f64, z: f64) -> f64 {
        (self.time_derivative)(t, x, z)
    }
}

fn moving_integral(
    grid: &ReferenceSlab,
    map: &DeformationMap,
    f: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let samples: Vec<f64> = grid
        .nodes()
        .map(|(x, z)| {
            let (xp, zp) = push_forward_point(map, x, z);
            f(xp, zp)
        })
        .collect();
    integrate_moving_domain(map, grid, &samples)
}

/// Both sides of Reynolds' transport theorem for `t -> int_{Omega(t)} g`:
/// a central difference of the integral, and
/// `int partial_t g + int_top g delta_t dx`.
pub fn reynolds_transport_check(
    path: &impl Geometry,
    g: &impl SpaceTimeField,
    t: f64,
    dt: f64,
    grid: &ReferenceSlab,
    kappa: f64,
) -> Result<(f64, f64)> {
    let integral = |s: f64| -> Result<f64> {
        let map = path.map_at(s, kappa)?;
        moving_integral(grid, &map, |x, z| g.value(s, x, z))
    };
    let lhs = (integral(t + dt)? - integral(t - dt)?) / (2.0 * dt);

    let map = path.map_at(t, kappa)?;
    let bulk = moving_integral(grid, &map, |x, z| g.time_derivative(t, x, z))?;
    let flux: f64 = grid
        .x_nodes
        .iter()
        .zip(&grid.x_weights)
        .map(|(&x, &w)| {
            let col = map.column(x);
            w * g.value(t, x, col.height) * col.rate
        })
        .sum();
    Ok((lhs, bulk + flux))
}
