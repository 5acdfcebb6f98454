//! Interleaved Galerkin basis.
//!
//! Even (0-based) entries pair an orthonormal plate mode `Y` with its
//! divergence-free extension into the channel; odd entries are stream-function
//! fluid modes with zero trace on both walls, pushed onto the deformed domain
//! by the Piola transform.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::geometry::{ColumnGeometry, DeformationMap, DomainQuadrature, ReferenceSlab};
use crate::plate::{plate_mode, plate_mode_profile, PlateProfile};
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Velocity value and gradient, `grad[i][j] = d v_i / d x_j` with `x_0 = x`, `x_1 = z`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VelocitySample {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

impl VelocitySample {
    pub fn divergence(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }

    fn axpy(&mut self, a: f64, other: &Self) {
        for i in 0..2 {
            self.value[i] += a * other.value[i];
            for j in 0..2 {
                self.grad[i][j] += a * other.grad[i][j];
            }
        }
    }
}

/// Vertical cut-off `sigma`: zero below `(1 - kappa) / 2`, one above
/// `1 - kappa`, quintic smoothstep in between (C^2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionProfile {
    lower: f64,
    upper: f64,
}

impl ExtensionProfile {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::config("kappa", format!("must lie in (0, 1), got {kappa}")));
        }
        Ok(Self {
            lower: 0.5 * (1.0 - kappa),
            upper: 1.0 - kappa,
        })
    }

    /// Heights where `sigma` stops being a single polynomial.
    pub fn breakpoints(&self) -> [f64; 2] {
        [self.lower, self.upper]
    }

    /// `(sigma, sigma', sigma'')` at height `z`.
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        if z <= self.lower {
            return (0.0, 0.0, 0.0);
        }
        if z >= self.upper {
            return (1.0, 0.0, 0.0);
        }
        let h = self.upper - self.lower;
        let t = (z - self.lower) / h;
        let u = 1.0 - t;
        let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        let ds = 30.0 * t * t * u * u / h;
        let dds = 60.0 * t * u * (1.0 - 2.0 * t) / (h * h);
        (s, ds, dds)
    }
}

/// `F xi = (-phi sigma'(z), xi sigma(z))` with `phi' = xi`, `int phi = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtensionField {
    xi: PlateProfile,
    phi: PlateProfile,
    profile: ExtensionProfile,
}

pub fn extend_divergence_free(xi: &PlateProfile, kappa: f64) -> Result<ExtensionField> {
    let phi = xi.antiderivative()?;
    Ok(ExtensionField {
        xi: xi.clone(),
        phi,
        profile: ExtensionProfile::new(kappa)?,
    })
}

impl ExtensionField {
    pub fn profile(&self) -> &ExtensionProfile {
        &self.profile
    }

    pub fn sample(&self, x: f64, z: f64) -> VelocitySample {
        let xi = self.xi.sample(x);
        extension_sample(self.phi.value(x), xi.value, xi.d1, self.profile.eval(z))
    }
}

#[inline]
fn extension_sample(phi: f64, xi: f64, dxi: f64, (s, ds, dds): (f64, f64, f64)) -> VelocitySample {
    VelocitySample {
        value: [-phi * ds, xi * s],
        grad: [[-xi * ds, -phi * dds], [dxi * s, xi * ds]],
    }
}

/// Any velocity field on the reference slab.
pub trait ReferenceField {
    fn sample(&self, x: f64, z: f64) -> VelocitySample;
}

impl<F: Fn(f64, f64) -> VelocitySample> ReferenceField for F {
    fn sample(&self, x: f64, z: f64) -> VelocitySample {
        self(x, z)
    }
}

/// Separable stream function `e_j(x) sin^2(pi m z)` with
/// `e_0 = 1`, `e_j = sqrt2 cos(2 pi j x)` or `sqrt2 sin(2 pi j x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMode {
    pub j: usize,
    pub sine: bool,
    pub m: usize,
}

impl StreamMode {
    /// `(e, e', e'')`.
    fn horizontal(&self, x: f64) -> [f64; 3] {
        if self.j == 0 {
            return [1.0, 0.0, 0.0];
        }
        let w = TWO_PI * self.j as f64;
        let (s, c) = (w * x).sin_cos();
        if self.sine {
            [SQRT_2 * s, SQRT_2 * w * c, -SQRT_2 * w * w * s]
        } else {
            [SQRT_2 * c, -SQRT_2 * w * s, -SQRT_2 * w * w * c]
        }
    }

    /// `(s, s', s'')` for `s = sin^2(pi m z)`.
    fn vertical(&self, z: f64) -> [f64; 3] {
        vertical_profile(self.m, z)
    }

    /// Velocity `(-e s', e' s)` of the stream function.
    pub fn velocity(&self, x: f64, z: f64) -> VelocitySample {
        stream_velocity(self.horizontal(x), self.vertical(z))
    }
}

impl ReferenceField for StreamMode {
    fn sample(&self, x: f64, z: f64) -> VelocitySample {
        self.velocity(x, z)
    }
}

#[inline]
fn vertical_profile(m: usize, z: f64) -> [f64; 3] {
    let a = PI * m as f64;
    let s1 = (a * z).sin();
    let (s2, c2) = (2.0 * a * z).sin_cos();
    [s1 * s1, a * s2, 2.0 * a * a * c2]
}

#[inline]
fn stream_velocity(e: [f64; 3], s: [f64; 3]) -> VelocitySample {
    VelocitySample {
        value: [-e[0] * s[1], e[1] * s[0]],
        grad: [[-e[1] * s[1], -e[0] * s[2]], [e[2] * s[0], e[1] * s[1]]],
    }
}

/// Candidate stream modes with `j <= j_max`, `1 <= m <= m_max`, ordered by
/// total index `j + m`, then `j`, cosine before sine, then `m`.
pub fn stream_pool(j_max: usize, m_max: usize) -> Vec<StreamMode> {
    let mut pool = Vec::new();
    for j in 0..=j_max {
        for m in 1..=m_max {
            pool.push(StreamMode { j, sine: false, m });
            if j > 0 {
                pool.push(StreamMode { j, sine: true, m });
            }
        }
    }
    pool.sort_by_key(|s| (s.j + s.m, s.j, s.sine, s.m));
    pool
}

/// The first `count` pool modes orthonormalised in `L^2` of the unit slab.
///
/// Mode `r` is `sum_{q <= r} coefficients[r][q] * pool[q]`, so the basis of
/// size `count` is a prefix of the basis of any larger size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidInteriorBasis {
    modes: Vec<StreamMode>,
    coefficients: Vec<Vec<f64>>,
}

impl FluidInteriorBasis {
    pub fn new(count: usize, j_max: usize, m_max: usize) -> Result<Self> {
        let pool = stream_pool(j_max, m_max);
        if count > pool.len() {
            return Err(Error::BasisTooLarge {
                family: "fluid",
                requested: count,
                available: pool.len(),
            });
        }
        let modes = pool[..count].to_vec();
        let gram = exact_gram(&modes, j_max, m_max);
        let coefficients = orthonormalize(&gram);
        Ok(Self {
            modes,
            coefficients,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[StreamMode] {
        &self.modes
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    /// Reference velocity of orthonormal mode `r`.
    pub fn sample(&self, r: usize, x: f64, z: f64) -> VelocitySample {
        let mut out = VelocitySample::default();
        for (c, mode) in self.coefficients[r].iter().zip(&self.modes) {
            out.axpy(*c, &mode.velocity(x, z));
        }
        out
    }

    pub fn mode(&self, r: usize) -> FluidMode<'_> {
        FluidMode { basis: self, r }
    }
}

/// One orthonormal fluid mode as a reference field.
#[derive(Clone, Copy, Debug)]
pub struct FluidMode<'a> {
    basis: &'a FluidInteriorBasis,
    r: usize,
}

impl ReferenceField for FluidMode<'_> {
    fn sample(&self, x: f64, z: f64) -> VelocitySample {
        self.basis.sample(self.r, x, z)
    }
}

/// Gram matrix of stream velocities on the unit slab. All factors are
/// 1-periodic trigonometric polynomials in both variables, so equispaced
/// rules of sufficient size integrate the products exactly.
/// The rule depends only on the pool bounds, which keeps prefixes bitwise
/// identical across basis sizes.
fn exact_gram(modes: &[StreamMode], j_max: usize, m_max: usize) -> Vec<Vec<f64>> {
    let nx = 4 * (j_max + 1);
    let nz = 4 * (m_max + 1);
    let w = 1.0 / (nx * nz) as f64;
    let n = modes.len();
    let mut gram = vec![vec![0.0; n]; n];
    let mut vals = vec![[0.0; 2]; n];
    for ix in 0..nx {
        let x = ix as f64 / nx as f64;
        for iz in 0..nz {
            let z = iz as f64 / nz as f64;
            for (v, mode) in vals.iter_mut().zip(modes) {
                *v = mode.velocity(x, z).value;
            }
            for a in 0..n {
                for b in 0..=a {
                    gram[a][b] += w * (vals[a][0] * vals[b][0] + vals[a][1] * vals[b][1]);
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            gram[b][a] = gram[a][b];
        }
    }
    gram
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass, in coefficient
/// space with inner product `<c, d> = c^T G d`. Returns the lower-triangular
/// coefficient rows.
fn orthonormalize(gram: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = gram.len();
    let inner = |c: &[f64], d: &[f64]| -> f64 {
        let mut s = 0.0;
        for a in 0..c.len() {
            if c[a] == 0.0 {
                continue;
            }
            for b in 0..d.len() {
                s += c[a] * gram[a][b] * d[b];
            }
        }
        s
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for r in 0..n {
        let mut v = vec![0.0; r + 1];
        v[r] = 1.0;
        for _ in 0..2 {
            for q in &rows {
                let p = inner(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        let norm = inner(&v, &v).sqrt();
        v.iter_mut().for_each(|c| *c /= norm);
        rows.push(v);
    }
    rows
}

/// Piola image of a reference sample at reference height `z_ref` in `col`,
/// as a physical velocity with physical gradient.
#[inline]
pub fn piola_at(col: &ColumnGeometry, z_ref: f64, g: &VelocitySample) -> VelocitySample {
    let (d, d1, d2) = (col.height, col.slope, col.curvature);
    let [g1, g2] = g.value;
    let [[g1x, g1z], [g2x, g2z]] = g.grad;
    let v1 = g1 / d;
    let v2 = z_ref * d1 * g1 / d + g2;
    let v1_x = g1x / d - g1 * d1 / (d * d);
    let v1_z = g1z / d;
    let v2_x = z_ref * (d2 * g1 / d + d1 * g1x / d - d1 * d1 * g1 / (d * d)) + g2x;
    let v2_z = d1 * g1 / d + z_ref * d1 * g1z / d + g2z;
    let shear = z_ref * d1 / d;
    VelocitySample {
        value: [v1, v2],
        grad: [
            [v1_x - shear * v1_z, v1_z / d],
            [v2_x - shear * v2_z, v2_z / d],
        ],
    }
}

/// Time derivative at a fixed physical point of the Piola image, holding the
/// reference field fixed.
#[inline]
pub fn piola_rate_at(col: &ColumnGeometry, z_ref: f64, g: &VelocitySample) -> [f64; 2] {
    let (d, d1) = (col.height, col.slope);
    let (r, r1) = (col.rate, col.rate_slope);
    let [g1, _] = g.value;
    let g1z = g.grad[0][1];
    let g2z = g.grad[1][1];
    let zt = -z_ref * r / d;
    let v1 = g1z * zt / d - g1 * r / (d * d);
    let v2 = zt * d1 * g1 / d + z_ref * r1 * g1 / d + z_ref * d1 * g1z * zt / d
        - z_ref * d1 * g1 * r / (d * d)
        + g2z * zt;
    [v1, v2]
}

/// Piola transform of `g` under `psi_delta`, evaluated at the physical point `(x, z)`.
pub fn piola_transform(map: &DeformationMap, g: &impl ReferenceField, x: f64, z: f64) -> VelocitySample {
    let col = map.column(x);
    let z_ref = z / col.height;
    piola_at(&col, z_ref, &g.sample(x, z_ref))
}

/// `d/dt` of the Piola image at the physical point `(x, z)`, driven by the
/// rate stored in `map`.
pub fn piola_time_derivative(map: &DeformationMap, g: &impl ReferenceField, x: f64, z: f64) -> [f64; 2] {
    let col = map.column(x);
    let z_ref = z / col.height;
    piola_rate_at(&col, z_ref, &g.sample(x, z_ref))
}

/// Basis-field sample at one quadrature node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BasisSample {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
    /// Time derivative at the fixed physical point.
    pub rate: [f64; 2],
}

/// Configured basis: mode pools and the extension cut-off. Geometry free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalerkinBasis {
    n: usize,
    extension: ExtensionProfile,
    fluid: FluidInteriorBasis,
}

impl GalerkinBasis {
    pub fn new(n: usize, k_max: usize, j_max: usize, m_max: usize, kappa: f64) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::OddBasisSize(n));
        }
        if n / 2 > 2 * k_max {
            return Err(Error::BasisTooLarge {
                family: "plate",
                requested: n / 2,
                available: 2 * k_max,
            });
        }
        Ok(Self {
            n,
            extension: ExtensionProfile::new(kappa)?,
            fluid: FluidInteriorBasis::new(n / 2, j_max, m_max)?,
        })
    }

    /// Pools large enough that only `n` limits the basis.
    pub fn with_default_pools(n: usize, kappa: f64) -> Result<Self> {
        let half = (n / 2).max(1);
        Self::new(n, half.div_ceil(2), half, half, kappa)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn plate_count(&self) -> usize {
        self.n / 2
    }

    pub fn extension(&self) -> &ExtensionProfile {
        &self.extension
    }

    pub fn fluid(&self) -> &FluidInteriorBasis {
        &self.fluid
    }

    /// Entry `i` is a plate entry iff `i` is even.
    pub fn is_plate(i: usize) -> bool {
        i.is_multiple_of(2)
    }

    /// Largest wavenumber among the plate modes.
    pub fn plate_k_max(&self) -> usize {
        plate_mode(self.plate_count() - 1).0
    }

    /// `sum_p b_{2p} Y_p + mean`.
    pub fn plate_profile(&self, b: &[f64], mean: f64) -> PlateProfile {
        let mut eta = PlateProfile::constant(mean, self.plate_k_max());
        for p in 0..self.plate_count() {
            let (k, is_cos) = plate_mode(p);
            let c = SQRT_2 * b[2 * p];
            if is_cos {
                eta.set_cos(k, c);
            } else {
                eta.set_sin(k, c);
            }
        }
        eta
    }

    /// Plate coordinates of a mean-free profile: inverse of `plate_profile`.
    pub fn plate_coordinates(&self, eta: &PlateProfile) -> Vec<f64> {
        (0..self.plate_count())
            .map(|p| {
                let (k, is_cos) = plate_mode(p);
                let c = if is_cos { eta.cos_coeff(k) } else { eta.sin_coeff(k) };
                c / SQRT_2
            })
            .collect()
    }

    /// Extension of plate mode `p`.
    pub fn extension_field(&self, p: usize) -> ExtensionField {
        let xi = plate_mode_profile(p);
        ExtensionField {
            phi: xi.antiderivative().expect("plate modes are mean free"),
            xi,
            profile: self.extension,
        }
    }

    /// Sample the interleaved basis on `Omega_delta` for the given map.
    pub fn snapshot(&self, map: &DeformationMap, grid: &ReferenceSlab) -> Result<InterleavedBasis> {
        let sup = map.delta().sup_norm();
        let kappa = 1.0 - self.extension.upper;
        if sup >= kappa {
            return Err(Error::InadmissibleGeometry { sup, kappa });
        }
        let quadrature = DomainQuadrature::new(grid, map, &self.extension.breakpoints());
        let n = self.n;
        let np = self.plate_count();
        let nf = self.fluid.len();

        // per column: plate (phi, xi, xi') and stream horizontal factors
        let columns = &quadrature.columns;
        let plate_cols: Vec<Vec<[f64; 3]>> = columns
            .iter()
            .map(|c| (0..np).map(|p| plate_column(p, c.x)).collect())
            .collect();
        let stream_cols: Vec<Vec<[f64; 3]>> = columns
            .iter()
            .map(|c| self.fluid.modes.iter().map(|m| m.horizontal(c.x)).collect())
            .collect();
        let traces = grid
            .x_nodes()
            .iter()
            .map(|&x| (0..n).map(|i| if Self::is_plate(i) { plate_column(i / 2, x)[1] } else { 0.0 }).collect())
            .collect();

        let mut samples = Vec::with_capacity(quadrature.len() * n);
        let mut raw = vec![VelocitySample::default(); nf];
        for node in &quadrature.nodes {
            let col = &columns[node.column];
            let sig = self.extension.eval(node.z);
            for (q, (r, mode)) in raw.iter_mut().zip(&self.fluid.modes).enumerate() {
                let vert = vertical_profile(mode.m, node.z_ref);
                *r = stream_velocity(stream_cols[node.column][q], vert);
            }
            for i in 0..n {
                if Self::is_plate(i) {
                    let [phi, xi, dxi] = plate_cols[node.column][i / 2];
                    let v = extension_sample(phi, xi, dxi, sig);
                    samples.push(BasisSample {
                        value: v.value,
                        grad: v.grad,
                        rate: [0.0; 2],
                    });
                } else {
                    let r = i / 2;
                    let mut g = VelocitySample::default();
                    for (c, q) in self.fluid.coefficients[r].iter().zip(&raw) {
                        g.axpy(*c, q);
                    }
                    let v = piola_at(col, node.z_ref, &g);
                    samples.push(BasisSample {
                        value: v.value,
                        grad: v.grad,
                        rate: piola_rate_at(col, node.z_ref, &g),
                    });
                }
            }
        }
        Ok(InterleavedBasis {
            n,
            quadrature,
            samples,
            traces,
            x_weights: grid.x_weights().to_vec(),
        })
    }
}

/// `(phi, xi, xi')` of plate mode `p` at `x`.
#[inline]
fn plate_column(p: usize, x: f64) -> [f64; 3] {
    let (k, is_cos) = plate_mode(p);
    let w = TWO_PI * k as f64;
    let (s, c) = (w * x).sin_cos();
    if is_cos {
        [SQRT_2 * s / w, SQRT_2 * c, -SQRT_2 * w * s]
    } else {
        [-SQRT_2 * c / w, SQRT_2 * s, SQRT_2 * w * c]
    }
}

/// The interleaved basis sampled on the split quadrature of one deformed domain.
#[derive(Clone, Debug)]
pub struct InterleavedBasis {
    n: usize,
    pub quadrature: DomainQuadrature,
    /// Node-major: `samples[node * n + entry]`.
    samples: Vec<BasisSample>,
    /// `traces[x_node][entry]`: plate part at the slab x-nodes.
    pub traces: Vec<Vec<f64>>,
    pub x_weights: Vec<f64>,
}

impl InterleavedBasis {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// All entries at quadrature node `k`.
    #[inline]
    pub fn at_node(&self, k: usize) -> &[BasisSample] {
        &self.samples[k * self.n..(k + 1) * self.n]
    }

    pub fn entry(&self, i: usize, node: usize) -> &BasisSample {
        &self.samples[node * self.n + i]
    }

    /// Velocity `sum_j beta_j X_j` and its gradient at node `k`.
    pub fn velocity(&self, k: usize, beta: &[f64]) -> VelocitySample {
        let mut u = VelocitySample::default();
        for (b, s) in beta.iter().zip(self.at_node(k)) {
            if *b == 0.0 {
                continue;
            }
            for i in 0..2 {
                u.value[i] += b * s.value[i];
                for j in 0..2 {
                    u.grad[i][j] += b * s.grad[i][j];
                }
            }
        }
        u
    }
}

/// `int v . grad chi - int_top chi v . (-delta', 1) + int_bottom chi v_2`,
/// zero for weakly divergence-free `v` with the usual boundary terms.
pub fn weak_divergence_defect(
    basis: &InterleavedBasis,
    entry: usize,
    chi: impl Fn(f64, f64) -> (f64, f64, f64),
) -> f64 {
    let q = &basis.quadrature;
    let bulk: f64 = q
        .nodes
        .iter()
        .enumerate()
        .map(|(k, node)| {
            let (_, cx, cz) = chi(node.x, node.z);
            let v = basis.entry(entry, k).value;
            node.weight * (v[0] * cx + v[1] * cz)
        })
        .sum();
    // quadrature nodes are interior, so the wall values come from the
    // closed-form traces; both families vanish on the bottom
    let mut boundary = 0.0;
    for (c, col) in q.columns.iter().enumerate() {
        let w = basis.x_weights[c];
        let (chi_top, _, _) = chi(col.x, col.height);
        boundary += w * chi_top * basis.traces[c][entry];
    }
    bulk - boundary
}
