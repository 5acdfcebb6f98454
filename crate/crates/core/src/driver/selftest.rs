//! Randomized invariant suite behind the `selftest` mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{skew_symmetry_defect, ForcingSpec, Problem};
use crate::basis::{extend_divergence_free, piola_transform, GalerkinBasis, ReferenceField, VelocitySample};
use crate::fixed_point::{periodize, PeriodizationParams};
use crate::geometry::{DeformationMap, ReferenceSlab};
use crate::plate::{KoiterModel, PlateProfile};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    /// Worst observed value.
    pub value: f64,
    pub limit: f64,
}

impl SelfCheck {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= limit,
            value,
            limit,
        }
    }
}

/// Mean-free profile with coefficients uniform in `[-a, a]`, rescaled so
/// that its sup norm is at most `sup` when given.
pub fn random_profile(rng: &mut impl Rng, k_max: usize, a: f64, sup: Option<f64>) -> PlateProfile {
    let mut p = PlateProfile::zero(k_max);
    for k in 1..=k_max {
        p.set_cos(k, rng.gen_range(-a..=a));
        p.set_sin(k, rng.gen_range(-a..=a));
    }
    match sup {
        Some(s) => {
            let norm = p.sup_norm();
            if norm > s {
                p.scaled(s / norm)
            } else {
                p
            }
        }
        None => p,
    }
}

fn problem(n: usize, kappa: f64) -> Result<Problem> {
    Ok(Problem {
        grid: ReferenceSlab::new(32, 16)?,
        basis: GalerkinBasis::with_default_pools(n, kappa)?,
        kappa,
        mean: 0.0,
        koiter: KoiterModel::default(),
        forcing: ForcingSpec::none(),
        period: 1.0,
    })
}

fn koiter_checks(rng: &mut ChaCha8Rng) -> Vec<SelfCheck> {
    let grid = ReferenceSlab::new(32, 8).expect("fixed sizes");
    let model = KoiterModel::default();
    let h = 1e-5;
    let (mut worst_rel, mut worst_gap) = (0.0_f64, f64::INFINITY);
    for _ in 0..20 {
        let k = rng.gen_range(1..=8);
        let eta = random_profile(rng, k, 0.3, Some(0.3));
        let xi = random_profile(rng, k, 1.0, None);
        let fd = (model.energy(&(&eta + &(&xi * h)), &grid) - model.energy(&(&eta - &(&xi * h)), &grid)) / (2.0 * h);
        let exact = model.directional(&eta, &xi, &grid);
        worst_rel = worst_rel.max((fd - exact).abs() / exact.abs().max(1e-300));
        worst_gap = worst_gap.min(model.coercivity_gap(&eta, &grid));
    }
    vec![
        SelfCheck::at_most("koiter_gradient", worst_rel, 1e-6),
        SelfCheck::at_least("coercivity_gap", worst_gap, -1e-12),
    ]
}

fn extension_check(rng: &mut ChaCha8Rng) -> Result<Vec<SelfCheck>> {
    let kappa = 0.5;
    let p = problem(8, kappa)?;
    let (mut div, mut trace) = (0.0_f64, 0.0_f64);
    for _ in 0..10 {
        let xi = random_profile(rng, 4, 1.0, None);
        let delta = random_profile(rng, 3, 0.2, Some(0.49));
        let map = DeformationMap::fixed(delta.clone(), kappa)?;
        let field = extend_divergence_free(&xi, kappa)?;
        let snap = p.snapshot(&map)?;
        for node in &snap.quadrature.nodes {
            div = div.max(field.sample(node.x, node.z).divergence().abs());
        }
        for &x in p.grid.x_nodes() {
            let u = field.sample(x, 1.0 + delta.value(x));
            trace = trace.max(u.value[0].abs().max((u.value[1] - xi.value(x)).abs()));
        }
    }
    Ok(vec![
        SelfCheck::at_most("extension_divergence", div, 1e-12),
        SelfCheck::at_most("extension_trace", trace, 1e-12),
    ])
}

fn piola_identity_check(rng: &mut ChaCha8Rng) -> SelfCheck {
    let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let w = 2.0 * std::f64::consts::PI;
    let g = move |x: f64, z: f64| VelocitySample {
        value: [a * z * (1.0 - z), b * (w * x).sin()],
        grad: [[0.0, a * (1.0 - 2.0 * z)], [b * w * (w * x).cos(), 0.0]],
    };
    let map = DeformationMap::identity();
    let mut worst = 0.0_f64;
    for i in 0..16 {
        for j in 1..8 {
            let (x, z) = (i as f64 / 16.0, j as f64 / 8.0);
            let (p, q) = (piola_transform(&map, &g, x, z), g.sample(x, z));
            worst = worst.max((p.value[0] - q.value[0]).abs()).max((p.value[1] - q.value[1]).abs());
        }
    }
    SelfCheck::at_most("piola_identity", worst, 1e-15)
}

fn mass_and_skew_checks(rng: &mut ChaCha8Rng) -> Result<Vec<SelfCheck>> {
    let kappa = 0.5;
    let p = problem(8, kappa)?;
    let (mut asym, mut min_eig, mut conv, mut skew) = (0.0_f64, f64::INFINITY, 0.0_f64, 0.0_f64);
    for _ in 0..5 {
        let delta = random_profile(rng, 3, 0.2, Some(0.24));
        let rate = random_profile(rng, 3, 0.5, None);
        let map = DeformationMap::new(delta, rate, kappa)?;
        let sys = p.assemble(&map, 0.0)?;
        asym = asym.max((&sys.mass - sys.mass.transpose()).amax());
        min_eig = min_eig.min(sys.mass.clone().symmetric_eigenvalues().min());
        let beta: Vec<f64> = (0..p.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = sys.convective(&beta);
        conv = conv.max(c.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().abs());
        skew = skew.max(skew_symmetry_defect(&p, &map, &beta)?.abs());
    }
    Ok(vec![
        SelfCheck::at_most("mass_symmetry", asym, 1e-13),
        SelfCheck::at_least("mass_min_eigenvalue", min_eig, f64::MIN_POSITIVE),
        SelfCheck::at_most("convective_energy", conv, 1e-12),
        SelfCheck::at_most("skew_defect", skew, 1e-9),
    ])
}

fn periodization_check(rng: &mut ChaCha8Rng) -> Result<Vec<SelfCheck>> {
    let nt = 64;
    let params = PeriodizationParams { cells: 4 };
    let samples: Vec<f64> = (0..=nt).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let once = periodize(&samples, params)?;
    let twice = periodize(&once, params)?;
    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let endpoint = if once[nt].to_bits() == once[0].to_bits() { 0.0 } else { 1.0 };
    let idempotent = if once == twice { 0.0 } else { 1.0 };
    Ok(vec![
        SelfCheck::at_most("periodize_endpoint", endpoint, 0.0),
        SelfCheck::at_most("periodize_sup", sup(&once) - sup(&samples), 0.0),
        SelfCheck::at_most("periodize_idempotent", idempotent, 0.0),
    ])
}

/// Run every check with a generator seeded by `seed`.
pub fn run_selftest(seed: u64) -> Result<Vec<SelfCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = koiter_checks(&mut rng);
    out.extend(extension_check(&mut rng)?);
    out.push(piola_identity_check(&mut rng));
    out.extend(mass_and_skew_checks(&mut rng)?);
    out.extend(periodization_check(&mut rng)?);
    Ok(out)
}
