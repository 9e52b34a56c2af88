//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qdrisk::mixture::{Component, CovStructure, GaussianMixture};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adapt(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` to absolute `tol`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&mut f, a, b, tol, 40)
}

/// Nested quadrature over a rectangle.
pub fn integrate_2d(
    mut f: impl FnMut(f64, f64) -> f64,
    (ax, bx): (f64, f64),
    (ay, by): (f64, f64),
    tol: f64,
) -> f64 {
    let inner_tol = tol / (by - ay).abs().max(1.0) * 0.1;
    integrate(
        |y| integrate(|x| f(x, y), ax, bx, inner_tol),
        ay,
        by,
        tol,
    )
}

/// Box covering essentially all mass of a mixture convolved with `N(0, h²I)`.
pub fn support(mix: &GaussianMixture, h: f64, coord: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in mix.components() {
        let sd = (c.cov[(coord, coord)] + h * h).sqrt();
        lo = lo.min(c.mean[coord] - 12.0 * sd);
        hi = hi.max(c.mean[coord] + 12.0 * sd);
    }
    (lo, hi)
}

pub fn normal_density_1d(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// A random valid mixture: weights bounded away from zero, covariances
/// well conditioned.
pub fn random_mixture(rng: &mut ChaCha8Rng, k: usize, d: usize, s: CovStructure) -> GaussianMixture {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .iter()
        .map(|w| {
            let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let cov = match s {
                CovStructure::Spherical => DMatrix::identity(d, d) * rng.random_range(0.3..2.0),
                CovStructure::Diagonal => {
                    DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.3..2.0)))
                }
                CovStructure::Full => {
                    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.8..0.8));
                    &a * a.transpose() + DMatrix::identity(d, d) * 0.3
                }
            };
            Component {
                weight: w / total,
                mean,
                cov,
            }
        })
        .collect();
    GaussianMixture::new(s, comps).unwrap()
}

/// Central finite differences of `log f(x)` in the free parameterization.
pub fn fd_score(mix: &GaussianMixture, x: &[f64], step: f64) -> Vec<f64> {
    let theta = mix.free_parameters();
    let eval = |t: &[f64]| {
        GaussianMixture::from_free_parameters(mix.structure(), mix.k(), mix.dim(), t)
            .unwrap()
            .log_density(x)
            .unwrap()
    };
    (0..theta.len())
        .map(|i| {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += step;
            dn[i] -= step;
            (eval(&up) - eval(&dn)) / (2.0 * step)
        })
        .collect()
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
