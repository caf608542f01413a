#![allow(dead_code)]

use qlm_core::linalg::wdot;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random polynomial of degree `degree` in `p / scale`, coefficients uniform in [-1, 1].
pub fn smooth_field(p: &[[f64; 3]], scale: f64, degree: u32, rng: &mut impl Rng) -> Vec<f64> {
    let mut terms = Vec::new();
    for a in 0..=degree {
        for b in 0..=(degree - a) {
            for c in 0..=(degree - a - b) {
                if a + b + c > 0 {
                    terms.push(([a, b, c], rng.random_range(-1.0..1.0)));
                }
            }
        }
    }
    p.iter()
        .map(|q| {
            let (x, y, z) = (q[0] / scale, q[1] / scale, q[2] / scale);
            terms
                .iter()
                .map(|([a, b, c], w)| w * x.powi(*a as i32) * y.powi(*b as i32) * z.powi(*c as i32))
                .sum()
        })
        .collect()
}

pub fn with_max(mut v: Vec<f64>, amp: f64) -> Vec<f64> {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter_mut().for_each(|x| *x *= amp / m);
    v
}

pub fn mean_zero(mut v: Vec<f64>, mass: &[f64]) -> Vec<f64> {
    let mean = wdot(mass, &v, &vec![1.0; v.len()]) / mass.iter().sum::<f64>();
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

pub fn l2_normalized(mut v: Vec<f64>, mass: &[f64]) -> Vec<f64> {
    let n = wdot(mass, &v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// `z/r`: a degree-1 spherical harmonic.
pub fn harmonic1(p: &[[f64; 3]]) -> Vec<f64> {
    p.iter().map(|q| q[2] / norm(q)).collect()
}

/// `xy/r²`: a degree-2 spherical harmonic.
pub fn harmonic2(p: &[[f64; 3]]) -> Vec<f64> {
    p.iter().map(|q| q[0] * q[1] / (norm(q) * norm(q))).collect()
}

pub fn norm(q: &[f64; 3]) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Edge values `2 (x_a - x_b)·(w_a - w_b)` of the metric change induced by moving `x` along `w`.
pub fn pullback_form(mesh: &qlm_core::TriMesh, x: &[[f64; 3]], w: &[[f64; 3]]) -> Vec<f64> {
    mesh.edges()
        .iter()
        .map(|&[a, b]| 2.0 * (0..3).map(|k| (x[a][k] - x[b][k]) * (w[a][k] - w[b][k])).sum::<f64>())
        .collect()
}
