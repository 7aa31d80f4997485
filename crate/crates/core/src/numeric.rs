//! Small numeric helpers shared by several modules.

use std::f64::consts::PI;

/// Pairwise (tree) summation. The reduction order depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 16;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sum that does not depend on the order of the inputs: values are sorted
/// first, then reduced pairwise.
pub fn symmetric_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    pairwise_sum(&xs)
}

/// One-dimensional normal density N(x; v).
#[inline]
pub fn normal_1d(x: f64, v: f64) -> f64 {
    (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

/// Normalising constant (2πv)^(-d/2) of an isotropic Gaussian.
#[inline]
pub fn gauss_const(v: f64, d: usize) -> f64 {
    (2.0 * PI * v).powf(-(d as f64) / 2.0)
}
