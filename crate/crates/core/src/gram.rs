//! Pairwise squared distances and Gaussian Gram matrices between batches.
//!
//! Batches are matrices whose rows are samples. Distances are divided by the
//! sample dimension d, and computed as ‖a‖² + ‖b‖² − 2⟨a, b⟩ so that the only
//! O(N·K·d) step is a single matrix product.

use crate::{Error, Mat, Result};

/// N×K matrix of ‖X_i − X'_j‖² / d.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: Mat,
    pub d: usize,
}

impl DistanceMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }
}

/// Stabilized Gaussian Gram matrix exp(−M / 2v).
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Mat,
    pub variance: f64,
    pub stabilized: bool,
}

/// Row-wise squared norms as a column vector.
pub fn row_sq_norms(x: &Mat) -> Vec<f64> {
    (0..x.nrows()).map(|i| x.row(i).norm_squared()).collect()
}

pub fn pairwise_sq_dists(x: &Mat, xp: &Mat) -> Result<DistanceMatrix> {
    if x.nrows() == 0 || xp.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::EmptyBatch);
    }
    if x.ncols() != xp.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: xp.ncols(),
        });
    }
    let d = x.ncols();
    let b = row_sq_norms(x);
    let c = row_sq_norms(xp);
    let a = x * xp.transpose();
    let inv_d = 1.0 / d as f64;
    let values = Mat::from_fn(x.nrows(), xp.nrows(), |i, j| {
        ((b[i] + c[j] - 2.0 * a[(i, j)]) * inv_d).max(0.0)
    });
    Ok(DistanceMatrix { values, d })
}

pub fn gauss_gram(m: &DistanceMatrix, v: f64) -> Result<GramMatrix> {
    if !(v > 0.0) {
        return Err(Error::NonPositiveVariance(v));
    }
    let s = -0.5 / v;
    Ok(GramMatrix {
        values: m.values.map(|x| (s * x).exp()),
        variance: v,
        stabilized: true,
    })
}

/// exp(−M_X/2v_X − M_Y/2v_Y), the Gram matrix of the joint.
pub fn joint_gram(
    mx: &DistanceMatrix,
    vx: f64,
    my: &DistanceMatrix,
    vy: f64,
) -> Result<GramMatrix> {
    if mx.values.shape() != my.values.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            mx.values.shape(),
            my.values.shape()
        )));
    }
    for v in [vx, vy] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance(v));
        }
    }
    let (sx, sy) = (-0.5 / vx, -0.5 / vy);
    Ok(GramMatrix {
        values: mx
            .values
            .zip_map(&my.values, |a, b| (sx * a + sy * b).exp()),
        variance: vx,
        stabilized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let x = Mat::from_row_slice(1, 2, &[0.0, 0.0]);
        let y = Mat::from_row_slice(1, 2, &[2.0, 0.0]);
        let m = pairwise_sq_dists(&x, &y).unwrap();
        assert_eq!(m.values[(0, 0)], 2.0);
        let g = gauss_gram(&m, 1.0).unwrap();
        assert!((g.values[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        let z = DistanceMatrix {
            values: Mat::zeros(1, 1),
            d: 1,
        };
        assert!(
            (joint_gram(&m, 1.0, &z, 0.3).unwrap().values[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15
        );
        assert_eq!(pairwise_sq_dists(&x, &x).unwrap().values[(0, 0)], 0.0);
    }

    #[test]
    fn errors() {
        let x = Mat::zeros(2, 3);
        let y = Mat::zeros(2, 2);
        assert!(pairwise_sq_dists(&x, &y).is_err());
        assert_eq!(
            pairwise_sq_dists(&Mat::zeros(0, 3), &x),
            Err(Error::EmptyBatch)
        );
        let m = pairwise_sq_dists(&x, &x).unwrap();
        assert!(gauss_gram(&m, 0.0).is_err());
        let m2 = pairwise_sq_dists(&x, &Mat::zeros(3, 3)).unwrap();
        assert!(joint_gram(&m, 1.0, &m2, 1.0).is_err());
    }
}
