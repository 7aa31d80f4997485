//! Thin SVD by one-sided Jacobi rotations.
//!
//! Columns of a working copy of A are orthogonalised pairwise until every
//! pair is orthogonal to working precision; the column norms are then the
//! singular values. Accurate to high relative precision and fully
//! deterministic, which matters more here than raw speed.

use crate::{Error, Mat, Result};

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// m×r, orthonormal columns.
    pub u: Mat,
    /// r singular values, descending.
    pub s: Vec<f64>,
    /// n×r, orthonormal columns.
    pub v: Mat,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Mat {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

const MAX_SWEEPS: usize = 80;

pub fn svd(a: &Mat) -> Result<SvdResult> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::EmptyBatch);
    }
    if a.nrows() < a.ncols() {
        let t = svd(&a.transpose())?;
        let (mut u, mut v) = (t.v, t.u);
        fix_signs(&mut u, &mut v);
        return Ok(SvdResult { u, s: t.s, v });
    }
    let r = jacobi(a)?;
    Ok(finish(r.u, r.s, r.v))
}

/// Requires m ≥ n.
fn jacobi(a: &Mat) -> Result<SvdResult> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut w = a.clone();
    let mut v = Mat::identity(n, n);
    let eps = f64::EPSILON;
    let mut converged = n == 1;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = w.column(p);
                    let cq = w.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s, m);
                rotate(&mut v, p, q, c, s, n);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence(MAX_SWEEPS));
    }
    let s: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    Ok(SvdResult { u: w, s, v })
}

#[inline]
fn rotate(m: &mut Mat, p: usize, q: usize, c: f64, s: f64, rows: usize) {
    for i in 0..rows {
        let xp = m[(i, p)];
        let xq = m[(i, q)];
        m[(i, p)] = c * xp - s * xq;
        m[(i, q)] = s * xp + c * xq;
    }
}

/// Sorts, normalises U, completes U for zero singular values, fixes signs.
fn finish(w: Mat, s: Vec<f64>, v: Mat) -> SvdResult {
    let n = s.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let m = w.nrows();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let tiny = smax * (m.max(n) as f64) * f64::EPSILON;
    let mut u = Mat::zeros(m, n);
    let mut vv = Mat::zeros(v.nrows(), n);
    let mut ss = vec![0.0; n];
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        ss[k] = s[j];
        vv.set_column(k, &v.column(j));
        if s[j] > tiny && s[j] > 0.0 {
            u.set_column(k, &(w.column(j) / s[j]));
        } else {
            deficient.push(k);
        }
    }
    // Complete the basis for (numerically) zero singular values.
    for &k in &deficient {
        let mut best: Option<nalgebra::DVector<f64>> = None;
        for e in 0..m {
            let mut cand = nalgebra::DVector::<f64>::zeros(m);
            cand[e] = 1.0;
            for _ in 0..2 {
                for c in 0..n {
                    if c == k {
                        continue;
                    }
                    let col = u.column(c);
                    let proj = col.dot(&cand);
                    cand -= col * proj;
                }
            }
            let nrm = cand.norm();
            if nrm > 0.5 {
                best = Some(cand / nrm);
                break;
            }
        }
        if let Some(b) = best {
            u.set_column(k, &b);
        }
    }
    fix_signs(&mut u, &mut vv);
    SvdResult { u, s: ss, v: vv }
}

/// Makes the largest-magnitude entry of every left vector positive.
fn fix_signs(u: &mut Mat, v: &mut Mat) {
    for k in 0..u.ncols() {
        let col = u.column(k);
        let mut idx = 0;
        let mut big: f64 = -1.0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > big + 1e-12 * big.abs() {
                big = x.abs();
                idx = i;
            }
        }
        if u[(idx, k)] < 0.0 {
            u.column_mut(k).neg_mut();
            v.column_mut(k).neg_mut();
        }
    }
}
