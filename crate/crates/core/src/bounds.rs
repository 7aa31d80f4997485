//! Sample estimators for the conditional bound, the matching cost and
//! mutual information.
//!
//! The joint density is modelled as p(X, Y) = (1/N) Σ_n N(X − X_n; v_X) N(Y − Y_n; v_Y).
//! Integrals against it are estimated with noisy copies X̂_n = X_n + √v_X z_n
//! and Ŷ_n = Y_n + √v_Y s_n. Ratios of sums are evaluated with a per-row
//! shift of the exponent, which cancels exactly and keeps the sums away from
//! underflow.

use crate::gram::pairwise_sq_dists;
use crate::linalg_ad::{svd, Tensor};
use crate::nn::randn;
use crate::numeric::{gauss_const, pairwise_sum};
use crate::{Error, Mat, Result};
use rand::Rng;

/// Data, features and their noisy copies.
#[derive(Debug, Clone)]
pub struct NoisySamplePair {
    pub x: Mat,
    pub y: Mat,
    pub x_hat: Mat,
    pub y_hat: Mat,
    pub v_x: f64,
    pub v_y: f64,
}

impl NoisySamplePair {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

pub fn make_noisy_pairs<R: Rng + ?Sized>(
    x: &Mat,
    y: &Mat,
    v_x: f64,
    v_y: f64,
    rng: &mut R,
) -> Result<NoisySamplePair> {
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples but {} features",
            x.nrows(),
            y.nrows()
        )));
    }
    if !(v_x >= 0.0) || !(v_y >= 0.0) {
        return Err(Error::NonPositiveVariance(v_x.min(v_y)));
    }
    let x_hat = x + randn(x.nrows(), x.ncols(), rng) * v_x.sqrt();
    let y_hat = y + randn(y.nrows(), y.ncols(), rng) * v_y.sqrt();
    Ok(NoisySamplePair {
        x: x.clone(),
        y: y.clone(),
        x_hat,
        y_hat,
        v_x,
        v_y,
    })
}

/// One row of learning-curve output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub iteration: usize,
    pub cost: f64,
    pub bound: f64,
    pub inner: f64,
    pub q_norm: f64,
    pub p_cond_norm: f64,
    pub shannon_mi: Option<f64>,
    pub renyi_mi: Option<f64>,
}

/// Which family of estimators applies to data of a given dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    /// True-density estimators.
    LowDim,
    /// Relative cost/bound with constants cancelled.
    HighDim,
}

impl BoundMode {
    pub const HIGH_DIM_THRESHOLD: usize = 50;

    pub fn for_dim(d: usize) -> Self {
        if d >= Self::HIGH_DIM_THRESHOLD {
            BoundMode::HighDim
        } else {
            BoundMode::LowDim
        }
    }
}

const BLOCK: usize = 256;

/// Squared distances (not divided by d) between a block of rows and a batch.
fn raw_sq(a: &Mat, b: &Mat) -> Result<Mat> {
    let d = a.ncols() as f64;
    Ok(pairwise_sq_dists(a, b)?.values * d)
}

/// exp(−(D − min_row D) / 2v) for a block of raw squared distances.
fn shifted_kernel(mut d2: Mat, v: f64) -> Mat {
    for i in 0..d2.nrows() {
        let lo = d2.row(i).min();
        for j in 0..d2.ncols() {
            d2[(i, j)] = (-(d2[(i, j)] - lo) / (2.0 * v)).exp();
        }
    }
    d2
}

fn check_pairs(p: &NoisySamplePair) -> Result<()> {
    if p.n() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    if !(p.v_x > 0.0) || !(p.v_y > 0.0) {
        return Err(Error::NonPositiveVariance(p.v_x.min(p.v_y)));
    }
    Ok(())
}

/// ‖p(X|Y)‖²_{p(Y)} ≈ (1/N) Σ_m [Σ_n N(X̂_m − X_n; v_X) N(Ŷ_m − Y_n; v_Y)] / [Σ_n N(Ŷ_m − Y_n; v_Y)].
pub fn estimate_p_cond_norm(p: &NoisySamplePair) -> Result<f64> {
    check_pairs(p)?;
    let n = p.n();
    let dx = p.x.ncols();
    let cx = gauss_const(p.v_x, dx);
    let mut per_row = Vec::with_capacity(n);
    for start in (0..n).step_by(BLOCK) {
        let len = BLOCK.min(n - start);
        let a = raw_sq(&p.x_hat.rows(start, len).into_owned(), &p.x)?
            .map(|d2| cx * (-d2 / (2.0 * p.v_x)).exp());
        let b = shifted_kernel(raw_sq(&p.y_hat.rows(start, len).into_owned(), &p.y)?, p.v_y);
        for i in 0..len {
            let den: f64 = b.row(i).sum();
            if !(den > 0.0) {
                return Err(Error::Underflow("feature kernel sum is zero".into()));
            }
            per_row.push(a.row(i).dot(&b.row(i)) / den);
        }
    }
    Ok(pairwise_sum(&per_row) / n as f64)
}

/// Per-row dependence ratios Σ_n a_mn b_mn / (Σ_n a_mn · Σ_n b_mn).
fn dependence_ratios(p: &NoisySamplePair) -> Result<Vec<f64>> {
    check_pairs(p)?;
    let n = p.n();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(BLOCK) {
        let len = BLOCK.min(n - start);
        let a = shifted_kernel(raw_sq(&p.x_hat.rows(start, len).into_owned(), &p.x)?, p.v_x);
        let b = shifted_kernel(raw_sq(&p.y_hat.rows(start, len).into_owned(), &p.y)?, p.v_y);
        for i in 0..len {
            let (sa, sb) = (a.row(i).sum(), b.row(i).sum());
            if !(sa > 0.0 && sb > 0.0) {
                return Err(Error::Underflow("kernel sum is zero".into()));
            }
            out.push(a.row(i).dot(&b.row(i)) / (sa * sb));
        }
    }
    Ok(out)
}

/// Shannon MI: (1/N) Σ_m log(N · ratio_m).
pub fn estimate_shannon_mi(p: &NoisySamplePair) -> Result<f64> {
    let r = dependence_ratios(p)?;
    let n = r.len() as f64;
    let logs: Vec<f64> = r.iter().map(|x| (n * x).ln()).collect();
    Ok(pairwise_sum(&logs) / n)
}

/// Rényi quadratic MI ∫ p²(X,Y) / (p(X)p(Y)): (1/N) Σ_m N · ratio_m.
pub fn estimate_renyi_mi(p: &NoisySamplePair) -> Result<f64> {
    let r = dependence_ratios(p)?;
    Ok(pairwise_sum(&r))
}

/// Estimated conditional inner product, model norm and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub inner: f64,
    pub q_norm: f64,
    pub cost: f64,
}

/// Cost estimate from reconstructions decoded from the noisy features
/// Ŷ_n. `recon` holds `N·k` rows in sample-major order.
pub fn estimate_cost_terms(
    p: &NoisySamplePair,
    recon: &Mat,
    k: usize,
    v_q: f64,
) -> Result<CostTerms> {
    check_pairs(p)?;
    let n = p.n();
    let d = p.x.ncols();
    if k == 0 || recon.nrows() != n * k || recon.ncols() != d {
        return Err(Error::ShapeMismatch(format!(
            "reconstructions {:?} do not match N={n}, K={k}, d={d}",
            recon.shape()
        )));
    }
    if !(v_q > 0.0) {
        return Err(Error::NonPositiveVariance(v_q));
    }
    let (vi, vn) = (p.v_x + v_q, 2.0 * v_q);
    let (ci, cn) = (gauss_const(vi, d), gauss_const(vn, d));
    let mut inner = Vec::with_capacity(n * k);
    let mut norm = Vec::with_capacity(n * k * k);
    for s in 0..n {
        for a in 0..k {
            let ra = recon.row(s * k + a);
            inner.push(ci * (-(p.x.row(s) - ra).norm_squared() / (2.0 * vi)).exp());
            for b in 0..k {
                let rb = recon.row(s * k + b);
                norm.push(cn * (-(ra - rb).norm_squared() / (2.0 * vn)).exp());
            }
        }
    }
    let inner = pairwise_sum(&inner) / (n * k) as f64;
    let q_norm = pairwise_sum(&norm) / (n * k * k) as f64;
    if !(q_norm > 0.0) {
        return Err(Error::Underflow("model norm is zero".into()));
    }
    Ok(CostTerms {
        inner,
        q_norm,
        cost: inner * inner / q_norm,
    })
}

/// Relative cost and bound for high-dimensional data, with all Gaussian
/// constants cancelled (requires v_q = v_X):
/// cost_new = (1/N) (Σ_{n,k} e_nk)² / Σ_{n,i,j} f_nij, e and f using
/// exp(−‖·‖²/(4 v_X d_X)); bound_new = (1/N) Σ_m [Σ_n exp(−‖X_m − X_n‖²/(4 v_X d_X)) g_mn] / Σ_n g_mn
/// with g_mn = exp(−‖Ŷ_m − Y_n‖²/(2 v_Y d_Y)).
#[allow(clippy::too_many_arguments)]
pub fn highdim_cost_bound(
    x: &Mat,
    recon: &Mat,
    k: usize,
    y: &Mat,
    y_hat: &Mat,
    v_x: f64,
    v_y: f64,
    v_q: f64,
) -> Result<(f64, f64)> {
    if v_q != v_x {
        return Err(Error::InvalidArgument(format!(
            "relative estimators assume v_q = v_X, got v_q={v_q}, v_X={v_x}"
        )));
    }
    if !(v_x > 0.0) || !(v_y > 0.0) {
        return Err(Error::NonPositiveVariance(v_x.min(v_y)));
    }
    let n = x.nrows();
    let d = x.ncols() as f64;
    if k == 0
        || recon.nrows() != n * k
        || recon.ncols() != x.ncols()
        || y.nrows() != n
        || y_hat.shape() != y.shape()
    {
        return Err(Error::ShapeMismatch(
            "relative estimator inputs disagree".into(),
        ));
    }
    let sx = 1.0 / (4.0 * v_x * d);
    let mut e = Vec::with_capacity(n * k);
    let mut f = Vec::with_capacity(n * k * k);
    for s in 0..n {
        for a in 0..k {
            let ra = recon.row(s * k + a);
            e.push((-(x.row(s) - ra).norm_squared() * sx).exp());
            for b in 0..k {
                f.push((-(ra - recon.row(s * k + b)).norm_squared() * sx).exp());
            }
        }
    }
    let se = pairwise_sum(&e);
    let sf = pairwise_sum(&f);
    let cost = se * se / (n as f64 * sf);

    let dy = y.ncols() as f64;
    let mut per_row = Vec::with_capacity(n);
    for start in (0..n).step_by(BLOCK) {
        let len = BLOCK.min(n - start);
        let kx = raw_sq(&x.rows(start, len).into_owned(), x)?.map(|d2| (-d2 * sx).exp());
        let g = shifted_kernel(raw_sq(&y_hat.rows(start, len).into_owned(), y)?, v_y * dy);
        for i in 0..len {
            let den: f64 = g.row(i).sum();
            if !(den > 0.0) {
                return Err(Error::Underflow("feature kernel sum is zero".into()));
            }
            per_row.push(kx.row(i).dot(&g.row(i)) / den);
        }
    }
    Ok((cost, pairwise_sum(&per_row) / n as f64))
}

/// Differentiable ‖p(X|Y)‖²_{p(Y)} estimate for training the encoder
/// directly ("max bound"). `x`, `x_hat` are data constants; `y` and `y_hat`
/// carry the encoder graph.
pub fn p_cond_norm_tensor<'g>(
    x: &Mat,
    x_hat: &Mat,
    y: Tensor<'g>,
    y_hat: Tensor<'g>,
    v_x: f64,
    v_y: f64,
) -> Result<Tensor<'g>> {
    let g = y.graph();
    let dx = x.ncols();
    let cx = gauss_const(v_x, dx);
    let a = g.constant(raw_sq(x_hat, x)?.map(|d2| cx * (-d2 / (2.0 * v_x)).exp()));
    let b = shifted_kernel_tensor(y_hat, y, v_y);
    let den = b.row_sums();
    if den.value().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Underflow("feature kernel sum is zero".into()));
    }
    Ok(a.mul(b).row_sums().div(den).mean())
}

/// exp(−(‖a_m − b_n‖² − shift_m)/2v) with a detached per-row shift.
fn shifted_kernel_tensor<'g>(a: Tensor<'g>, b: Tensor<'g>, v: f64) -> Tensor<'g> {
    let d = a.ncols() as f64;
    let d2 = a.pairwise_sq_dists(b).scale(d);
    let vals = d2.value();
    let shift = Mat::from_fn(vals.nrows(), 1, |i, _| vals.row(i).min());
    let g = a.graph();
    d2.sub(g.constant(shift)).scale(-0.5 / v).exp()
}

/// Differentiable per-row dependence ratios (see [`estimate_shannon_mi`]).
pub fn dependence_ratios_tensor<'g>(
    x: &Mat,
    x_hat: &Mat,
    y: Tensor<'g>,
    y_hat: Tensor<'g>,
    v_x: f64,
    v_y: f64,
) -> Result<Tensor<'g>> {
    let g = y.graph();
    let a = g.constant(shifted_kernel(raw_sq(x_hat, x)?, v_x));
    let b = shifted_kernel_tensor(y_hat, y, v_y);
    Ok(a.mul(b).row_sums().div(a.row_sums().mul(b.row_sums())))
}

pub fn shannon_mi_tensor<'g>(
    x: &Mat,
    x_hat: &Mat,
    y: Tensor<'g>,
    y_hat: Tensor<'g>,
    v_x: f64,
    v_y: f64,
) -> Result<Tensor<'g>> {
    let n = x.nrows() as f64;
    Ok(dependence_ratios_tensor(x, x_hat, y, y_hat, v_x, v_y)?
        .scale(n)
        .ln()
        .mean())
}

pub fn renyi_mi_tensor<'g>(
    x: &Mat,
    x_hat: &Mat,
    y: Tensor<'g>,
    y_hat: Tensor<'g>,
    v_x: f64,
    v_y: f64,
) -> Result<Tensor<'g>> {
    Ok(dependence_ratios_tensor(x, x_hat, y, y_hat, v_x, v_y)?.sum())
}

/// Result of the discrete nuclear-norm decomposition check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    /// ‖diag(√P) K diag(√Q)‖_*.
    pub nuclear: f64,
    /// N(0; 2v) · √(ΣP · ΣQ).
    pub bound: f64,
    pub holds: bool,
}

/// On a common grid, the nuclear norm of diag(√P)·K·diag(√Q) with the
/// Gaussian kernel K_ij = N(x_i − x_j; 2v) never exceeds N(0; 2v), with
/// equality when P = Q.
pub fn discrete_decomposition_check(
    p: &[f64],
    q: &[f64],
    grid_p: &Mat,
    grid_q: &Mat,
    v: f64,
) -> Result<DecompositionReport> {
    if grid_p != grid_q {
        return Err(Error::InvalidArgument(
            "P and Q live on different grids".into(),
        ));
    }
    let g = grid_p.nrows();
    if p.len() != g || q.len() != g {
        return Err(Error::DimensionMismatch {
            expected: g,
            got: if p.len() != g { p.len() } else { q.len() },
        });
    }
    if p.iter().chain(q).any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidArgument(
            "densities must be nonnegative".into(),
        ));
    }
    if !(v > 0.0) {
        return Err(Error::NonPositiveVariance(v));
    }
    let d = grid_p.ncols();
    let c = gauss_const(2.0 * v, d);
    let d2 = raw_sq(grid_p, grid_p)?;
    let a = Mat::from_fn(g, g, |i, j| {
        p[i].sqrt() * c * (-d2[(i, j)] / (4.0 * v)).exp() * q[j].sqrt()
    });
    let nuclear: f64 = svd(&a)?.s.iter().sum();
    let bound = c * (pairwise_sum(p) * pairwise_sum(q)).sqrt();
    Ok(DecompositionReport {
        nuclear,
        bound,
        holds: nuclear <= bound * (1.0 + 1e-10),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = randn(4, 2, &mut rng);
        let y = randn(4, 1, &mut rng);
        let p = make_noisy_pairs(&x, &y, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(p.x_hat, x);
        assert_eq!(p.y_hat, y);
    }

    #[test]
    fn highdim_perfect_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = randn(5, 60, &mut rng);
        let y = randn(5, 1, &mut rng);
        let (c, b) = highdim_cost_bound(&x, &x, 1, &y, &y, 0.03, 0.01, 0.03).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        assert!(b > 0.0 && b <= 1.0 + 1e-12);
        assert!(highdim_cost_bound(&x, &x, 1, &y, &y, 0.03, 0.01, 0.02).is_err());
    }

    #[test]
    fn decomposition_rejects_mismatched_grids() {
        let a = Mat::from_fn(4, 1, |i, _| i as f64);
        let b = Mat::from_fn(4, 1, |i, _| i as f64 + 0.5);
        let p = [0.25; 4];
        assert!(discrete_decomposition_check(&p, &p, &a, &b, 0.1).is_err());
    }
}
