//! Training objectives. Every cost here is *maximised*.
//!
//! Batches are tensors whose rows are samples. Gaussian differences are
//! built from distance matrices that are already divided by the sample
//! dimension d, so the stabilized kernel exp(−M/2v) averages over
//! dimensions. In true-density mode the same matrix is rescaled by d and
//! multiplied by the normalising constant.

use crate::linalg_ad::Tensor;
use crate::nn::Fan;
use crate::numeric::gauss_const;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

fn default_eps() -> f64 {
    1e-12
}

fn default_true() -> bool {
    true
}

/// Variances and evaluation mode shared by the costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Variance placed on every data sample.
    pub v_p: f64,
    /// Variance placed on every generated sample.
    pub v_q: f64,
    #[serde(default = "default_true")]
    pub stabilized: bool,
    /// Added inside the log of the KL cost.
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    /// Network also emits per-output weights and variances.
    #[serde(default)]
    pub trainable_params: bool,
    /// Permit v_p ≠ v_q.
    #[serde(default)]
    pub allow_unequal: bool,
}

impl LossConfig {
    pub fn new(v: f64) -> Self {
        Self {
            v_p: v,
            v_q: v,
            stabilized: true,
            epsilon: default_eps(),
            trainable_params: false,
            allow_unequal: false,
        }
    }

    pub fn true_density(mut self) -> Self {
        self.stabilized = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.v_p, self.v_q] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveVariance(v));
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("epsilon must be nonnegative".into()));
        }
        if !self.allow_unequal && self.v_p != self.v_q {
            return Err(Error::InvalidArgument(format!(
                "v_p = {} differs from v_q = {}; set allow_unequal to permit it",
                self.v_p, self.v_q
            )));
        }
        Ok(())
    }
}

/// Gaussian differences from a distance matrix `m` (entries ‖·‖²/d).
pub fn gauss_from_dists<'g>(m: Tensor<'g>, v: f64, d: usize, stabilized: bool) -> Tensor<'g> {
    if stabilized {
        m.scale(-0.5 / v).exp()
    } else {
        m.scale(-0.5 * d as f64 / v).exp().scale(gauss_const(v, d))
    }
}

fn check_pair(x: Tensor<'_>, xp: Tensor<'_>) -> Result<()> {
    if x.nrows() == 0 || xp.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if x.ncols() != xp.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: xp.ncols(),
        });
    }
    Ok(())
}

/// (1/N) Σ_n log((1/K) Σ_k G(X_n − X'_k; v_q) + ε).
pub fn kl_mdn_cost<'g>(x: Tensor<'g>, xp: Tensor<'g>, cfg: &LossConfig) -> Result<Tensor<'g>> {
    check_pair(x, xp)?;
    cfg.validate()?;
    let m = x.pairwise_sq_dists(xp);
    let k = gauss_from_dists(m, cfg.v_q, x.ncols(), cfg.stabilized);
    Ok(k.row_means().add_scalar(cfg.epsilon).ln().mean())
}

/// Normalised inner product ⟨p,q⟩²/⟨q,q⟩ with its parts.
#[derive(Debug, Clone, Copy)]
pub struct NipTerms<'g> {
    pub ratio: Tensor<'g>,
    pub inner: Tensor<'g>,
    pub q_norm: Tensor<'g>,
    /// ⟨p,p⟩, the upper bound on `ratio`; data-only, so not differentiable.
    pub p_norm: f64,
}

pub fn nip_cost<'g>(x: Tensor<'g>, xp: Tensor<'g>, cfg: &LossConfig) -> Result<NipTerms<'g>> {
    check_pair(x, xp)?;
    cfg.validate()?;
    let d = x.ncols();
    let inner = gauss_from_dists(
        x.pairwise_sq_dists(xp),
        cfg.v_p + cfg.v_q,
        d,
        cfg.stabilized,
    )
    .mean();
    let q_norm =
        gauss_from_dists(xp.pairwise_sq_dists(xp), 2.0 * cfg.v_q, d, cfg.stabilized).mean();
    let xc = x.detach();
    let p_norm = gauss_from_dists(xc.pairwise_sq_dists(xc), 2.0 * cfg.v_p, d, cfg.stabilized)
        .mean()
        .item();
    if q_norm.item() <= 0.0 {
        return Err(Error::Underflow("model norm ⟨q,q⟩ is zero".into()));
    }
    let ratio = inner.square().div(q_norm);
    Ok(NipTerms {
        ratio,
        inner,
        q_norm,
        p_norm,
    })
}

/// Nuclear norm of the stabilized cross Gram exp(−M(X, X')/2v).
pub fn nuclear_cost<'g>(x: Tensor<'g>, xp: Tensor<'g>, v: f64) -> Result<Tensor<'g>> {
    check_pair(x, xp)?;
    if !(v > 0.0) {
        return Err(Error::NonPositiveVariance(v));
    }
    gauss_from_dists(x.pairwise_sq_dists(xp), v, x.ncols(), true).nuclear_norm()
}

/// Σ σ_k / σ₁ of the stabilized cross Gram.
pub fn normalized_nuclear_cost<'g>(x: Tensor<'g>, xp: Tensor<'g>, v: f64) -> Result<Tensor<'g>> {
    check_pair(x, xp)?;
    if !(v > 0.0) {
        return Err(Error::NonPositiveVariance(v));
    }
    gauss_from_dists(x.pairwise_sq_dists(xp), v, x.ncols(), true).normalized_singular_sum()
}

/// Nuclear norm of the joint Gram between encoder pairs (X_i, Ygen_i) and
/// decoder pairs (Xgen_j, Y_j): entry (i, j) is
/// exp(−‖X_i − Xgen_j‖²/(2 v_X d_X) − ‖Ygen_i − Y_j‖²/(2 v_Y d_Y)).
pub fn elbo_nuclear_cost<'g>(
    x: Tensor<'g>,
    xgen: Tensor<'g>,
    y: Tensor<'g>,
    ygen: Tensor<'g>,
    vx: f64,
    vy: f64,
) -> Result<Tensor<'g>> {
    check_pair(x, xgen)?;
    check_pair(ygen, y)?;
    let n = x.nrows();
    if xgen.nrows() != y.nrows() || ygen.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "X {} rows, Ygen {} rows, Xgen {} rows, Y {} rows",
            n,
            ygen.nrows(),
            xgen.nrows(),
            y.nrows()
        )));
    }
    for v in [vx, vy] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance(v));
        }
    }
    let mx = x.pairwise_sq_dists(xgen).scale(-0.5 / vx);
    let my = ygen.pairwise_sq_dists(y).scale(-0.5 / vy);
    mx.add(my).exp().nuclear_norm()
}

/// Conditional inner-product cost with its parts.
#[derive(Debug, Clone, Copy)]
pub struct CondTerms<'g> {
    pub cost: Tensor<'g>,
    pub inner: Tensor<'g>,
    pub q_norm: Tensor<'g>,
}

/// inner = (1/NK) Σ_n Σ_k G(X_n − X'_n(k); v_p + v_q),
/// q = (1/NK²) Σ_n Σ_i Σ_j G(X'_n(i) − X'_n(j); 2 v_q), cost = inner²/q.
/// The norm only pairs reconstructions of the same sample.
pub fn conditional_nip_cost<'g>(
    x: Tensor<'g>,
    recon: &Fan<'g>,
    cfg: &LossConfig,
) -> Result<CondTerms<'g>> {
    cfg.validate()?;
    if recon.k < 1 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if x.nrows() != recon.n {
        return Err(Error::ShapeMismatch(format!(
            "{} samples but a fan for {}",
            x.nrows(),
            recon.n
        )));
    }
    if x.ncols() != recon.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: recon.dim(),
        });
    }
    let d = x.ncols();
    let k = recon.k;
    let xr = if k == 1 { x } else { x.repeat_rows(k) };
    let m = xr.sub(recon.values).square().row_means();
    let inner = gauss_from_dists(m, cfg.v_p + cfg.v_q, d, cfg.stabilized).mean();
    let mq = recon.values.group_pair_sq_dists(k);
    let q_norm = gauss_from_dists(mq, 2.0 * cfg.v_q, d, cfg.stabilized).mean();
    if q_norm.item() <= 0.0 {
        return Err(Error::Underflow("conditional model norm is zero".into()));
    }
    Ok(CondTerms {
        cost: inner.square().div(q_norm),
        inner,
        q_norm,
    })
}

/// Mixture components emitted by a network: `groups` mixtures of `k`
/// components each. Rows of `means` / `variances` follow the fan layout
/// (row g·k + j is component j of group g); `weights` is groups×k with rows
/// summing to one.
#[derive(Debug, Clone, Copy)]
pub struct ParamMixture<'g> {
    pub means: Tensor<'g>,
    pub variances: Tensor<'g>,
    pub weights: Tensor<'g>,
    pub groups: usize,
    pub k: usize,
}

impl<'g> ParamMixture<'g> {
    fn validate(&self) -> Result<()> {
        let rows = self.groups * self.k;
        if self.k == 0 || self.groups == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.means.nrows() != rows || self.variances.shape() != self.means.shape() {
            return Err(Error::ShapeMismatch(format!(
                "means {:?}, variances {:?}, expected {rows} rows",
                self.means.shape(),
                self.variances.shape()
            )));
        }
        if self.weights.shape() != (self.groups, self.k) {
            return Err(Error::ShapeMismatch(format!(
                "weights {:?}, expected ({}, {})",
                self.weights.shape(),
                self.groups,
                self.k
            )));
        }
        let w = self.weights.value();
        for g in 0..self.groups {
            let s: f64 = w.row(g).sum();
            if (s - 1.0).abs() > 1e-8 {
                return Err(Error::WeightNormalization(s));
            }
        }
        if w.iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidArgument("negative mixture weight".into()));
        }
        if self.variances.value().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::NonPositiveVariance(
                self.variances
                    .value()
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min),
            ));
        }
        Ok(())
    }
}

/// Per-dimension Gaussian differences for rows of `diff2` (squared
/// differences) with summed variances `vsum`. In stabilized mode the
/// exponent is averaged over dimensions and the variance-dependent part of
/// the constant is kept relative to `v_ref`, so constant variances equal to
/// the configured ones give exactly the stabilized kernel.
fn diag_gauss<'g>(diff2: Tensor<'g>, vsum: Tensor<'g>, stabilized: bool, v_ref: f64) -> Tensor<'g> {
    let quad = diff2.div(vsum.scale(2.0));
    if stabilized {
        let expo = quad.row_means();
        let logc = vsum.scale(1.0 / v_ref).ln().row_sums().scale(-0.5);
        logc.sub(expo).exp()
    } else {
        let expo = quad.row_sums();
        let logc = vsum
            .scale(2.0 * std::f64::consts::PI)
            .ln()
            .row_sums()
            .scale(-0.5);
        logc.sub(expo).exp()
    }
}

/// Inner-product cost for mixtures with network-emitted weights and
/// diagonal variances.
///
/// With `conditional`, there is one group per data row and sample n is
/// compared only with group n (the encoder-mixture-decoder form). Otherwise
/// there must be a single group that every data row is compared with (the
/// MDN form).
pub fn parametric_mixture_cost<'g>(
    x: Tensor<'g>,
    q: &ParamMixture<'g>,
    conditional: bool,
    cfg: &LossConfig,
) -> Result<CondTerms<'g>> {
    cfg.validate()?;
    q.validate()?;
    if x.ncols() != q.means.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: q.means.ncols(),
        });
    }
    let (n, k, groups) = (x.nrows(), q.k, q.groups);
    if conditional && groups != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} samples but {groups} mixtures"
        )));
    }
    if !conditional && groups != 1 {
        return Err(Error::ShapeMismatch(
            "the unconditional form needs a single mixture".into(),
        ));
    }
    let wcol = q.weights.reshape(groups * k, 1);

    // Inner product: data rows against their component rows.
    let (xi, ci): (Vec<usize>, Vec<usize>) = if conditional {
        (0..n)
            .flat_map(|i| (0..k).map(move |j| (i, i * k + j)))
            .unzip()
    } else {
        (0..n).flat_map(|i| (0..k).map(move |j| (i, j))).unzip()
    };
    let dx = x
        .gather_rows(xi)
        .sub(q.means.gather_rows(ci.clone()))
        .square();
    let vs = q.variances.gather_rows(ci.clone()).add_scalar(cfg.v_p);
    let t = diag_gauss(dx, vs, cfg.stabilized, cfg.v_p + cfg.v_q);
    let inner = wcol.gather_rows(ci).mul(t).sum().scale(1.0 / n as f64);

    // Norm: pairs of components inside each group.
    let (ii, jj): (Vec<usize>, Vec<usize>) = (0..groups)
        .flat_map(|g| (0..k).flat_map(move |a| (0..k).map(move |b| (g * k + a, g * k + b))))
        .unzip();
    let dm = q
        .means
        .gather_rows(ii.clone())
        .sub(q.means.gather_rows(jj.clone()))
        .square();
    let vsum = q
        .variances
        .gather_rows(ii.clone())
        .add(q.variances.gather_rows(jj.clone()));
    let t = diag_gauss(dm, vsum, cfg.stabilized, 2.0 * cfg.v_q);
    let ww = wcol.gather_rows(ii).mul(wcol.gather_rows(jj));
    let q_norm = ww.mul(t).sum().scale(1.0 / groups as f64);
    if q_norm.item() <= 0.0 {
        return Err(Error::Underflow("parametric model norm is zero".into()));
    }
    Ok(CondTerms {
        cost: inner.square().div(q_norm),
        inner,
        q_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg_ad::Graph;
    use crate::Mat;

    #[test]
    fn nip_equality_when_model_equals_data() {
        let g = Graph::new();
        let x = g.constant(Mat::from_row_slice(3, 2, &[0.1, 0.2, 0.5, 0.4, 0.9, 0.0]));
        let t = nip_cost(x, x, &LossConfig::new(0.05)).unwrap();
        assert!((t.ratio.item() - t.p_norm).abs() < 1e-15);
    }

    #[test]
    fn cond_perfect_reconstruction_is_one() {
        let g = Graph::new();
        let x = g.constant(Mat::from_row_slice(2, 2, &[0.1, 0.2, 0.5, 0.4]));
        let fan = Fan::new(x, 2, 1).unwrap();
        let t = conditional_nip_cost(x, &fan, &LossConfig::new(0.01)).unwrap();
        assert_eq!(
            (t.inner.item(), t.q_norm.item(), t.cost.item()),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn unequal_variances_need_the_flag() {
        let mut c = LossConfig::new(0.1);
        c.v_q = 0.2;
        assert!(c.validate().is_err());
        c.allow_unequal = true;
        assert!(c.validate().is_ok());
    }
}
