//! Reference dependence measures: neural MI estimators and two kernel
//! statistics computed from centered Gram matrices.

use crate::gram::row_sq_norms;
use crate::linalg_ad::{Graph, Tensor};
use crate::nn::{optimizer_step, Activation, BoundMlp, MlpNetwork, OptimizerState};
use crate::numeric::gauss_const;
use crate::{Error, Mat, Result};
use nalgebra::SymmetricEigen;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MineVariant {
    /// Donsker–Varadhan lower bound on Shannon MI.
    Shannon,
    /// (E_joint f)² / E_marginal f², bounded by the Rényi quantity ∫p²/(p p).
    Renyi,
}

/// Offset added after the sigmoid of the Rényi critic.
pub const RENYI_FLOOR: f64 = 0.1;

/// Critic f(X, Y) acting on concatenated pairs.
#[derive(Debug, Clone)]
pub struct MineEstimator {
    pub network: MlpNetwork,
    pub variant: MineVariant,
}

impl MineEstimator {
    pub fn new<R: Rng + ?Sized>(
        dx: usize,
        dy: usize,
        hidden: &[usize],
        variant: MineVariant,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![dx + dy];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let out = match variant {
            MineVariant::Shannon => Activation::Linear,
            MineVariant::Renyi => Activation::Sigmoid,
        };
        Ok(Self {
            network: MlpNetwork::new(&widths, Activation::Relu, out, rng)?,
            variant,
        })
    }
}

/// Critic values for the rows of (x, y).
pub fn mine_critic<'g>(
    variant: MineVariant,
    f: &BoundMlp<'g>,
    x: Tensor<'g>,
    y: Tensor<'g>,
) -> Result<Tensor<'g>> {
    let out = f.forward(Tensor::concat_cols(&[x, y]))?;
    Ok(match variant {
        MineVariant::Shannon => out,
        MineVariant::Renyi => out.add_scalar(RENYI_FLOOR),
    })
}

/// The MI objective with marginal pairs (x_n, y_perm[n]).
pub fn mine_objective<'g>(
    variant: MineVariant,
    f: &BoundMlp<'g>,
    x: Tensor<'g>,
    y: Tensor<'g>,
    perm: &[usize],
) -> Result<Tensor<'g>> {
    if x.nrows() != y.nrows() || perm.len() != y.nrows() {
        return Err(Error::ShapeMismatch(
            "joint and marginal batches disagree".into(),
        ));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let joint = mine_critic(variant, f, x, y)?;
    let marg = mine_critic(variant, f, x, y.gather_rows(perm.to_vec()))?;
    match variant {
        MineVariant::Shannon => {
            // log-mean-exp with a detached shift
            let c = marg.value().max();
            let lme = marg.add_scalar(-c).exp().mean();
            if !(lme.item() > 0.0) {
                return Err(Error::Underflow("log of a non-positive mean".into()));
            }
            Ok(joint.mean().sub(lme.ln().add_scalar(c)))
        }
        MineVariant::Renyi => {
            let second = marg.square().mean();
            if !(second.item() > 0.0) {
                return Err(Error::Underflow("second moment is zero".into()));
            }
            Ok(joint.mean().square().div(second))
        }
    }
}

/// Random permutation of 0..n.
pub fn shuffled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Trains the critic on fixed samples with minibatches and returns the
/// objective on the full set with a fresh shuffle.
pub fn train_mine<R: Rng + ?Sized>(
    est: &mut MineEstimator,
    x: &Mat,
    y: &Mat,
    steps: usize,
    batch: usize,
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    let n = x.nrows();
    if n != y.nrows() || n < 2 {
        return Err(Error::ShapeMismatch(
            "x and y need the same number (≥ 2) of rows".into(),
        ));
    }
    let batch = batch.min(n);
    let mut opt = OptimizerState::adam(lr);
    for _ in 0..steps {
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
        let g = Graph::new();
        let f = est.network.bind(&g);
        let xb = g.constant(Mat::from_fn(batch, x.ncols(), |i, j| x[(idx[i], j)]));
        let yb = g.constant(Mat::from_fn(batch, y.ncols(), |i, j| y[(idx[i], j)]));
        let perm = shuffled(batch, rng);
        let obj = mine_objective(est.variant, &f, xb, yb, &perm)?;
        g.backward(obj)?;
        let grads = f.grads();
        optimizer_step(&mut opt, est.network.params_mut(), &grads)?;
    }
    mine_estimate(est, x, y, rng)
}

/// Objective value on all rows with one random shuffle.
pub fn mine_estimate<R: Rng + ?Sized>(
    est: &MineEstimator,
    x: &Mat,
    y: &Mat,
    rng: &mut R,
) -> Result<f64> {
    let g = Graph::new();
    let f = est.network.bind_frozen(&g);
    let perm = shuffled(x.nrows(), rng);
    Ok(mine_objective(
        est.variant,
        &f,
        g.constant(x.clone()),
        g.constant(y.clone()),
        &perm,
    )?
    .item())
}

fn default_kv() -> f64 {
    0.001
}

fn default_reg() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDependenceConfig {
    #[serde(default = "default_kv")]
    pub v: f64,
    #[serde(default = "default_reg")]
    pub epsilon: f64,
}

impl Default for KernelDependenceConfig {
    fn default() -> Self {
        Self {
            v: default_kv(),
            epsilon: default_reg(),
        }
    }
}

impl KernelDependenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0) {
            return Err(Error::NonPositiveVariance(self.v));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(
                "regulariser must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub const EIGEN_FLOOR: f64 = 1e-10;

/// Gram matrix N(x_i − x_j; 2v), double-centred by N = I − 11ᵀ/n.
pub fn centered_gram(x: &Mat, v: f64) -> Mat {
    let n = x.nrows();
    let d = x.ncols();
    let sq = row_sq_norms(x);
    let xx = x * x.transpose();
    let c = gauss_const(2.0 * v, d);
    let mut r = Mat::from_fn(n, n, |i, j| {
        c * (-(sq[i] + sq[j] - 2.0 * xx[(i, j)]).max(0.0) / (4.0 * v)).exp()
    });
    let rm: Vec<f64> = (0..n).map(|i| r.row(i).mean()).collect();
    let cm: Vec<f64> = (0..n).map(|j| r.column(j).mean()).collect();
    let all = r.mean();
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] += all - rm[i] - cm[j];
        }
    }
    r.fill_lower_triangle_with_upper_triangle();
    r
}

/// B^{-1/2} R̂ with B = (R̂ + εI)², from one eigendecomposition. The result
/// is symmetric and its eigenvalues lie in [0, 1).
pub fn whitened_gram(r: &Mat, epsilon: f64) -> Result<Mat> {
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure("non-finite Gram matrix".into()));
    }
    let eig = SymmetricEigen::try_new(r.clone(), 1e-14, 0)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;
    let w: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| l / ((l + epsilon) * (l + epsilon)).max(EIGEN_FLOOR).sqrt())
        .collect();
    let u = &eig.eigenvectors;
    let mut us = u.clone();
    for (k, wk) in w.iter().enumerate() {
        us.column_mut(k).scale_mut(*wk);
    }
    let mut s = us * u.transpose();
    s.fill_lower_triangle_with_upper_triangle();
    Ok(s)
}

fn factors(x: &Mat, y: &Mat, cfg: &KernelDependenceConfig) -> Result<(Mat, Mat)> {
    cfg.validate()?;
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} samples",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::EmptyBatch);
    }
    Ok((
        whitened_gram(&centered_gram(x, cfg.v), cfg.epsilon)?,
        whitened_gram(&centered_gram(y, cfg.v), cfg.epsilon)?,
    ))
}

/// −½ Σ log(1 − σ_i²) where σ_i are the positive generalized eigenvalues,
/// i.e. the singular values of C = S_x S_y. Evaluated as −½ log det(I − C Cᵀ).
pub fn kgv_from_factors(sx: &Mat, sy: &Mat) -> Result<f64> {
    let c = sx * sy;
    let n = c.nrows();
    let m = Mat::identity(n, n) - &c * c.transpose();
    if let Some(ch) = m.clone().cholesky() {
        let l = ch.l();
        return Ok(-(0..n).map(|i| l[(i, i)].ln()).sum::<f64>());
    }
    let eig = SymmetricEigen::try_new(m, 1e-14, 0)
        .ok_or_else(|| Error::EigenFailure("KGV spectrum".into()))?;
    Ok(-0.5
        * eig
            .eigenvalues
            .iter()
            .map(|l| l.max(1e-300).ln())
            .sum::<f64>())
}

/// Trace of C = S_x S_y.
pub fn nocco_from_factors(sx: &Mat, sy: &Mat) -> f64 {
    sx.component_mul(sy).sum()
}

pub fn kica_kgv(x: &Mat, y: &Mat, cfg: &KernelDependenceConfig) -> Result<f64> {
    let (sx, sy) = factors(x, y, cfg)?;
    kgv_from_factors(&sx, &sy)
}

pub fn hsic_nocco(x: &Mat, y: &Mat, cfg: &KernelDependenceConfig) -> Result<f64> {
    let (sx, sy) = factors(x, y, cfg)?;
    Ok(nocco_from_factors(&sx, &sy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelScore {
    Kgv,
    Nocco,
}

/// Observed statistic and its distribution under random pairings.
#[derive(Debug, Clone)]
pub struct PermutationNull {
    pub observed: f64,
    pub null: Vec<f64>,
}

impl PermutationNull {
    pub fn mean(&self) -> f64 {
        self.null.iter().sum::<f64>() / self.null.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        let n = self.null.len() as f64;
        (self.null.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
    }

    /// Empirical quantile with linear interpolation.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut s = self.null.clone();
        s.sort_by(f64::total_cmp);
        let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
    }
}

pub const NULL_REPLICATES: usize = 200;

/// Scores (x, y) and `reps` row permutations of y. Permuting y only
/// permutes S_y, so the eigendecompositions are done once.
pub fn permutation_null<R: Rng + ?Sized>(
    x: &Mat,
    y: &Mat,
    score: KernelScore,
    cfg: &KernelDependenceConfig,
    reps: usize,
    rng: &mut R,
) -> Result<PermutationNull> {
    if reps < 2 {
        return Err(Error::InvalidArgument(
            "need at least two replicates".into(),
        ));
    }
    let (sx, sy) = factors(x, y, cfg)?;
    let eval = |sy: &Mat| -> Result<f64> {
        match score {
            KernelScore::Kgv => kgv_from_factors(&sx, sy),
            KernelScore::Nocco => Ok(nocco_from_factors(&sx, sy)),
        }
    };
    let observed = eval(&sy)?;
    let n = sy.nrows();
    let mut null = Vec::with_capacity(reps);
    for _ in 0..reps {
        let p = shuffled(n, rng);
        let syp = Mat::from_fn(n, n, |i, j| sy[(p[i], p[j])]);
        null.push(eval(&syp)?);
    }
    Ok(PermutationNull { observed, null })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_critic_values() {
        let g = Graph::new();
        for (variant, want) in [(MineVariant::Shannon, 0.0), (MineVariant::Renyi, 1.0)] {
            let mut net =
                MlpNetwork::zeros(&[3, 1], Activation::Linear, Activation::Linear).unwrap();
            net.params_mut()[1][(0, 0)] = 0.7;
            let f = net.bind(&g);
            let x = g.constant(Mat::from_fn(6, 2, |i, j| (i + j) as f64));
            let y = g.constant(Mat::from_fn(6, 1, |i, _| i as f64));
            let v = mine_objective(variant, &f, x, y, &[5, 4, 3, 2, 1, 0])
                .unwrap()
                .item();
            assert!((v - want).abs() < 1e-12, "{variant:?}: {v}");
        }
    }

    #[test]
    fn whitened_gram_spectrum_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Mat::from_fn(30, 2, |_, _| rng.random_range(0.0..1.0));
        let s = whitened_gram(&centered_gram(&x, 0.01), 1.0).unwrap();
        let e = SymmetricEigen::new(s).eigenvalues;
        assert!(e.iter().all(|l| *l > -1e-10 && *l < 1.0));
    }

    #[test]
    fn centered_gram_rows_sum_to_zero() {
        let x = Mat::from_fn(7, 1, |i, _| (i as f64 * 0.3).sin());
        let r = centered_gram(&x, 0.05);
        for i in 0..7 {
            assert!(r.row(i).sum().abs() < 1e-10);
        }
    }
}
