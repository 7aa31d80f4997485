//! Closed-form algebra of Gaussians and Gaussian mixtures with diagonal
//! covariances.
//!
//! Two evaluation modes exist. [`Mode::True`] uses proper densities.
//! [`Mode::Stabilized`] drops the normalising constant and averages the
//! scaled squared distance over dimensions, which keeps values in `(0, 1]`
//! for high-dimensional data.

use crate::numeric::{normal_1d, pairwise_sum, symmetric_sum};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Mode {
    #[default]
    True,
    Stabilized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Variance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

/// A Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    mean: Vec<f64>,
    variance: Variance,
}

impl Gaussian {
    pub fn isotropic(mean: Vec<f64>, v: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveVariance(v));
        }
        check_finite(&mean)?;
        Ok(Self {
            mean,
            variance: Variance::Isotropic(v),
        })
    }

    pub fn diagonal(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if var.len() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: var.len(),
            });
        }
        if let Some(&v) = var.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveVariance(v));
        }
        check_finite(&mean)?;
        Ok(Self {
            mean,
            variance: Variance::Diagonal(var),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &Variance {
        &self.variance
    }

    /// Variance along dimension `l`.
    #[inline]
    pub fn var(&self, l: usize) -> f64 {
        match &self.variance {
            Variance::Isotropic(v) => *v,
            Variance::Diagonal(vs) => vs[l],
        }
    }
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("gaussian mean".into()))
    }
}

/// Weighted mixture of Gaussians sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    components: Vec<Gaussian>,
    weights: Vec<f64>,
    mode: Mode,
}

impl GaussianMixture {
    pub fn new(components: Vec<Gaussian>, weights: Vec<f64>, mode: Mode) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        let d = components[0].dim();
        for c in &components {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.dim(),
                });
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::WeightNormalization(total));
        }
        Ok(Self {
            components,
            weights,
            mode,
        })
    }

    /// Equal weights 1/N.
    pub fn uniform(components: Vec<Gaussian>, mode: Mode) -> Result<Self> {
        let n = components.len().max(1);
        let w = vec![1.0 / n as f64; components.len()];
        Self::new(components, w, mode)
    }

    /// Equal-weight mixture with one isotropic component per row of `centers`.
    pub fn from_samples(centers: &crate::Mat, v: f64, mode: Mode) -> Result<Self> {
        let comps = (0..centers.nrows())
            .map(|i| Gaussian::isotropic(centers.row(i).iter().copied().collect(), v))
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(comps, mode)
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Value of the Gaussian difference between two components, assuming the
/// dimensions already match.
fn pair_term(a: &Gaussian, b: &Gaussian, mode: Mode) -> f64 {
    let d = a.dim();
    match mode {
        Mode::True => {
            let mut prod = 1.0;
            for l in 0..d {
                prod *= normal_1d(a.mean[l] - b.mean[l], a.var(l) + b.var(l));
            }
            prod
        }
        Mode::Stabilized => {
            let mut s = 0.0;
            for l in 0..d {
                let diff = a.mean[l] - b.mean[l];
                s += diff * diff / (2.0 * (a.var(l) + b.var(l)));
            }
            (-s / d as f64).exp()
        }
    }
}

/// ∫ a(x) b(x) dx for two Gaussians, i.e. N(m_a − m_b; v_a + v_b).
pub fn gauss_inner(a: &Gaussian, b: &Gaussian, mode: Mode) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(pair_term(a, b, mode))
}

/// ⟨p, q⟩ = Σ_i Σ_j w_i w'_j N(m_i − m'_j; v_i + v'_j).
///
/// Terms are reduced in an order that only depends on their values, so the
/// result is exactly symmetric in the arguments.
pub fn mixture_inner(p: &GaussianMixture, q: &GaussianMixture) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    if p.mode != q.mode {
        return Err(Error::ModeMismatch);
    }
    let mut terms = Vec::with_capacity(p.len() * q.len());
    for (a, wa) in p.components.iter().zip(&p.weights) {
        for (b, wb) in q.components.iter().zip(&q.weights) {
            terms.push(wa * wb * pair_term(a, b, p.mode));
        }
    }
    Ok(symmetric_sum(terms))
}

/// ⟨p, p⟩, the squared L2 norm.
pub fn mixture_norm(p: &GaussianMixture) -> f64 {
    mixture_inner(p, p).expect("a mixture is compatible with itself")
}

/// Limits on the closed-form moment, whose sum has N^order terms.
#[derive(Debug, Clone, Copy)]
pub struct MomentLimits {
    pub max_order: usize,
    pub max_terms: u128,
}

impl Default for MomentLimits {
    fn default() -> Self {
        Self {
            max_order: 4,
            max_terms: 5_000_000,
        }
    }
}

/// ∫ p(x)^order dx with the default limits.
pub fn mixture_moment(p: &GaussianMixture, order: usize) -> Result<f64> {
    mixture_moment_with(p, order, MomentLimits::default())
}

/// ∫ p(x)^order dx by completing the square over every ordered tuple of
/// components.
///
/// Per dimension, with precisions a_i = 1/v_i, A = Σ a_i and
/// m̄ = Σ a_i m_i / A:
/// ∫ Π_i N(x − m_i; v_i) dx = Π_i (2π v_i)^(-1/2) · (2π/A)^(1/2) · exp(−½ Σ a_i (m_i − m̄)²).
/// In stabilized mode only the exponent is kept, averaged over dimensions.
pub fn mixture_moment_with(p: &GaussianMixture, order: usize, limits: MomentLimits) -> Result<f64> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!(
            "moment order must be at least 2, got {order}"
        )));
    }
    let n = p.len() as u128;
    let terms = n.checked_pow(order as u32).unwrap_or(u128::MAX);
    if order > limits.max_order || terms > limits.max_terms {
        return Err(Error::TooManyTerms {
            order,
            terms,
            cap: limits.max_terms,
        });
    }
    let d = p.dim();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut idx = vec![0usize; order];
    let mut vals = Vec::with_capacity(terms as usize);
    loop {
        let mut w = 1.0;
        for &i in &idx {
            w *= p.weights[i];
        }
        let mut log_const = 0.0;
        let mut expo = 0.0;
        for l in 0..d {
            let mut a_sum = 0.0;
            let mut am_sum = 0.0;
            for &i in &idx {
                let c = &p.components[i];
                let a = 1.0 / c.var(l);
                a_sum += a;
                am_sum += a * c.mean[l];
                log_const -= 0.5 * (two_pi * c.var(l)).ln();
            }
            let mbar = am_sum / a_sum;
            let mut q = 0.0;
            for &i in &idx {
                let c = &p.components[i];
                let dm = c.mean[l] - mbar;
                q += dm * dm / c.var(l);
            }
            log_const += 0.5 * (two_pi / a_sum).ln();
            expo += 0.5 * q;
        }
        let v = match p.mode {
            Mode::True => w * (log_const - expo).exp(),
            Mode::Stabilized => w * (-expo / d as f64).exp(),
        };
        vals.push(v);

        let mut pos = order;
        loop {
            if pos == 0 {
                return Ok(pairwise_sum(&vals));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < p.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Σ_k w_k N(x − m_k; v_k) (or its stabilized counterpart).
pub fn eval_density(p: &GaussianMixture, x: &[f64]) -> Result<f64> {
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: x.len(),
        });
    }
    let d = x.len();
    let terms: Vec<f64> = p
        .components
        .iter()
        .zip(&p.weights)
        .map(|(c, w)| match p.mode {
            Mode::True => {
                let mut prod = *w;
                for (l, xl) in x.iter().enumerate() {
                    prod *= normal_1d(xl - c.mean[l], c.var(l));
                }
                prod
            }
            Mode::Stabilized => {
                let mut s = 0.0;
                for (l, xl) in x.iter().enumerate() {
                    let diff = xl - c.mean[l];
                    s += diff * diff / (2.0 * c.var(l));
                }
                w * (-s / d as f64).exp()
            }
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_zero() {
        let a = Gaussian::isotropic(vec![0.0], 0.5).unwrap();
        let v = gauss_inner(&a, &a, Mode::True).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn stabilized_same_mean_is_one() {
        let a = Gaussian::isotropic(vec![0.3, -1.0], 0.7).unwrap();
        let b = Gaussian::isotropic(vec![0.3, -1.0], 0.01).unwrap();
        assert_eq!(gauss_inner(&a, &b, Mode::Stabilized).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            Gaussian::isotropic(vec![0.0], 0.0),
            Err(Error::NonPositiveVariance(_))
        ));
        let a = Gaussian::isotropic(vec![0.0], 1.0).unwrap();
        let b = Gaussian::isotropic(vec![0.0, 1.0], 1.0).unwrap();
        assert!(gauss_inner(&a, &b, Mode::True).is_err());
        let p = GaussianMixture::uniform(vec![a.clone()], Mode::True).unwrap();
        let q = GaussianMixture::uniform(vec![a], Mode::Stabilized).unwrap();
        assert_eq!(mixture_inner(&p, &q), Err(Error::ModeMismatch));
        assert!(mixture_moment(&p, 1).is_err());
    }

    #[test]
    fn duplicate_components_collapse() {
        let a = Gaussian::isotropic(vec![0.0], 0.5).unwrap();
        let p1 = GaussianMixture::uniform(vec![a.clone()], Mode::True).unwrap();
        let p2 = GaussianMixture::uniform(vec![a.clone(), a], Mode::True).unwrap();
        assert!((mixture_norm(&p1) - mixture_norm(&p2)).abs() < 1e-15);
    }

    #[test]
    fn moment_term_cap() {
        let comps = (0..20)
            .map(|i| Gaussian::isotropic(vec![i as f64], 1.0).unwrap())
            .collect();
        let p = GaussianMixture::uniform(comps, Mode::True).unwrap();
        assert!(mixture_moment(&p, 5).is_err());
        let lim = MomentLimits {
            max_order: 4,
            max_terms: 100,
        };
        assert!(matches!(
            mixture_moment_with(&p, 3, lim),
            Err(Error::TooManyTerms { .. })
        ));
    }
}
