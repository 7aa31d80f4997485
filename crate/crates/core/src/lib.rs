//! Gaussian-mixture inner-product objectives for density approximation and
//! representation learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`gm_algebra`]: closed forms for inner products, norms and higher moments
//!   of Gaussian mixtures.
//! - [`gram`]: pairwise distance and Gaussian Gram matrices.
//! - [`linalg_ad`]: a small reverse-mode autodiff engine over dense matrices,
//!   a Jacobi SVD and nuclear-norm objectives.
//! - [`nn`]: MLPs, mixture decoders, priors, Adam, checkpoints.
//! - [`losses`]: KL / inner-product / nuclear-norm MDN costs and the
//!   conditional cost for encoder-mixture-decoders.
//! - [`bounds`]: sample estimators for the conditional bound and for
//!   mutual information.
//! - [`baselines`]: MINE, KICA-KGV and HSIC-NOCCO.
//! - [`data`]: toy generators, random walks, IDX loading.

pub mod baselines;
pub mod bounds;
pub mod data;
pub mod error;
pub mod gm_algebra;
pub mod gram;
pub mod linalg_ad;
pub mod losses;
pub mod nn;
pub mod numeric;

pub use error::{Error, Result};

/// Dense row-major-semantics matrix used throughout (rows are samples).
pub type Mat = nalgebra::DMatrix<f64>;
