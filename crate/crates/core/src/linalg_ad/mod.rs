//! Dense reverse-mode differentiation, SVD and nuclear-norm objectives.

mod svd;
mod tensor;

pub use svd::{svd, SvdResult};
pub use tensor::{Graph, Tensor};

use crate::{Mat, Result};

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// ‖analytic − numeric‖_∞ / max(‖numeric‖_∞, 1e-12).
    pub max_rel: f64,
    pub max_abs: f64,
    pub analytic: Mat,
    pub numeric: Mat,
}

/// Checks the gradient of a scalar function of one matrix argument.
///
/// `f` builds the loss on the graph it is handed, from the leaf it is handed.
pub fn finite_diff_check<F>(f: F, x: &Mat, h: f64) -> Result<FdReport>
where
    F: for<'g> Fn(&'g Graph, Tensor<'g>) -> Result<Tensor<'g>>,
{
    let g = Graph::new();
    let leaf = g.param(x.clone());
    let loss = f(&g, leaf)?;
    g.backward(loss)?;
    let analytic = leaf
        .grad()
        .unwrap_or_else(|| Mat::zeros(x.nrows(), x.ncols()));

    let eval = |m: Mat| -> Result<f64> {
        let g = Graph::new();
        let leaf = g.constant(m);
        Ok(f(&g, leaf)?.item())
    };
    let mut numeric = Mat::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let mut xp = x.clone();
            xp[(i, j)] += h;
            let mut xm = x.clone();
            xm[(i, j)] -= h;
            numeric[(i, j)] = (eval(xp)? - eval(xm)?) / (2.0 * h);
        }
    }
    let max_abs = (&analytic - &numeric).amax();
    let max_rel = max_abs / numeric.amax().max(1e-12);
    Ok(FdReport {
        max_rel,
        max_abs,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Mat::from_row_slice(2, 2, &[0.3, -1.2, 2.0, 0.7]);
        let r = finite_diff_check(|_, t| Ok(t.square().sum().scale(3.0)), &x, 1e-5).unwrap();
        assert!(r.max_rel < 1e-9, "{}", r.max_rel);
    }
}
