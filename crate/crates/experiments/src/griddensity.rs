//! Autoencoder solution found by optimising discretised densities instead
//! of samples.
//!
//! X lives on a g×g grid over the unit box with empirical masses P_X, Y on
//! evenly spaced points in [−y_range, y_range]. The encoder is a one-hot
//! network giving one feature per grid cell, so p(Y|X) is the matrix
//! N(Y_j − E(X_i); v). The decoder is a one-hot network giving a 2-D point
//! per Y point, and M_ij = ‖X_i − D(Y_j)‖² stands for −log q(X|Y). The
//! objective mean((diag(P_X) P_{Y|X}) ⊙ M) is minimised.

use crate::heatmap::{unit_grid, GridValue};
use anyhow::{bail, Result};
use gmbound::linalg_ad::Graph;
use gmbound::nn::{optimizer_step, Activation, MlpNetwork, OptimizerState};
use gmbound::numeric::normal_1d;
use gmbound::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDensityConfig {
    pub grid: usize,
    pub y_points: usize,
    pub v: f64,
    pub y_range: f64,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for GridDensityConfig {
    fn default() -> Self {
        Self {
            grid: 50,
            y_points: 3000,
            v: 0.00025,
            y_range: 1.1,
            iterations: 300,
            lr: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridDensityResult {
    /// Empirical P_X on the grid (row-major in x1), summing to one.
    pub p_x: Vec<f64>,
    /// E(X_i) for every grid cell.
    pub features: Vec<GridValue>,
    /// Decoded point D(Y_j) for every Y point.
    pub decoded: Mat,
    /// Mass of Σ_i P_X(i) p(Y_j|X_i) Δy transported to D(Y_j), binned on the grid.
    pub reconstruction_density: Vec<GridValue>,
    /// Objective after each iteration.
    pub trace: Vec<f64>,
}

/// Histogram of 2-D samples on a g×g grid over [0, 1]², nearest cell.
pub fn grid_masses(samples: &Mat, g: usize) -> Result<Vec<f64>> {
    if samples.ncols() != 2 {
        bail!(
            "grid densities need 2-D data, got {} columns",
            samples.ncols()
        );
    }
    if samples.nrows() == 0 || g == 0 {
        bail!("empty data or grid");
    }
    let mut p = vec![0.0; g * g];
    let cell = |v: f64| ((v.clamp(0.0, 1.0) * (g - 1) as f64).round() as usize).min(g - 1);
    for r in 0..samples.nrows() {
        p[cell(samples[(r, 1)]) * g + cell(samples[(r, 0)])] += 1.0;
    }
    let n = samples.nrows() as f64;
    p.iter_mut().for_each(|x| *x /= n);
    Ok(p)
}

pub fn y_axis(cfg: &GridDensityConfig) -> Vec<f64> {
    let m = cfg.y_points;
    (0..m)
        .map(|j| -cfg.y_range + 2.0 * cfg.y_range * j as f64 / (m - 1).max(1) as f64)
        .collect()
}

pub fn grid_density_solver(samples: &Mat, cfg: &GridDensityConfig) -> Result<GridDensityResult> {
    if !(cfg.v > 0.0) || cfg.y_points < 2 || cfg.grid < 2 {
        bail!("grid density needs v > 0, at least two Y points and grid ≥ 2");
    }
    let p_x = grid_masses(samples, cfg.grid)?;
    let cells = cfg.grid * cfg.grid;
    let xs = unit_grid(cfg.grid);
    let ys = y_axis(cfg);
    let dy = ys[1] - ys[0];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut enc = MlpNetwork::new(&[cells, 1], Activation::Linear, Activation::Tanh, &mut rng)?;
    let mut dec = MlpNetwork::new(
        &[cfg.y_points, 2],
        Activation::Linear,
        Activation::Linear,
        &mut rng,
    )?;
    // Start the decoder near the data mean so early gradients are informative.
    let mean = (0..2)
        .map(|c| (0..cells).map(|i| p_x[i] * xs[(i, c)]).sum::<f64>())
        .collect::<Vec<_>>();
    for c in 0..2 {
        dec.params_mut()[1][(0, c)] = mean[c];
    }
    let eye_x = Mat::identity(cells, cells);
    let eye_y = Mat::identity(cfg.y_points, cfg.y_points);
    let ycol = Mat::from_fn(1, cfg.y_points, |_, j| ys[j]);
    let px = Mat::from_fn(cells, 1, |i, _| p_x[i]);
    let mut opt_e = OptimizerState::adam(cfg.lr);
    let mut opt_d = OptimizerState::adam(cfg.lr);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let c = 1.0 / (2.0 * std::f64::consts::PI * cfg.v).sqrt();
    for _ in 0..cfg.iterations {
        let (ge, gd, val) = {
            let g = Graph::new();
            let be = enc.bind(&g);
            let bd = dec.bind(&g);
            let e = be.forward(g.constant(eye_x.clone()))?; // cells×1
            let d = bd.forward(g.constant(eye_y.clone()))?; // y_points×2
            let diff = g.constant(ycol.clone()).sub(e); // cells×y_points
            let p_yx = diff.square().scale(-0.5 / cfg.v).exp().scale(c);
            let m = g.constant(xs.clone()).pairwise_sq_dists(d);
            let obj = g.constant(px.clone()).mul(p_yx).mul(m).mean();
            let val = obj.item();
            g.backward(obj.neg())?;
            (be.grads(), bd.grads(), val)
        };
        optimizer_step(&mut opt_e, enc.params_mut(), &ge)?;
        optimizer_step(&mut opt_d, dec.params_mut(), &gd)?;
        trace.push(val);
    }
    let e = enc.forward_values(&eye_x)?;
    let decoded = dec.forward_values(&eye_y)?;
    let features = (0..cells)
        .map(|i| GridValue {
            x0: xs[(i, 0)],
            x1: xs[(i, 1)],
            value: e[(i, 0)],
        })
        .collect();
    let p_y: Vec<f64> = (0..cfg.y_points)
        .map(|j| {
            (0..cells)
                .map(|i| p_x[i] * normal_1d(ys[j] - e[(i, 0)], cfg.v) * dy)
                .sum()
        })
        .collect();
    let mass = grid_masses_weighted(&decoded, &p_y, cfg.grid);
    let reconstruction_density = (0..cells)
        .map(|i| GridValue {
            x0: xs[(i, 0)],
            x1: xs[(i, 1)],
            value: mass[i],
        })
        .collect();
    Ok(GridDensityResult {
        p_x,
        features,
        decoded,
        reconstruction_density,
        trace,
    })
}

fn grid_masses_weighted(points: &Mat, w: &[f64], g: usize) -> Vec<f64> {
    let mut p = vec![0.0; g * g];
    let cell = |v: f64| ((v.clamp(0.0, 1.0) * (g - 1) as f64).round() as usize).min(g - 1);
    for r in 0..points.nrows() {
        p[cell(points[(r, 1)]) * g + cell(points[(r, 0)])] += w[r];
    }
    p
}
