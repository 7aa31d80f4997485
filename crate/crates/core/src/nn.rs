//! MLPs, priors, mixture decoders, recursive rollouts, Adam and checkpoints.

use crate::linalg_ad::{Graph, Tensor};
use crate::{Error, Mat, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<'g>(self, t: Tensor<'g>) -> Tensor<'g> {
        match self {
            Activation::Tanh => t.tanh(),
            Activation::Linear => t,
            Activation::Relu => t.relu(),
            Activation::Sigmoid => t.sigmoid(),
        }
    }

    fn apply_value(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Fully connected network; weights are stored input×output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    widths: Vec<usize>,
    weights: Vec<Mat>,
    biases: Vec<Mat>,
    hidden: Activation,
    output: Activation,
}

impl MlpNetwork {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, hidden, output)?;
        for w in &mut net.weights {
            let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            for x in w.iter_mut() {
                *x = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "bad layer widths {widths:?}"
            )));
        }
        let weights = widths.windows(2).map(|w| Mat::zeros(w[0], w[1])).collect();
        let biases = widths[1..].iter().map(|&w| Mat::zeros(1, w)).collect();
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            hidden,
            output,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn output(&self) -> Activation {
        self.output
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &Mat {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Mat {
        &self.biases[layer]
    }

    /// Parameters in a fixed order: w0, b0, w1, b1, ...
    pub fn params(&self) -> Vec<&Mat> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Puts the parameters on a graph as trainable leaves.
    pub fn bind<'g>(&self, g: &'g Graph) -> BoundMlp<'g> {
        self.bind_with(g, true)
    }

    /// Puts the parameters on a graph as constants.
    pub fn bind_frozen<'g>(&self, g: &'g Graph) -> BoundMlp<'g> {
        self.bind_with(g, false)
    }

    fn bind_with<'g>(&self, g: &'g Graph, trainable: bool) -> BoundMlp<'g> {
        let leaf = |m: &Mat| {
            if trainable {
                g.param(m.clone())
            } else {
                g.constant(m.clone())
            }
        };
        BoundMlp {
            weights: self.weights.iter().map(leaf).collect(),
            biases: self.biases.iter().map(leaf).collect(),
            hidden: self.hidden,
            output: self.output,
        }
    }

    /// Forward pass without a graph. Same arithmetic as the graph version.
    pub fn forward_values(&self, x: &Mat) -> Result<Mat> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = &h * w;
            let act = if l == last { self.output } else { self.hidden };
            for j in 0..z.ncols() {
                let bj = b[(0, j)];
                for v in z.column_mut(j).iter_mut() {
                    *v = act.apply_value(*v + bj);
                }
            }
            h = z;
        }
        Ok(h)
    }
}

/// An [`MlpNetwork`] whose parameters live on a graph.
#[derive(Debug, Clone)]
pub struct BoundMlp<'g> {
    weights: Vec<Tensor<'g>>,
    biases: Vec<Tensor<'g>>,
    hidden: Activation,
    output: Activation,
}

impl<'g> BoundMlp<'g> {
    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().unwrap().ncols()
    }

    pub fn forward(&self, x: Tensor<'g>) -> Result<Tensor<'g>> {
        mlp_forward(self, x)
    }

    /// Gradients in the order of [`MlpNetwork::params`]; zeros where the
    /// backward pass did not reach.
    pub fn grads(&self) -> Vec<Mat> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [*w, *b])
            .map(|t| {
                let (r, c) = t.shape();
                t.grad().unwrap_or_else(|| Mat::zeros(r, c))
            })
            .collect()
    }
}

pub fn mlp_forward<'g>(net: &BoundMlp<'g>, x: Tensor<'g>) -> Result<Tensor<'g>> {
    if x.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: x.ncols(),
        });
    }
    let mut h = x;
    let last = net.weights.len() - 1;
    for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        let z = h.matmul(*w).add(*b);
        h = if l == last {
            net.output.apply(z)
        } else {
            net.hidden.apply(z)
        };
    }
    Ok(h)
}

/// Region in which the continuous part of a prior is uniform. Regions other
/// than `Box` constrain the first two coordinates and are sampled by
/// rejection from [−1, 1]^d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UniformRegion {
    #[default]
    Box,
    Disk,
    Ring,
    Cross,
}

impl UniformRegion {
    fn accepts(self, u: &[f64]) -> bool {
        if u.len() < 2 {
            return true;
        }
        let r2 = u[0] * u[0] + u[1] * u[1];
        match self {
            UniformRegion::Box => true,
            UniformRegion::Disk => r2 <= 1.0,
            UniformRegion::Ring => (0.25..=1.0).contains(&r2),
            UniformRegion::Cross => u[0].abs() <= 0.3 || u[1].abs() <= 0.3,
        }
    }
}

/// Noise distribution fed to a decoder: a uniform block followed by a
/// one-hot categorical block. Either block may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PriorSpec {
    #[serde(default)]
    pub uniform_dim: usize,
    #[serde(default)]
    pub categories: usize,
    #[serde(default)]
    pub region: UniformRegion,
}

impl PriorSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn uniform(dim: usize) -> Self {
        Self {
            uniform_dim: dim,
            ..Self::default()
        }
    }

    pub fn categorical(categories: usize) -> Self {
        Self {
            categories,
            ..Self::default()
        }
    }

    pub fn hybrid(uniform_dim: usize, categories: usize) -> Self {
        Self {
            uniform_dim,
            categories,
            ..Self::default()
        }
    }

    pub fn with_region(mut self, region: UniformRegion) -> Self {
        self.region = region;
        self
    }

    pub fn width(&self) -> usize {
        self.uniform_dim + self.categories
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0
    }

    fn fill_uniform<R: Rng + ?Sized>(&self, row: &mut [f64], rng: &mut R) {
        loop {
            for x in row.iter_mut() {
                *x = rng.random_range(-1.0..=1.0);
            }
            if self.region.accepts(row) {
                return;
            }
        }
    }
}

/// `count` noise rows drawn from the prior.
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorSpec, count: usize, rng: &mut R) -> Mat {
    let w = prior.width();
    let mut out = Mat::zeros(count, w);
    let mut buf = vec![0.0; prior.uniform_dim];
    for i in 0..count {
        if prior.uniform_dim > 0 {
            prior.fill_uniform(&mut buf, rng);
            for (j, x) in buf.iter().enumerate() {
                out[(i, j)] = *x;
            }
        }
        if prior.categories > 0 {
            let c = rng.random_range(0..prior.categories);
            out[(i, prior.uniform_dim + c)] = 1.0;
        }
    }
    out
}

/// `n·k` noise rows where row `i·k + j` carries the one-hot of category `j`.
/// The uniform block, if any, is still sampled.
pub fn enumerate_prior<R: Rng + ?Sized>(
    prior: &PriorSpec,
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<Mat> {
    if prior.categories != k {
        return Err(Error::InvalidArgument(format!(
            "enumeration needs K == categories, got K={k}, categories={}",
            prior.categories
        )));
    }
    let mut out = sample_prior(
        &PriorSpec::uniform(prior.uniform_dim).with_region(prior.region),
        n * k,
        rng,
    )
    .resize_horizontally(prior.width(), 0.0);
    for i in 0..n {
        for j in 0..k {
            out[(i * k + j, prior.uniform_dim + j)] = 1.0;
        }
    }
    Ok(out)
}

/// How prior noise is combined with the decoder input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Noise concatenated to the features, sampled independently per output.
    #[default]
    InputConcat,
    /// Noise concatenated to the features, every category used exactly once.
    InputEnumerate,
    /// No noise input; the decoder emits K·d_X outputs.
    OutputHeads,
}

/// K reconstructions per sample, stored as `n·k` rows with sample-major
/// layout (row `i·k + j` is output `j` of sample `i`).
#[derive(Debug, Clone, Copy)]
pub struct Fan<'g> {
    pub values: Tensor<'g>,
    pub n: usize,
    pub k: usize,
}

impl<'g> Fan<'g> {
    pub fn new(values: Tensor<'g>, n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if values.nrows() != n * k {
            return Err(Error::ShapeMismatch(format!(
                "fan needs {} rows for N={n}, K={k}, got {}",
                n * k,
                values.nrows()
            )));
        }
        Ok(Self { values, n, k })
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

fn decoder_noise<R: Rng + ?Sized>(
    prior: &PriorSpec,
    n: usize,
    k: usize,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<Mat> {
    match mode {
        DecodeMode::InputConcat => Ok(sample_prior(prior, n * k, rng)),
        DecodeMode::InputEnumerate => enumerate_prior(prior, n, k, rng),
        DecodeMode::OutputHeads => Ok(Mat::zeros(n * k, 0)),
    }
}

fn check_decoder(
    in_dim: usize,
    out_dim: usize,
    d_y: usize,
    prior: &PriorSpec,
    k: usize,
    mode: DecodeMode,
) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let expected = match mode {
        DecodeMode::OutputHeads => d_y,
        _ => d_y + prior.width(),
    };
    if in_dim != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: in_dim,
        });
    }
    if mode == DecodeMode::OutputHeads && out_dim % k != 0 {
        return Err(Error::InvalidArgument(format!(
            "output-head decoder width {out_dim} is not a multiple of K={k}"
        )));
    }
    Ok(())
}

/// Decodes every feature row K times, returning an N×K×d_X fan.
pub fn mixture_decode<'g, R: Rng + ?Sized>(
    dec: &BoundMlp<'g>,
    y: Tensor<'g>,
    prior: &PriorSpec,
    k: usize,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<Fan<'g>> {
    check_decoder(dec.input_dim(), dec.output_dim(), y.ncols(), prior, k, mode)?;
    let n = y.nrows();
    let g = y.graph();
    let out = match mode {
        DecodeMode::OutputHeads => {
            let d = dec.output_dim() / k;
            dec.forward(y)?.reshape(n * k, d)
        }
        _ => {
            let noise = decoder_noise(prior, n, k, mode, rng)?;
            let base = if k == 1 { y } else { y.repeat_rows(k) };
            let input = if noise.ncols() == 0 {
                base
            } else {
                Tensor::concat_cols(&[base, g.constant(noise)])
            };
            dec.forward(input)?
        }
    };
    Fan::new(out, n, k)
}

/// Graph-free [`mixture_decode`]; returns the `n·k`×d_X fan matrix.
pub fn mixture_decode_values<R: Rng + ?Sized>(
    dec: &MlpNetwork,
    y: &Mat,
    prior: &PriorSpec,
    k: usize,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<Mat> {
    check_decoder(dec.input_dim(), dec.output_dim(), y.ncols(), prior, k, mode)?;
    let n = y.nrows();
    match mode {
        DecodeMode::OutputHeads => {
            let out = dec.forward_values(y)?;
            let d = out.ncols() / k;
            Ok(Mat::from_fn(n * k, d, |r, c| out[(r / k, (r % k) * d + c)]))
        }
        _ => {
            let noise = decoder_noise(prior, n, k, mode, rng)?;
            let w = y.ncols();
            let input = Mat::from_fn(n * k, w + noise.ncols(), |r, c| {
                if c < w {
                    y[(r / k, c)]
                } else {
                    noise[(r, c - w)]
                }
            });
            dec.forward_values(&input)
        }
    }
}

/// Trajectories produced by [`recursive_rollout`].
#[derive(Debug, Clone)]
pub struct Rollout {
    /// `steps + 1` matrices of B×d positions, starting with x0.
    pub path: Vec<Mat>,
    /// Per step, the `B·K`×d candidate fan (when requested).
    pub fans: Option<Vec<Mat>>,
}

/// Feeds the decoder its own output: at each step K candidates are decoded
/// from the current position and one is chosen uniformly at random. `x0`
/// holds one starting point per row, so many trajectories run at once.
#[allow(clippy::too_many_arguments)]
pub fn recursive_rollout<R: Rng + ?Sized>(
    dec: &MlpNetwork,
    x0: &Mat,
    steps: usize,
    k: usize,
    prior: &PriorSpec,
    mode: DecodeMode,
    keep_fans: bool,
    rng: &mut R,
) -> Result<Rollout> {
    if steps < 1 {
        return Err(Error::InvalidArgument(
            "rollout needs at least one step".into(),
        ));
    }
    let b = x0.nrows();
    let mut path = vec![x0.clone()];
    let mut fans = keep_fans.then(Vec::new);
    for _ in 0..steps {
        let cur = path.last().unwrap();
        let fan = mixture_decode_values(dec, cur, prior, k, mode, rng)?;
        if fan.ncols() != x0.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x0.ncols(),
                got: fan.ncols(),
            });
        }
        let mut next = Mat::zeros(b, fan.ncols());
        for i in 0..b {
            let pick = rng.random_range(0..k);
            next.row_mut(i).copy_from(&fan.row(i * k + pick));
        }
        if let Some(f) = fans.as_mut() {
            f.push(fan);
        }
        path.push(next);
    }
    Ok(Rollout { path, fans })
}

/// Adam moments for a fixed list of parameter matrices.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl OptimizerState {
    pub fn adam(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// One Adam step that *increases* the objective (gradient ascent).
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: Vec<&mut Mat>,
    grads: &[Mat],
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {i}: {:?} vs {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    if state.m.is_empty() {
        state.m = grads
            .iter()
            .map(|g| Mat::zeros(g.nrows(), g.ncols()))
            .collect();
        state.v = state.m.clone();
    } else if state.m.len() != grads.len()
        || state
            .m
            .iter()
            .zip(grads)
            .any(|(m, g)| m.shape() != g.shape())
    {
        return Err(Error::ShapeMismatch(
            "optimizer buffers do not match parameters".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 / (1.0 - b1.powi(t));
    let c2 = 1.0 / (1.0 - b2.powi(t));
    for ((p, g), (m, v)) in params
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for idx in 0..g.len() {
            let gi = g[idx];
            m[idx] = b1 * m[idx] + (1.0 - b1) * gi;
            v[idx] = b2 * v[idx] + (1.0 - b2) * gi * gi;
            let mh = m[idx] * c1;
            let vh = v[idx] * c2;
            p[idx] += state.lr * mh / (vh.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Draws a standard normal matrix.
pub fn randn<R: Rng + ?Sized>(r: usize, c: usize, rng: &mut R) -> Mat {
    let mut m = Mat::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetRecord {
    widths: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    networks: Vec<(String, NetRecord)>,
}

impl MlpNetwork {
    fn to_record(&self) -> NetRecord {
        let mut params = Vec::with_capacity(self.n_params());
        for p in self.params() {
            // row-major flattening
            for i in 0..p.nrows() {
                for j in 0..p.ncols() {
                    params.push(p[(i, j)]);
                }
            }
        }
        NetRecord {
            widths: self.widths.clone(),
            hidden: self.hidden,
            output: self.output,
            params,
        }
    }

    fn from_record(r: &NetRecord) -> Result<Self> {
        let mut net = Self::zeros(&r.widths, r.hidden, r.output)?;
        if r.params.len() != net.n_params() {
            return Err(Error::Malformed(format!(
                "checkpoint has {} parameters, architecture needs {}",
                r.params.len(),
                net.n_params()
            )));
        }
        let mut it = r.params.iter();
        for p in net.params_mut() {
            for i in 0..p.nrows() {
                for j in 0..p.ncols() {
                    p[(i, j)] = *it.next().unwrap();
                }
            }
        }
        Ok(net)
    }
}

/// Writes named networks to a versioned JSON checkpoint.
pub fn save_checkpoint(path: &Path, nets: &[(&str, &MlpNetwork)]) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        networks: nets
            .iter()
            .map(|(n, net)| (n.to_string(), net.to_record()))
            .collect(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::Malformed(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads every network from a checkpoint, in the order they were saved.
pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, MlpNetwork)>> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Malformed(format!("corrupt checkpoint: {e}")))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    file.networks
        .iter()
        .map(|(n, r)| Ok((n.clone(), MlpNetwork::from_record(r)?)))
        .collect()
}
