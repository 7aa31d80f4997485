//! Experiment configuration, read from JSON.

use anyhow::{bail, Context, Result};
use gmbound::data::ToyKind;
use gmbound::nn::{Activation, DecodeMode, PriorSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Kl,
    Nip,
    Nuclear,
    ElboNuclear,
    CondNip,
    MaxBound,
    SMi,
    RMi,
    MineS,
    MineR,
    AeMse,
}

impl LossKind {
    /// Generator trained from noise alone (no encoder).
    pub fn is_mdn(self) -> bool {
        matches!(self, LossKind::Kl | LossKind::Nip | LossKind::Nuclear)
    }

    /// Only an encoder (plus possibly a critic) is trained.
    pub fn is_encoder_only(self) -> bool {
        matches!(
            self,
            LossKind::MaxBound | LossKind::SMi | LossKind::RMi | LossKind::MineS | LossKind::MineR
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Kl => "kl",
            LossKind::Nip => "nip",
            LossKind::Nuclear => "nuclear",
            LossKind::ElboNuclear => "elbo_nuclear",
            LossKind::CondNip => "cond_nip",
            LossKind::MaxBound => "max_bound",
            LossKind::SMi => "s_mi",
            LossKind::RMi => "r_mi",
            LossKind::MineS => "mine_s",
            LossKind::MineR => "mine_r",
            LossKind::AeMse => "ae_mse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    Toy {
        kind: ToyKind,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Transitions (x_t, x_{t+1}) of simulated walks; the decoder is
    /// conditioned on the current position and no encoder is trained.
    RandomWalk {
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default = "default_length")]
        length: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Idx {
        path: PathBuf,
        #[serde(default = "default_count")]
        count: usize,
    },
    ImageSurrogate {
        #[serde(default = "default_count")]
        n: usize,
        #[serde(default = "default_side")]
        side: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_trials() -> usize {
    300
}
fn default_length() -> usize {
    100
}
fn default_count() -> usize {
    800
}
fn default_side() -> usize {
    28
}
fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}
fn default_one() -> usize {
    1
}
fn default_noise_dim() -> usize {
    2
}
fn default_mine_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_lr() -> f64 {
    1e-3
}
fn default_log_every() -> usize {
    50
}
fn default_eval_n() -> usize {
    1000
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Feature dimension d_Y.
    #[serde(default = "default_one")]
    pub feature_dim: usize,
    /// Centres: generated samples per step for MDNs, reconstructions per
    /// sample for mixture decoders.
    #[serde(default = "default_one")]
    pub k: usize,
    /// Noise concatenated to the decoder input. For MDNs a uniform prior of
    /// `noise_dim` is used when this is empty.
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub decode_mode: DecodeMode,
    #[serde(default = "default_noise_dim")]
    pub noise_dim: usize,
    #[serde(default)]
    pub hidden_activation: Activation,
    #[serde(default)]
    pub feature_activation: Activation,
    /// Decoder output activation.
    #[serde(default = "linear")]
    pub output_activation: Activation,
    #[serde(default = "default_mine_hidden")]
    pub critic_hidden: Vec<usize>,
}

fn linear() -> Activation {
    Activation::Linear
}

impl Default for ModelSpec {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Variances {
    #[serde(default)]
    pub v_p: Option<f64>,
    #[serde(default)]
    pub v_q: Option<f64>,
    #[serde(default)]
    pub v_x: Option<f64>,
    #[serde(default)]
    pub v_y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Separate rate for the MINE critic; defaults to `lr`.
    #[serde(default)]
    pub critic_lr: Option<f64>,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            critic_lr: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    /// Samples used by the logged estimators (taken from the start of the data).
    #[serde(default = "default_eval_n")]
    pub n: usize,
    /// Also log the Shannon and Rényi MI estimates.
    #[serde(default = "default_true")]
    pub mi: bool,
    /// Noise realisations averaged per logged value.
    #[serde(default = "default_one")]
    pub noise_draws: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            n: default_eval_n(),
            mi: true,
            noise_draws: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    pub loss: LossKind,
    #[serde(default)]
    pub variances: Variances,
    /// Gaussian evaluation mode for the training cost. Defaults to
    /// stabilized for every loss except `cond_nip` on low-dimensional data.
    #[serde(default)]
    pub stabilized: Option<bool>,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub heatmap_resolution: Option<usize>,
    /// Start from the networks of an earlier run's checkpoint instead of a
    /// fresh initialisation. Names and shapes must match this config.
    #[serde(default)]
    pub init_checkpoint: Option<PathBuf>,
}

fn need(name: &str, v: Option<f64>, loss: LossKind) -> Result<f64> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => bail!(
            "variance {name} = {x} must be positive for loss {}",
            loss.name()
        ),
        None => bail!("loss {} requires variances.{name}", loss.name()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn v_p(&self) -> Result<f64> {
        need("v_p", self.variances.v_p.or(self.variances.v_x), self.loss)
    }
    pub fn v_q(&self) -> Result<f64> {
        need("v_q", self.variances.v_q, self.loss)
    }
    pub fn v_x(&self) -> Result<f64> {
        need("v_x", self.variances.v_x, self.loss)
    }
    pub fn v_y(&self) -> Result<f64> {
        need("v_y", self.variances.v_y, self.loss)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            bail!("iterations must be positive");
        }
        if self.batch_size < 2 {
            bail!("batch_size must be at least 2");
        }
        if self.log_every == 0 {
            bail!("log_every must be positive");
        }
        if self.model.k == 0 {
            bail!("model.k must be at least 1");
        }
        if self.model.hidden.is_empty() {
            bail!("model.hidden needs at least one layer");
        }
        if self.eval.noise_draws == 0 {
            bail!("eval.noise_draws must be at least 1");
        }
        if self.optimizer.lr <= 0.0 {
            bail!("optimizer.lr must be positive");
        }
        use LossKind::*;
        match self.loss {
            Kl | Nuclear => {
                self.v_q()?;
            }
            Nip => {
                self.v_p()?;
                self.v_q()?;
            }
            ElboNuclear => {
                self.v_x()?;
                self.v_y()?;
                if self.model.prior.uniform_dim != self.model.feature_dim
                    || self.model.prior.categories != 0
                {
                    bail!("elbo_nuclear samples features from the prior: prior must be uniform with uniform_dim = feature_dim");
                }
            }
            CondNip => {
                self.v_x()?;
                self.v_y()?;
                self.v_q()?;
            }
            MaxBound | SMi | RMi | MineS | MineR => {
                self.v_x()?;
                self.v_y()?;
            }
            AeMse => {}
        }
        if matches!(self.dataset, DatasetSpec::RandomWalk { .. }) && self.loss != CondNip {
            bail!("random walk data is only used with cond_nip");
        }
        Ok(())
    }
}
