//! Training loops for every loss selector.

use crate::config::{DatasetSpec, ExperimentConfig, LossKind};
use crate::heatmap::{feature_heatmap, write_heatmap_csv};
use anyhow::{anyhow, bail, Context, Result};
use gmbound::baselines::{mine_objective, shuffled, MineEstimator, MineVariant};
use gmbound::bounds::{
    estimate_cost_terms, estimate_p_cond_norm, estimate_renyi_mi, estimate_shannon_mi,
    highdim_cost_bound, make_noisy_pairs, p_cond_norm_tensor, renyi_mi_tensor, shannon_mi_tensor,
    BoundMode, BoundReport,
};
use gmbound::data::{gen_toy, image_surrogate, load_idx_subset, simulate_random_walk};
use gmbound::linalg_ad::{Graph, Tensor};
use gmbound::losses::{
    conditional_nip_cost, elbo_nuclear_cost, kl_mdn_cost, nip_cost, nuclear_cost, LossConfig,
};
use gmbound::nn::{
    load_checkpoint, mixture_decode, mixture_decode_values, optimizer_step, randn, sample_prior,
    save_checkpoint, DecodeMode, MlpNetwork, OptimizerState, PriorSpec,
};
use gmbound::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

const INIT_SALT: u64 = 0x5eed_0001;
const EVAL_SALT: u64 = 0x5eed_0002;

/// Training data: samples X and, for conditional data, the given features.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x: Mat,
    pub cond: Option<Mat>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    Ok(match &cfg.dataset {
        DatasetSpec::Toy { kind, n, seed } => Prepared {
            x: gen_toy(
                *kind,
                n.unwrap_or(kind.default_n()),
                seed.unwrap_or(cfg.seed),
            )?
            .samples,
            cond: None,
        },
        DatasetSpec::RandomWalk {
            trials,
            length,
            seed,
        } => {
            let w = simulate_random_walk(*trials, *length, seed.unwrap_or(cfg.seed))?;
            let (from, to) = w.transitions();
            Prepared {
                x: to,
                cond: Some(from),
            }
        }
        DatasetSpec::Idx { path, count } => Prepared {
            x: load_idx_subset(path, *count)?.samples,
            cond: None,
        },
        DatasetSpec::ImageSurrogate { n, side, seed } => Prepared {
            x: image_surrogate(*n, *side, seed.unwrap_or(cfg.seed))?.samples,
            cond: None,
        },
    })
}

/// Every network a run may train.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub generator: Option<MlpNetwork>,
    pub encoder: Option<MlpNetwork>,
    pub decoder: Option<MlpNetwork>,
    pub critic: Option<MineEstimator>,
}

impl Models {
    pub fn named(&self) -> Vec<(&str, &MlpNetwork)> {
        let mut out = Vec::new();
        if let Some(n) = &self.generator {
            out.push(("generator", n));
        }
        if let Some(n) = &self.encoder {
            out.push(("encoder", n));
        }
        if let Some(n) = &self.decoder {
            out.push(("decoder", n));
        }
        if let Some(c) = &self.critic {
            out.push(("critic", &c.network));
        }
        out
    }

    fn trainable_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = Vec::new();
        for n in [&mut self.generator, &mut self.encoder, &mut self.decoder]
            .into_iter()
            .flatten()
        {
            out.extend(n.params_mut());
        }
        out
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Noise fed to an MDN generator.
fn mdn_prior(cfg: &ExperimentConfig) -> PriorSpec {
    if cfg.model.prior.is_empty() {
        PriorSpec::uniform(cfg.model.noise_dim)
    } else {
        cfg.model.prior
    }
}

fn decoder_input(cfg: &ExperimentConfig, feat: usize) -> usize {
    match cfg.model.decode_mode {
        DecodeMode::OutputHeads => feat,
        _ => feat + cfg.model.prior.width(),
    }
}

pub fn build_models<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    dx: usize,
    has_cond: bool,
    rng: &mut R,
) -> Result<Models> {
    let m = &cfg.model;
    let h = &m.hidden;
    let act = m.hidden_activation;
    let mut out = Models::default();
    let encoder = |rng: &mut R| {
        MlpNetwork::new(
            &widths(dx, h, m.feature_dim),
            act,
            m.feature_activation,
            rng,
        )
    };
    match cfg.loss {
        LossKind::Kl | LossKind::Nip | LossKind::Nuclear => {
            let p = mdn_prior(cfg);
            out.generator = Some(MlpNetwork::new(
                &widths(p.width(), h, dx),
                act,
                m.output_activation,
                rng,
            )?);
        }
        LossKind::CondNip => {
            let feat = if has_cond { 1 } else { m.feature_dim };
            if !has_cond {
                out.encoder = Some(encoder(rng)?);
            }
            let dout = if m.decode_mode == DecodeMode::OutputHeads {
                m.k * dx
            } else {
                dx
            };
            out.decoder = Some(MlpNetwork::new(
                &widths(decoder_input(cfg, feat), h, dout),
                act,
                m.output_activation,
                rng,
            )?);
        }
        LossKind::ElboNuclear | LossKind::AeMse => {
            out.encoder = Some(encoder(rng)?);
            out.decoder = Some(MlpNetwork::new(
                &widths(m.feature_dim, h, dx),
                act,
                m.output_activation,
                rng,
            )?);
        }
        LossKind::MaxBound | LossKind::SMi | LossKind::RMi => {
            out.encoder = Some(encoder(rng)?);
        }
        LossKind::MineS | LossKind::MineR => {
            out.encoder = Some(encoder(rng)?);
            let variant = if cfg.loss == LossKind::MineS {
                MineVariant::Shannon
            } else {
                MineVariant::Renyi
            };
            out.critic = Some(MineEstimator::new(
                dx,
                m.feature_dim,
                &m.critic_hidden,
                variant,
                rng,
            )?);
        }
    }
    Ok(out)
}

fn loss_config(cfg: &ExperimentConfig, dx: usize) -> Result<LossConfig> {
    let v_q = cfg.v_q()?;
    let v_p = if cfg.loss == LossKind::CondNip {
        cfg.v_x()?
    } else {
        cfg.variances.v_p.unwrap_or(v_q)
    };
    let stabilized = cfg
        .stabilized
        .unwrap_or(!(cfg.loss == LossKind::CondNip && BoundMode::for_dim(dx) == BoundMode::LowDim));
    Ok(LossConfig {
        v_p,
        v_q,
        stabilized,
        epsilon: 1e-12,
        trainable_params: false,
        allow_unequal: true,
    })
}

fn rows(x: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn batch_indices<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Vec<usize> {
    if b >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, b).into_vec()
    }
}

/// Scalar objective of one training step, built on `g`.
#[allow(clippy::too_many_arguments)]
fn objective<'g, R: Rng + ?Sized>(
    g: &'g Graph,
    cfg: &ExperimentConfig,
    models: &Models,
    binds: &Binds<'g>,
    xb: &Mat,
    cond: Option<&Mat>,
    rng: &mut R,
) -> Result<Tensor<'g>> {
    let m = &cfg.model;
    let x = g.constant(xb.clone());
    let b = xb.nrows();
    let dx = xb.ncols();
    let obj = match cfg.loss {
        LossKind::Kl | LossKind::Nip | LossKind::Nuclear => {
            let noise = sample_prior(&mdn_prior(cfg), m.k, rng);
            let xg = binds
                .generator
                .as_ref()
                .unwrap()
                .forward(g.constant(noise))?;
            let lc = loss_config(cfg, dx)?;
            match cfg.loss {
                LossKind::Kl => kl_mdn_cost(x, xg, &lc)?,
                LossKind::Nip => nip_cost(x, xg, &lc)?.ratio,
                _ => nuclear_cost(x, xg, lc.v_q)?,
            }
        }
        LossKind::CondNip => {
            let y = match cond {
                Some(c) => g.constant(c.clone()),
                None => binds.encoder.as_ref().unwrap().forward(x)?,
            };
            let y_hat = y.add(g.constant(randn(b, y.ncols(), rng) * cfg.v_y()?.sqrt()));
            let fan = mixture_decode(
                binds.decoder.as_ref().unwrap(),
                y_hat,
                &m.prior,
                m.k,
                m.decode_mode,
                rng,
            )?;
            conditional_nip_cost(x, &fan, &loss_config(cfg, dx)?)?.cost
        }
        LossKind::ElboNuclear => {
            let ygen = binds.encoder.as_ref().unwrap().forward(x)?;
            let yp = g.constant(sample_prior(&m.prior, b, rng));
            let xgen = binds.decoder.as_ref().unwrap().forward(yp)?;
            elbo_nuclear_cost(x, xgen, yp, ygen, cfg.v_x()?, cfg.v_y()?)?
        }
        LossKind::AeMse => {
            let y = binds.encoder.as_ref().unwrap().forward(x)?;
            let xr = binds.decoder.as_ref().unwrap().forward(y)?;
            x.sub(xr).square().mean().neg()
        }
        LossKind::MaxBound | LossKind::SMi | LossKind::RMi | LossKind::MineS | LossKind::MineR => {
            let (vx, vy) = (cfg.v_x()?, cfg.v_y()?);
            let y = binds.encoder.as_ref().unwrap().forward(x)?;
            let x_hat = xb + randn(b, dx, rng) * vx.sqrt();
            let y_hat = y.add(g.constant(randn(b, y.ncols(), rng) * vy.sqrt()));
            match cfg.loss {
                LossKind::MaxBound => p_cond_norm_tensor(xb, &x_hat, y, y_hat, vx, vy)?,
                LossKind::SMi => shannon_mi_tensor(xb, &x_hat, y, y_hat, vx, vy)?,
                LossKind::RMi => renyi_mi_tensor(xb, &x_hat, y, y_hat, vx, vy)?,
                _ => {
                    let est = models.critic.as_ref().unwrap();
                    let perm = shuffled(b, rng);
                    mine_objective(
                        est.variant,
                        binds.critic.as_ref().unwrap(),
                        g.constant(x_hat),
                        y_hat,
                        &perm,
                    )?
                }
            }
        }
    };
    Ok(obj)
}

struct Binds<'g> {
    generator: Option<gmbound::nn::BoundMlp<'g>>,
    encoder: Option<gmbound::nn::BoundMlp<'g>>,
    decoder: Option<gmbound::nn::BoundMlp<'g>>,
    critic: Option<gmbound::nn::BoundMlp<'g>>,
}

impl<'g> Binds<'g> {
    fn new(models: &Models, g: &'g Graph) -> Self {
        Self {
            generator: models.generator.as_ref().map(|n| n.bind(g)),
            encoder: models.encoder.as_ref().map(|n| n.bind(g)),
            decoder: models.decoder.as_ref().map(|n| n.bind(g)),
            critic: models.critic.as_ref().map(|c| c.network.bind(g)),
        }
    }

    fn main_grads(&self) -> Vec<Mat> {
        let mut out = Vec::new();
        for b in [&self.generator, &self.encoder, &self.decoder]
            .into_iter()
            .flatten()
        {
            out.extend(b.grads());
        }
        out
    }
}

/// Evaluation batch with its fixed noise stream.
struct EvalSet {
    x: Mat,
    cond: Option<Mat>,
}

/// Logged metrics, averaged over `eval.noise_draws` noise realisations that
/// are the same at every logged iteration.
fn evaluate(
    cfg: &ExperimentConfig,
    models: &Models,
    ev: &EvalSet,
    iteration: usize,
) -> Result<BoundReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_SALT);
    let draws = cfg.eval.noise_draws.max(1);
    let mut acc = evaluate_once(cfg, models, ev, iteration, &mut rng)?;
    if draws == 1 {
        return Ok(acc);
    }
    let add_opt = |a: &mut Option<f64>, b: Option<f64>| {
        if let (Some(x), Some(y)) = (a.as_mut(), b) {
            *x += y;
        }
    };
    for _ in 1..draws {
        let r = evaluate_once(cfg, models, ev, iteration, &mut rng)?;
        acc.cost += r.cost;
        acc.bound += r.bound;
        acc.inner += r.inner;
        acc.q_norm += r.q_norm;
        acc.p_cond_norm += r.p_cond_norm;
        add_opt(&mut acc.shannon_mi, r.shannon_mi);
        add_opt(&mut acc.renyi_mi, r.renyi_mi);
    }
    let k = draws as f64;
    acc.cost /= k;
    acc.bound /= k;
    acc.inner /= k;
    acc.q_norm /= k;
    acc.p_cond_norm /= k;
    acc.shannon_mi = acc.shannon_mi.map(|v| v / k);
    acc.renyi_mi = acc.renyi_mi.map(|v| v / k);
    Ok(acc)
}

fn evaluate_once(
    cfg: &ExperimentConfig,
    models: &Models,
    ev: &EvalSet,
    iteration: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BoundReport> {
    let m = &cfg.model;
    let x = &ev.x;
    let dx = x.ncols();
    let n = x.nrows();
    let mut rep = BoundReport {
        iteration,
        cost: f64::NAN,
        bound: f64::NAN,
        inner: f64::NAN,
        q_norm: f64::NAN,
        p_cond_norm: f64::NAN,
        shannon_mi: None,
        renyi_mi: None,
    };
    let low = BoundMode::for_dim(dx) == BoundMode::LowDim;
    match cfg.loss {
        LossKind::Kl | LossKind::Nip | LossKind::Nuclear | LossKind::ElboNuclear => {
            let g = Graph::new();
            let xt = g.constant(x.clone());
            let lc = if cfg.loss == LossKind::ElboNuclear {
                None
            } else {
                Some(loss_config(cfg, dx)?)
            };
            match cfg.loss {
                LossKind::ElboNuclear => {
                    let ygen = models
                        .encoder
                        .as_ref()
                        .unwrap()
                        .bind_frozen(&g)
                        .forward(xt)?;
                    let yp = g.constant(sample_prior(&m.prior, n, rng));
                    let xgen = models
                        .decoder
                        .as_ref()
                        .unwrap()
                        .bind_frozen(&g)
                        .forward(yp)?;
                    rep.cost =
                        elbo_nuclear_cost(xt, xgen, yp, ygen, cfg.v_x()?, cfg.v_y()?)?.item();
                    rep.bound = n as f64;
                }
                _ => {
                    let noise = sample_prior(&mdn_prior(cfg), m.k, rng);
                    let xg = models
                        .generator
                        .as_ref()
                        .unwrap()
                        .bind_frozen(&g)
                        .forward(g.constant(noise))?;
                    let lc = lc.unwrap();
                    match cfg.loss {
                        LossKind::Kl => rep.cost = kl_mdn_cost(xt, xg, &lc)?.item(),
                        LossKind::Nip => {
                            let t = nip_cost(xt, xg, &lc)?;
                            rep.cost = t.ratio.item();
                            rep.bound = t.p_norm;
                            rep.inner = t.inner.item();
                            rep.q_norm = t.q_norm.item();
                        }
                        _ => {
                            rep.cost = nuclear_cost(xt, xg, lc.v_q)?.item();
                            let (a, b) = (n as f64, m.k as f64);
                            rep.bound = (a * b * a.min(b)).sqrt();
                        }
                    }
                }
            }
            return Ok(rep);
        }
        _ => {}
    }
    let (vx, vy) = match cfg.loss {
        LossKind::AeMse => (
            cfg.variances.v_x.unwrap_or(0.001),
            cfg.variances.v_y.unwrap_or(0.001),
        ),
        _ => (cfg.v_x()?, cfg.v_y()?),
    };
    let y = match &ev.cond {
        Some(c) => c.clone(),
        None => models.encoder.as_ref().unwrap().forward_values(x)?,
    };
    let p = make_noisy_pairs(x, &y, vx, vy, rng)?;
    if low {
        rep.p_cond_norm = estimate_p_cond_norm(&p)?;
        rep.bound = rep.p_cond_norm;
        if cfg.eval.mi {
            rep.shannon_mi = Some(estimate_shannon_mi(&p)?);
            rep.renyi_mi = Some(estimate_renyi_mi(&p)?);
        }
    }
    match cfg.loss {
        LossKind::CondNip => {
            let dec = models.decoder.as_ref().unwrap();
            let recon = mixture_decode_values(dec, &p.y_hat, &m.prior, m.k, m.decode_mode, rng)?;
            if low {
                let t = estimate_cost_terms(&p, &recon, m.k, cfg.v_q()?)?;
                rep.cost = t.cost;
                rep.inner = t.inner;
                rep.q_norm = t.q_norm;
            } else {
                let (c, b) =
                    highdim_cost_bound(x, &recon, m.k, &p.y, &p.y_hat, vx, vy, cfg.v_q()?)?;
                rep.cost = c;
                rep.bound = b;
            }
        }
        LossKind::AeMse => {
            let xr = models.decoder.as_ref().unwrap().forward_values(&y)?;
            rep.cost = -(x - xr).map(|v| v * v).mean();
        }
        LossKind::MaxBound => rep.cost = rep.p_cond_norm,
        LossKind::SMi => rep.cost = rep.shannon_mi.map_or_else(|| estimate_shannon_mi(&p), Ok)?,
        LossKind::RMi => rep.cost = rep.renyi_mi.map_or_else(|| estimate_renyi_mi(&p), Ok)?,
        LossKind::MineS | LossKind::MineR => {
            let est = models.critic.as_ref().unwrap();
            let g = Graph::new();
            let f = est.network.bind_frozen(&g);
            let perm = shuffled(n, rng);
            rep.cost = mine_objective(
                est.variant,
                &f,
                g.constant(p.x_hat.clone()),
                g.constant(p.y_hat.clone()),
                &perm,
            )?
            .item();
        }
        _ => unreachable!(),
    }
    Ok(rep)
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub models: Models,
    pub reports: Vec<BoundReport>,
    pub mi_columns: bool,
}

fn mi_columns(cfg: &ExperimentConfig, dx: usize) -> bool {
    cfg.eval.mi
        && !cfg.loss.is_mdn()
        && cfg.loss != LossKind::ElboNuclear
        && BoundMode::for_dim(dx) == BoundMode::LowDim
}

/// Runs the configured training loop in memory.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let data = load_data(cfg)?;
    let init = match &cfg.init_checkpoint {
        Some(p) => Some(models_from_checkpoint(cfg, &data, p)?),
        None => None,
    };
    train_with(cfg, &data, init)
}

/// Networks for `cfg` taken from a checkpoint. Every network the config
/// needs must be present with the same layer widths and activations.
pub fn models_from_checkpoint(
    cfg: &ExperimentConfig,
    data: &Prepared,
    path: &Path,
) -> Result<Models> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_SALT);
    let mut models = build_models(cfg, data.x.ncols(), data.cond.is_some(), &mut rng)?;
    let saved = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    let slots: [(&str, Option<&mut MlpNetwork>); 4] = [
        ("generator", models.generator.as_mut()),
        ("encoder", models.encoder.as_mut()),
        ("decoder", models.decoder.as_mut()),
        ("critic", models.critic.as_mut().map(|c| &mut c.network)),
    ];
    for (name, slot) in slots {
        let Some(slot) = slot else { continue };
        let (_, net) = saved
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| anyhow!("checkpoint {} has no {name} network", path.display()))?;
        if net.widths() != slot.widths()
            || net.hidden() != slot.hidden()
            || net.output() != slot.output()
        {
            bail!(
                "{name} in {} has widths {:?}, the config needs {:?}",
                path.display(),
                net.widths(),
                slot.widths()
            );
        }
        *slot = net.clone();
    }
    Ok(models)
}

/// Like [`train`], optionally starting from given networks.
pub fn train_with(
    cfg: &ExperimentConfig,
    data: &Prepared,
    init: Option<Models>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let x = &data.x;
    let (n, dx) = x.shape();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_SALT);
    let mut models = match init {
        Some(m) => m,
        None => build_models(cfg, dx, data.cond.is_some(), &mut init_rng)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::adam(cfg.optimizer.lr);
    let mut critic_opt = OptimizerState::adam(cfg.optimizer.critic_lr.unwrap_or(cfg.optimizer.lr));
    let en = cfg.eval.n.min(n).max(2);
    let ev = EvalSet {
        x: x.rows(0, en).into_owned(),
        cond: data.cond.as_ref().map(|c| c.rows(0, en).into_owned()),
    };
    let mut reports = Vec::new();
    for it in 0..=cfg.iterations {
        if it % cfg.log_every == 0 || it == cfg.iterations {
            let r = evaluate(cfg, &models, &ev, it)
                .with_context(|| format!("evaluating at iteration {it}"))?;
            log::info!("iter {it}: cost {:.6} bound {:.6}", r.cost, r.bound);
            reports.push(r);
        }
        if it == cfg.iterations {
            break;
        }
        let idx = batch_indices(n, cfg.batch_size, &mut rng);
        let xb = rows(x, &idx);
        let cb = data.cond.as_ref().map(|c| rows(c, &idx));
        let (grads, critic_grads) = {
            let g = Graph::new();
            let binds = Binds::new(&models, &g);
            let obj = objective(&g, cfg, &models, &binds, &xb, cb.as_ref(), &mut rng)
                .with_context(|| format!("loss {} at iteration {it}", cfg.loss.name()))?;
            let v = obj.item();
            if !v.is_finite() {
                bail!("non-finite loss {v} at iteration {it}");
            }
            g.backward(obj)
                .with_context(|| format!("backward at iteration {it}"))?;
            (binds.main_grads(), binds.critic.as_ref().map(|c| c.grads()))
        };
        optimizer_step(&mut opt, models.trainable_mut(), &grads)
            .with_context(|| format!("update at iteration {it}"))?;
        if let (Some(c), Some(cg)) = (models.critic.as_mut(), critic_grads) {
            optimizer_step(&mut critic_opt, c.network.params_mut(), &cg)?;
        }
    }
    Ok(TrainOutcome {
        models,
        reports,
        mi_columns: mi_columns(cfg, dx),
    })
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_metrics_csv(path: &Path, reports: &[BoundReport], mi: bool) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["iteration", "cost", "bound", "inner", "q_norm"];
    if mi {
        header.extend(["shannon_mi", "renyi_mi"]);
    }
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.iteration.to_string(),
            fmt(r.cost),
            fmt(r.bound),
            fmt(r.inner),
            fmt(r.q_norm),
        ];
        if mi {
            row.push(r.shannon_mi.map(fmt).unwrap_or_default());
            row.push(r.renyi_mi.map(fmt).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a metrics CSV back; missing values become NaN / None.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<BoundReport>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let expect = ["iteration", "cost", "bound", "inner", "q_norm"];
    if headers.len() < 5 || headers.iter().zip(expect).any(|(a, b)| a != b) {
        bail!("unexpected metrics header {:?}", headers);
    }
    let num = |s: &str| -> Result<f64> {
        if s.is_empty() {
            Ok(f64::NAN)
        } else {
            s.parse().map_err(|e| anyhow!("bad number '{s}': {e}"))
        }
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let opt = |i: usize| -> Result<Option<f64>> {
            match rec.get(i) {
                Some(s) if !s.is_empty() => Ok(Some(num(s)?)),
                _ => Ok(None),
            }
        };
        let bound = num(&rec[2])?;
        out.push(BoundReport {
            iteration: rec[0].parse()?,
            cost: num(&rec[1])?,
            bound,
            inner: num(&rec[3])?,
            q_norm: num(&rec[4])?,
            p_cond_norm: bound,
            shannon_mi: opt(5)?,
            renyi_mi: opt(6)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub loss: &'static str,
    pub iterations: usize,
    pub final_cost: f64,
    pub best_cost: f64,
    pub final_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics_csv: PathBuf,
    pub checkpoint: PathBuf,
    pub heatmap_csv: Option<PathBuf>,
    pub config_echo: PathBuf,
    pub summary: RunSummary,
}

/// Trains, then writes metrics, checkpoint, config echo and (if requested
/// and applicable) the feature heatmap into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let outcome = train(cfg)
        .with_context(|| format!("run with loss {} and seed {}", cfg.loss.name(), cfg.seed))?;
    let metrics_csv = out_dir.join("metrics.csv");
    write_metrics_csv(&metrics_csv, &outcome.reports, outcome.mi_columns)?;
    let checkpoint = out_dir.join("checkpoint.json");
    save_checkpoint(&checkpoint, &outcome.models.named())?;
    let config_echo = out_dir.join("config.json");
    std::fs::write(&config_echo, serde_json::to_string_pretty(cfg)?)?;
    let heatmap_csv = match (cfg.heatmap_resolution, &outcome.models.encoder) {
        (Some(res), Some(enc)) if enc.input_dim() == 2 && enc.output_dim() == 1 => {
            let p = out_dir.join("heatmap.csv");
            write_heatmap_csv(&p, &feature_heatmap(enc, res)?)?;
            Some(p)
        }
        _ => None,
    };
    let last = outcome
        .reports
        .last()
        .ok_or_else(|| anyhow!("no reports logged"))?;
    let best = outcome
        .reports
        .iter()
        .map(|r| r.cost)
        .fold(f64::NEG_INFINITY, f64::max);
    let summary = RunSummary {
        loss: cfg.loss.name(),
        iterations: cfg.iterations,
        final_cost: last.cost,
        best_cost: best,
        final_bound: (!last.bound.is_nan()).then_some(last.bound),
    };
    log::info!("{}", serde_json::to_string(&summary)?);
    Ok(RunArtifacts {
        metrics_csv,
        checkpoint,
        heatmap_csv,
        config_echo,
        summary,
    })
}
