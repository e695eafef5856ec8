use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::{adam_step, clip_global_norm, AdamState, TrainConfig};
use crate::autodiff::Graph;
use crate::data::FeatureBundle;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Metrics};
use crate::model::{model_forward, ModelConfig, ModelParameters, ParamVars};

/// Mean cross-entropy over `bundles` and its gradient for every parameter
/// tensor (fixed parameter order; a frozen embedding gets zeros).
pub fn batch_loss_and_grads<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    params: &ModelParameters,
    bundles: &[&FeatureBundle],
    training: bool,
    rng: &mut R,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let vars = ParamVars::trainable(&mut g, params);
    let loss = batch_loss_on(&mut g, cfg, params, &vars, bundles, training, rng)?;
    g.backward(loss)?;
    let grads = vars
        .in_order()
        .into_iter()
        .map(|v| {
            g.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; g.value(v).len()])
        })
        .collect();
    Ok((g.value(loss).item(), grads))
}

/// Mean cross-entropy only, without the backward sweep.
pub fn batch_loss<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    params: &ModelParameters,
    bundles: &[&FeatureBundle],
    training: bool,
    rng: &mut R,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars = ParamVars::trainable(&mut g, params);
    let loss = batch_loss_on(&mut g, cfg, params, &vars, bundles, training, rng)?;
    Ok(g.value(loss).item())
}

fn batch_loss_on<R: Rng + ?Sized>(
    g: &mut Graph,
    cfg: &ModelConfig,
    params: &ModelParameters,
    vars: &ParamVars,
    bundles: &[&FeatureBundle],
    training: bool,
    rng: &mut R,
) -> Result<crate::autodiff::Var> {
    let losses = bundles
        .iter()
        .map(|b| {
            let out = model_forward(g, cfg, params, vars, b, training, rng)?;
            g.cross_entropy_class(out.probs, b.label)
        })
        .collect::<Result<Vec<_>>>()?;
    g.mean(&losses)
}

/// Result of one pass over the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Mean per-example loss over the epoch.
    pub mean_loss: f64,
    /// Per-batch losses in execution order.
    pub batch_losses: Vec<f64>,
    /// Largest pre-clipping gradient norm seen.
    pub max_grad_norm: f64,
}

/// Shuffles `data` with `rng`, then for each mini-batch (the last one may be
/// short): training-mode forward, mean cross-entropy, backward, global-norm
/// clipping and an Adam step.
pub fn train_epoch(
    cfg: &ModelConfig,
    params: &mut ModelParameters,
    state: &mut AdamState,
    data: &[FeatureBundle],
    tcfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::invalid("train_epoch", "empty dataset"));
    }
    if tcfg.batch_size == 0 {
        return Err(Error::config("train.batch_size", "must be >= 1"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batch_losses = Vec::new();
    let mut max_grad_norm = 0.0f64;
    for (batch_id, idx) in order.chunks(tcfg.batch_size).enumerate() {
        let batch: Vec<&FeatureBundle> = idx.iter().map(|&i| &data[i]).collect();
        let (loss, mut grads) = batch_loss_and_grads(cfg, params, &batch, true, rng)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss} in batch {batch_id}")));
        }
        let norm = clip_global_norm(&mut grads, tcfg.clip_norm)
            .map_err(|e| Error::Numeric(format!("batch {batch_id}: {e}")))?;
        max_grad_norm = max_grad_norm.max(norm);
        adam_step(params, &grads, state, tcfg)?;
        total += loss * batch.len() as f64;
        batch_losses.push(loss);
    }
    Ok(EpochStats {
        mean_loss: total / data.len() as f64,
        batch_losses,
        max_grad_norm,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Option<Metrics>,
}

impl EpochRecord {
    /// `epoch \t train_loss \t dev_wa \t dev_ua` (dev columns `-` without a dev set).
    pub fn log_line(&self) -> String {
        match &self.dev {
            Some(m) => format!("{}\t{:.6}\t{:.6}\t{:.6}", self.epoch, self.train_loss, m.wa, m.ua),
            None => format!("{}\t{:.6}\t-\t-", self.epoch, self.train_loss),
        }
    }
}

pub const LOG_HEADER: &str = "epoch\ttrain_loss\tdev_wa\tdev_ua";

/// Outcome of [`fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from the (latest) epoch with the best dev WA (the final ones when
    /// there is no dev set).
    pub params: ModelParameters,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Trains for up to `tcfg.epochs` epochs. With a dev set, keeps the
/// parameters of the latest epoch reaching the best dev WA and stops once
/// `tcfg.patience` epochs pass without a strict improvement.
pub fn fit(
    cfg: &ModelConfig,
    mut params: ModelParameters,
    train: &[FeatureBundle],
    dev: Option<&[FeatureBundle]>,
    tcfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<FitOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut state = AdamState::for_params(&params);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParameters)> = None;
    let mut last_improvement = 0;
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{LOG_HEADER}").map_err(|e| Error::io("training log", e))?;
    }
    for epoch in 0..tcfg.epochs {
        let stats = train_epoch(cfg, &mut params, &mut state, train, tcfg, &mut rng)?;
        let dev_metrics = match dev {
            Some(d) if !d.is_empty() => Some(evaluate(cfg, &params, d)?.1),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            dev: dev_metrics,
        };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", record.log_line()).map_err(|e| Error::io("training log", e))?;
        }
        history.push(record);
        if let Some(m) = dev_metrics {
            let best_wa = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
            if m.wa > best_wa {
                last_improvement = epoch;
            }
            if m.wa >= best_wa {
                best = Some((m.wa, epoch, params.clone()));
            }
            if epoch - last_improvement >= tcfg.patience {
                break;
            }
        }
    }
    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, history.len().saturating_sub(1)),
    };
    Ok(FitOutcome {
        params,
        history,
        best_epoch,
    })
}
