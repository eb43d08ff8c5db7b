//! Training steps, loops and the HDR fine-tuning stage.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::{AuxHead, Network, ParamGroup, Prediction};
use crate::dataset::TrainingPair;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::loss::{loss_hdr, loss_ldr, LossOutput, TrainProgress};
use crate::rng::derive_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Ldr,
    Hdr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Progress `e` added per step; `None` uses `batch_size / pairs`.
    pub batch_fraction: Option<f64>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 8,
            batch_fraction: None,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub loss: f64,
    pub terms: Vec<(String, f64)>,
    pub e: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
    pub final_e: f64,
}

fn sample_loss(pred: &Prediction, t_rgb: &Image, t_aux: &Image, progress: &TrainProgress, mode: LossMode) -> Result<LossOutput> {
    match mode {
        LossMode::Ldr => loss_ldr(&pred.rgb, &pred.aux, t_rgb, t_aux, progress),
        LossMode::Hdr => loss_hdr(&pred.rgb, &pred.aux, t_rgb, t_aux, progress),
    }
}

/// Mean loss over a batch of predictions and the per-sample output
/// gradients of that mean, as `(aux, rgb)` pairs.
pub fn batch_loss(
    preds: &[Prediction],
    targets: &[(&Image, &Image)],
    progress: &TrainProgress,
    mode: LossMode,
) -> Result<(f64, Vec<(String, f64)>, Vec<(Image, Image)>)> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::dims("batch and targets differ in length"));
    }
    let n = preds.len() as f64;
    let mut total = 0.0;
    let mut terms: Vec<(String, f64)> = Vec::new();
    let mut grads = Vec::with_capacity(preds.len());
    for (p, (t_rgb, t_aux)) in preds.iter().zip(targets) {
        let out = sample_loss(p, t_rgb, t_aux, progress, mode)?;
        total += out.total / n;
        for (i, (name, v)) in out.terms.iter().enumerate() {
            if terms.len() <= i {
                terms.push((name.to_string(), 0.0));
            }
            terms[i].1 += v / n;
        }
        grads.push((out.grad_aux.map(|g| g / n), out.grad_rgb.map(|g| g / n)));
    }
    Ok((total, terms, grads))
}

/// One forward / backward / Adam update on a batch. Advances `progress`
/// by `batch_fraction`; a non-finite loss aborts before any update.
pub fn train_step(
    net: &mut Network,
    inputs: &[Image],
    targets: &[(&Image, &Image)],
    adam: &mut AdamState,
    progress: &mut TrainProgress,
    mode: LossMode,
    batch_fraction: f64,
) -> Result<StepReport> {
    let preds = net.forward(inputs)?;
    let (loss, terms, grads) = batch_loss(&preds, targets, progress, mode)?;
    net.zero_grad();
    net.backward(&grads)?;
    if let Some(p) = net.params().iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
        return Err(Error::Numeric(format!("non-finite gradient in {}", p.name)));
    }
    adam.step(net)?;
    progress.advance(batch_fraction);
    Ok(StepReport {
        loss,
        terms,
        e: progress.e,
    })
}

fn targets(pairs: &[&TrainingPair]) -> Vec<(Image, Image)> {
    pairs.iter().map(|p| (p.target_rgb.clone(), p.target_aux.clone())).collect()
}

/// Mean loss over `pairs` at the given progress, without updating.
pub fn evaluate(net: &Network, pairs: &[TrainingPair], progress: &TrainProgress, mode: LossMode) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::domain("evaluation needs at least one pair"));
    }
    let mut total = 0.0;
    for p in pairs {
        let pred = net.predict(&p.input)?;
        total += sample_loss(&pred, &p.target_rgb, &p.target_aux, progress, mode)?.total;
    }
    Ok(total / pairs.len() as f64)
}

/// Runs `cfg.steps` minibatch steps over shuffled epochs of `pairs`.
/// `on_step` sees every step report.
pub fn train(
    net: &mut Network,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    adam: &mut AdamState,
    progress: &mut TrainProgress,
    mode: LossMode,
    mut on_step: impl FnMut(usize, &StepReport),
) -> Result<TrainLog> {
    if pairs.is_empty() {
        return Err(Error::domain("training needs at least one pair"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::domain("batch size must be positive"));
    }
    if cfg.batch_fraction.is_some_and(|f| !(f.is_finite() && f >= 0.0)) {
        return Err(Error::domain("batch fraction must be finite and nonnegative"));
    }
    let batch = cfg.batch_size.min(pairs.len());
    let fraction = cfg.batch_fraction.unwrap_or(batch as f64 / pairs.len() as f64);
    let mut rng = derive_rng(cfg.seed, 0x747261696e);
    let mut order: Vec<usize> = Vec::new();
    let mut log = TrainLog::default();
    for step in 0..cfg.steps {
        if order.len() < batch {
            let mut epoch: Vec<usize> = (0..pairs.len()).collect();
            epoch.shuffle(&mut rng);
            order.extend(epoch);
        }
        let idx: Vec<usize> = order.drain(..batch).collect();
        let chosen: Vec<&TrainingPair> = idx.iter().map(|&i| &pairs[i]).collect();
        let inputs: Vec<Image> = chosen.iter().map(|p| p.input.clone()).collect();
        let owned = targets(&chosen);
        let refs: Vec<(&Image, &Image)> = owned.iter().map(|(a, b)| (a, b)).collect();
        let report = train_step(net, &inputs, &refs, adam, progress, mode, fraction)?;
        on_step(step, &report);
        log.losses.push(report.loss);
    }
    log.final_e = progress.e;
    Ok(log)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub e_start: f64,
    pub e_end: f64,
    pub encoder_hash_before: u64,
    pub encoder_hash_after: u64,
    pub losses: Vec<f64>,
}

/// HDR stage: re-draws the last mask-head layer, switches that head to a
/// linear log-intensity output, freezes the encoder (through the shared
/// fully-connected layer) and trains the decoders with the HDR loss,
/// continuing `progress`.
pub fn finetune_hdr(
    net: &mut Network,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    progress: &mut TrainProgress,
    on_step: impl FnMut(usize, &StepReport),
) -> Result<FinetuneReport> {
    let e_start = progress.e;
    let encoder_hash_before = net.group_hash(ParamGroup::Encoder);
    net.reinit_final_mask(cfg.seed ^ 0x68_6472);
    net.set_aux_head(AuxHead::Intensity);
    net.set_frozen(&[ParamGroup::Encoder]);
    let mut adam = AdamState::new(net, cfg.adam);
    let log = train(net, pairs, cfg, &mut adam, progress, LossMode::Hdr, on_step)?;
    Ok(FinetuneReport {
        e_start,
        e_end: progress.e,
        encoder_hash_before,
        encoder_hash_after: net.group_hash(ParamGroup::Encoder),
        losses: log.losses,
    })
}
