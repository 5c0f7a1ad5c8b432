//! Staged training loop.
//!
//! The schedule starts with only the location head trainable. The backbone
//! joins after `unfreeze_backbone_fraction * E` epochs; the perspective head
//! joins after `unfreeze_pi_fraction * E` epochs, at which point its loss
//! weight switches from 0 to `lambda`. All three groups follow their own
//! cosine-decayed learning rate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::LossBreakdown;
use super::model::{infer, loss_and_gradients, ModelConfig, ModelParams, ParamGroup};
use super::optim::{adam_step, cosine_lr, AdamConfig, AdamState};
use super::tensor::Tensor;
use crate::anchors::AnchorSet;
use crate::codec::{decode, encode, GridTarget, Polyline};
use crate::error::{Error, Result};
use crate::eval::{f1_at, CorpusEntry, EvalConfig};
use crate::io::Raster;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    /// Base learning rates for backbone, location head, perspective head.
    pub lr: [f64; 3],
    pub unfreeze_backbone_fraction: f64,
    pub unfreeze_pi_fraction: f64,
    /// Perspective loss weight once that head is live.
    pub lambda: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            lr: [4e-4, 1e-3, 5e-5],
            unfreeze_backbone_fraction: 0.05,
            unfreeze_pi_fraction: 0.15,
            lambda: 0.05,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        let (b, p) = (self.unfreeze_backbone_fraction, self.unfreeze_pi_fraction);
        if !(0.0 < b && b <= p && p < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < unfreeze_backbone_fraction ({b}) <= unfreeze_pi_fraction ({p}) < 1"
            )));
        }
        if !(0.0..).contains(&self.lambda) || self.lr.iter().any(|l| !(0.0..).contains(l)) {
            return Err(Error::Config(
                "lambda and learning rates must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn backbone_unfreeze_epoch(&self) -> usize {
        (self.unfreeze_backbone_fraction * self.epochs as f64).floor() as usize
    }

    pub fn pi_unfreeze_epoch(&self) -> usize {
        (self.unfreeze_pi_fraction * self.epochs as f64).floor() as usize
    }

    /// Freeze flags in [`ParamGroup`] order for `epoch`.
    pub fn frozen_at(&self, epoch: usize) -> [bool; 3] {
        [
            epoch < self.backbone_unfreeze_epoch(),
            false,
            epoch < self.pi_unfreeze_epoch(),
        ]
    }

    pub fn lambda_at(&self, epoch: usize) -> f64 {
        if epoch < self.pi_unfreeze_epoch() {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn lr_at(&self, step_epoch: f64) -> [f64; 3] {
        self.lr.map(|lr0| cosine_lr(step_epoch, self.epochs, lr0))
    }
}

/// One preprocessed example: the network input, its target against every
/// anchor group, and the label-space tracks used for F1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image: Vec<f64>,
    pub target: GridTarget,
    pub tracks: Vec<Polyline>,
}

/// Fixed affine map applied to `[0, 1]` pixel values before the network.
pub const INPUT_MEAN: f64 = 0.45;
pub const INPUT_STD: f64 = 1.0 / 3.0;

/// Resizes `image` to the model input and standardizes it.
pub fn preprocess(image: &Raster, config: &ModelConfig) -> Result<Vec<f64>> {
    let mut v = image.to_input(config.channels, config.in_h, config.in_w)?;
    v.iter_mut()
        .for_each(|x| *x = (*x - INPUT_MEAN) / INPUT_STD);
    Ok(v)
}

impl TrainSample {
    /// Resizes `image` to the model input and encodes `tracks` (given in the
    /// image's own pixel space) against `anchors`.
    pub fn prepare(
        image: &Raster,
        tracks: Vec<Polyline>,
        anchors: &AnchorSet,
        config: &ModelConfig,
    ) -> Result<Self> {
        let input = preprocess(image, config)?;
        let target = encode(
            &tracks,
            anchors,
            image.width,
            config.head.cells,
            config.head.tracks,
        )?;
        Ok(Self {
            image: input,
            target,
            tracks,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l_hcl: f64,
    pub l_pi: f64,
    pub lambda: f64,
    pub lr_backbone: f64,
    pub val_f1_50: f64,
    pub val_pi_acc: f64,
}

pub trait TrainObserver {
    fn on_step(&mut self, _epoch: usize, _step: usize, _loss: &LossBreakdown) {}
    fn on_epoch(&mut self, _metrics: &EpochMetrics) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation score.
    pub best: ModelParams,
    pub best_epoch: Option<usize>,
    pub last: ModelParams,
    pub log: Vec<EpochMetrics>,
    /// Set when training stopped on a non-finite loss or update.
    pub diverged: Option<String>,
}

/// Decoding context shared by validation and inference.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub anchors: &'a AnchorSet,
    /// Label-space image width.
    pub width: usize,
    pub eval: &'a EvalConfig,
}

fn stack(samples: &[&TrainSample], cfg: &ModelConfig) -> Result<Tensor> {
    let mut data = Vec::with_capacity(samples.len() * cfg.input_len());
    for s in samples {
        data.extend_from_slice(&s.image);
    }
    Tensor::new(vec![samples.len(), cfg.channels, cfg.in_h, cfg.in_w], data)
}

/// Predicted group and decoded tracks for every sample, batched.
pub fn predict(
    params: &ModelParams,
    samples: &[TrainSample],
    ctx: EvalContext<'_>,
) -> Result<Vec<(usize, Vec<Polyline>)>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(32) {
        let refs: Vec<&TrainSample> = chunk.iter().collect();
        let pred = infer(params, &stack(&refs, &params.config)?)?;
        for b in 0..chunk.len() {
            let d = decode(
                &pred.sample(b),
                ctx.anchors,
                ctx.width,
                params.config.head.cells,
            )?;
            out.push((d.group, d.tracks));
        }
    }
    Ok(out)
}

/// F1@0.5 and perspective accuracy on `samples`.
pub fn evaluate(
    params: &ModelParams,
    samples: &[TrainSample],
    ctx: EvalContext<'_>,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let preds = predict(params, samples, ctx)?;
    let hits = preds
        .iter()
        .zip(samples)
        .filter(|((g, _), s)| *g == s.target.gt_group)
        .count();
    let corpus: Vec<CorpusEntry> = preds
        .into_iter()
        .zip(samples)
        .map(|((_, tracks), s)| CorpusEntry {
            preds: tracks,
            gts: s.tracks.clone(),
        })
        .collect();
    let f1 = f1_at(&corpus, 0.5, ctx.eval)?.f1;
    Ok((f1, hits as f64 / samples.len() as f64))
}

fn check_samples(samples: &[TrainSample], cfg: &ModelConfig, what: &str) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.image.len() != cfg.input_len() {
            return Err(Error::Input(format!(
                "{what} sample {i}: image has {} values, model expects {}",
                s.image.len(),
                cfg.input_len()
            )));
        }
        if s.target.shape != cfg.head {
            return Err(Error::Input(format!(
                "{what} sample {i}: target shape {:?} does not match model head {:?}",
                s.target.shape, cfg.head
            )));
        }
    }
    Ok(())
}

/// Runs the full schedule. Deterministic for a fixed `schedule.seed`.
pub fn train(
    config: &ModelConfig,
    schedule: &TrainSchedule,
    ctx: EvalContext<'_>,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    schedule.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if config.head.rows != ctx.anchors.h() || config.head.groups != ctx.anchors.n() {
        return Err(Error::Input(format!(
            "model head (h={}, n={}) does not match anchors (h={}, n={})",
            config.head.rows,
            config.head.groups,
            ctx.anchors.h(),
            ctx.anchors.n()
        )));
    }
    check_samples(train_set, config, "train")?;
    check_samples(val_set, config, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut params = ModelParams::init(config, &mut rng)?;
    params.base_lr = schedule.lr;
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batches = train_set.len().div_ceil(schedule.batch_size);

    let mut log = Vec::with_capacity(schedule.epochs);
    let mut best: Option<(f64, f64, usize, ModelParams)> = None;
    let mut diverged = None;

    'epochs: for epoch in 0..schedule.epochs {
        params.frozen = schedule.frozen_at(epoch);
        let lambda = schedule.lambda_at(epoch);
        order.shuffle(&mut rng);
        let (mut sum_hcl, mut sum_pi) = (0.0, 0.0);
        for (step, idx) in order.chunks(schedule.batch_size).enumerate() {
            let batch: Vec<&TrainSample> = idx.iter().map(|&i| &train_set[i]).collect();
            let images = stack(&batch, config)?;
            let targets: Vec<GridTarget> = batch.iter().map(|s| s.target.clone()).collect();
            let (loss, grads) = match loss_and_gradients(&params, &images, &targets, lambda) {
                Ok(v) => v,
                Err(Error::Numeric(msg)) => {
                    diverged = Some(format!("epoch {epoch} step {step}: {msg}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            observer.on_step(epoch, step, &loss);
            sum_hcl += loss.l_hcl * batch.len() as f64;
            sum_pi += loss.l_pi * batch.len() as f64;
            let lr = schedule.lr_at(epoch as f64 + step as f64 / batches as f64);
            if let Err(e) = adam_step(&mut params, &grads, &mut adam, lr, &schedule.adam) {
                diverged = Some(format!("epoch {epoch} step {step}: {e}"));
                break 'epochs;
            }
        }
        let (val_f1_50, val_pi_acc) = evaluate(&params, val_set, ctx)?;
        let metrics = EpochMetrics {
            epoch,
            l_hcl: sum_hcl / train_set.len() as f64,
            l_pi: sum_pi / train_set.len() as f64,
            lambda,
            lr_backbone: schedule.lr_at(epoch as f64)[ParamGroup::Backbone.index()],
            val_f1_50,
            val_pi_acc,
        };
        observer.on_epoch(&metrics);
        log.push(metrics);
        // both heads count equally; the earliest epoch wins a tie
        let better = best
            .as_ref()
            .is_none_or(|(f, a, _, _)| val_f1_50 + val_pi_acc > f + a);
        if better {
            best = Some((val_f1_50, val_pi_acc, epoch, params.clone()));
        }
    }

    let (best_epoch, best_params) = match best {
        Some((_, _, e, p)) => (Some(e), p),
        None => (None, params.clone()),
    };
    Ok(TrainOutcome {
        best: best_params,
        best_epoch,
        last: params,
        log,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_schedule_for_twenty_epochs() {
        let s = TrainSchedule {
            epochs: 20,
            ..TrainSchedule::default()
        };
        assert_eq!(s.backbone_unfreeze_epoch(), 1);
        assert_eq!(s.pi_unfreeze_epoch(), 3);
        assert_eq!(s.frozen_at(0), [true, false, true]);
        assert_eq!(s.frozen_at(1), [false, false, true]);
        assert_eq!(s.frozen_at(3), [false, false, false]);
        assert_eq!(s.lambda_at(2), 0.0);
        assert_eq!(s.lambda_at(3), 0.05);
    }

    #[test]
    fn hundred_epoch_schedule() {
        let s = TrainSchedule {
            epochs: 100,
            ..TrainSchedule::default()
        };
        assert_eq!(s.backbone_unfreeze_epoch(), 5);
        assert_eq!(s.pi_unfreeze_epoch(), 15);
        assert_eq!(s.lambda_at(14), 0.0);
        assert_eq!(s.lambda_at(15), 0.05);
    }

    #[test]
    fn schedule_validation() {
        let s = TrainSchedule {
            unfreeze_backbone_fraction: 0.2,
            unfreeze_pi_fraction: 0.1,
            ..TrainSchedule::default()
        };
        assert!(s.validate().is_err());
        let s = TrainSchedule {
            lambda: -1.0,
            ..TrainSchedule::default()
        };
        assert!(s.validate().is_err());
    }
}
