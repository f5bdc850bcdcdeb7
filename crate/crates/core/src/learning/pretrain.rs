use rand::seq::SliceRandom;
use rand::Rng;

use super::optim::OptimizerState;
use super::LearningError;
use crate::agents::arch::{NUM_COLOR_CLASSES, NUM_POSITION_CLASSES};
use crate::agents::{argmax, batch_linear, encode_batch_on_tape, ClassifierHeads, TrainableSet, VisionParams};
use crate::numerics::{Tape, Var};
use crate::shapes::{DatasetSplit, ImageSample};

pub const PRETRAIN_BATCH: usize = 32;

/// Fraction of samples whose attribute is predicted correctly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub color: f32,
    pub position: f32,
}

impl Accuracy {
    pub fn min(&self) -> f32 {
        self.color.min(self.position)
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Pretrained convolution with a freshly initialised feed-forward part;
    /// this is what agents start from.
    pub vision: VisionParams,
    /// The full encoder as trained, before its feed-forward part is dropped.
    pub trained_vision: VisionParams,
    pub heads: ClassifierHeads,
    /// Held-out accuracy after each epoch.
    pub epoch_accuracy: Vec<Accuracy>,
}

impl PretrainOutcome {
    /// Held-out accuracy after the final epoch.
    pub fn accuracy(&self) -> Option<Accuracy> {
        self.epoch_accuracy.last().copied()
    }
}

/// Trains encoder and classifier heads to predict color and position with
/// the summed cross-entropy of both attributes, evaluating on `held_out`
/// after each epoch.
pub fn pretrain_vision<R: Rng + ?Sized>(
    train: &DatasetSplit,
    held_out: &DatasetSplit,
    epochs: usize,
    rng: &mut R,
) -> Result<PretrainOutcome, LearningError> {
    if train.is_empty() {
        return Err(LearningError::EmptyBatch);
    }
    let mut vision = VisionParams::init(rng);
    let mut heads = ClassifierHeads::init(rng);
    let mut vision_opt = OptimizerState::default();
    let mut heads_opt = OptimizerState::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_accuracy = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(PRETRAIN_BATCH) {
            let batch: Vec<&ImageSample> = chunk.iter().map(|&i| &train.samples[i]).collect();
            let mut tape = Tape::new();
            let vv = vision.bind(&mut tape, true);
            let hv = heads.bind(&mut tape, true);
            let (color, position) = logits(&mut tape, &vv, &hv, &batch)?;
            let mut total: Option<Var> = None;
            for (row, s) in batch.iter().enumerate() {
                for (matrix, classes, label) in [
                    (color, NUM_COLOR_CLASSES, s.label.color),
                    (position, NUM_POSITION_CLASSES, s.label.position),
                ] {
                    let l = tape.slice(matrix, row, 1)?;
                    let l = tape.reshape(l, &[classes])?;
                    let lp = tape.log_softmax(l)?;
                    let picked = tape.pick(lp, usize::from(label))?;
                    total = Some(match total {
                        None => picked,
                        Some(acc) => tape.add(acc, picked)?,
                    });
                }
            }
            let total = total.ok_or(LearningError::EmptyBatch)?;
            let loss = tape.scale(total, -1.0 / batch.len() as f32)?;
            let mut grads = tape.backward(loss)?;
            let mut vg = Vec::new();
            vv.visit("", &mut |n, v| vg.extend(grads.take(v).map(|g| (n, g))));
            let mut hg = Vec::new();
            hv.visit("", &mut |n, v| hg.extend(grads.take(v).map(|g| (n, g))));
            vision_opt.apply(&mut vision, &vg, TrainableSet::All)?;
            heads_opt.apply(&mut heads, &hg, TrainableSet::All)?;
        }
        epoch_accuracy.push(classification_accuracy(&vision, &heads, held_out)?);
    }
    Ok(PretrainOutcome {
        vision: vision.with_fresh_mlp(rng),
        trained_vision: vision,
        heads,
        epoch_accuracy,
    })
}

fn logits(
    tape: &mut Tape,
    vision: &crate::agents::VisionVars,
    heads: &crate::agents::HeadVars,
    batch: &[&ImageSample],
) -> Result<(Var, Var), LearningError> {
    let images: Vec<Var> = batch.iter().map(|s| tape.constant(s.pixels.clone())).collect();
    let u = encode_batch_on_tape(tape, vision, &images)?;
    let color = batch_linear(tape, u, &heads.color)?;
    let position = batch_linear(tape, u, &heads.position)?;
    Ok((color, position))
}

/// Argmax accuracy of `heads` on top of `vision` over a split.
pub fn classification_accuracy(
    vision: &VisionParams,
    heads: &ClassifierHeads,
    split: &DatasetSplit,
) -> Result<Accuracy, LearningError> {
    let mut correct = [0usize; 2];
    for chunk in split.samples.chunks(128) {
        let batch: Vec<&ImageSample> = chunk.iter().collect();
        let mut tape = Tape::new();
        let vv = vision.bind(&mut tape, false);
        let hv = heads.bind(&mut tape, false);
        let (color, position) = logits(&mut tape, &vv, &hv, &batch)?;
        let rows = tape.value(color).data().chunks(NUM_COLOR_CLASSES);
        let cols = tape.value(position).data().chunks(NUM_POSITION_CLASSES);
        for ((c, p), s) in rows.zip(cols).zip(&batch) {
            correct[0] += usize::from(argmax(c) == usize::from(s.label.color));
            correct[1] += usize::from(argmax(p) == usize::from(s.label.position));
        }
    }
    let n = split.len().max(1) as f32;
    Ok(Accuracy {
        color: correct[0] as f32 / n,
        position: correct[1] as f32 / n,
    })
}
