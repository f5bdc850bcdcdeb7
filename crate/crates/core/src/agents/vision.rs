use super::arch::{CONV_FLAT, FEATURE_DIM};
use super::params::{ClassifierHeads, HeadVars, VisionParams, VisionVars};
use super::{batch_linear, AgentError};
use crate::numerics::{NumericsError, Tape, Tensor, Var};

/// conv → relu → flatten → linear → relu → linear, producing the 50-d
/// feature `u` of each image as one row of an `[N, 50]` matrix. The images
/// share a single pass over the feed-forward weights.
pub fn encode_batch_on_tape(tape: &mut Tape, vision: &VisionVars, images: &[Var]) -> Result<Var, NumericsError> {
    let mut rows = Vec::with_capacity(images.len());
    for &image in images {
        let conv = tape.conv2d(image, vision.conv_kernel, Some(vision.conv_bias))?;
        let conv = tape.relu(conv)?;
        rows.push(tape.reshape(conv, &[1, CONV_FLAT])?);
    }
    let flat = if rows.len() == 1 { rows[0] } else { tape.concat(&rows)? };
    let hidden = batch_linear(tape, flat, &vision.mlp1)?;
    let hidden = tape.relu(hidden)?;
    batch_linear(tape, hidden, &vision.mlp2)
}

/// Single-image form of [`encode_batch_on_tape`]; returns a `[50]` vector.
pub fn encode_on_tape(tape: &mut Tape, vision: &VisionVars, image: Var) -> Result<Var, NumericsError> {
    let u = encode_batch_on_tape(tape, vision, &[image])?;
    tape.reshape(u, &[FEATURE_DIM])
}

/// Color and position logits computed from the encoder's feature.
pub fn classify_on_tape(
    tape: &mut Tape,
    vision: &VisionVars,
    heads: &HeadVars,
    image: Var,
) -> Result<(Var, Var), NumericsError> {
    let feature = encode_on_tape(tape, vision, image)?;
    let color = tape.linear(feature, heads.color.weight, heads.color.bias)?;
    let position = tape.linear(feature, heads.position.weight, heads.position.bias)?;
    Ok((color, position))
}

pub fn encode_image(vision: &VisionParams, image: &Tensor) -> Result<Tensor, AgentError> {
    let mut tape = Tape::new();
    let vars = vision.bind(&mut tape, false);
    let x = tape.constant(image.clone());
    let u = encode_on_tape(&mut tape, &vars, x)?;
    Ok(tape.value(u).clone())
}

/// Returns `(color logits [8], position logits [5])`.
pub fn classify(
    vision: &VisionParams,
    heads: &ClassifierHeads,
    image: &Tensor,
) -> Result<(Tensor, Tensor), AgentError> {
    let mut tape = Tape::new();
    let vars = vision.bind(&mut tape, false);
    let head_vars = heads.bind(&mut tape, false);
    let x = tape.constant(image.clone());
    let (c, p) = classify_on_tape(&mut tape, &vars, &head_vars, x)?;
    Ok((tape.value(c).clone(), tape.value(p).clone()))
}
