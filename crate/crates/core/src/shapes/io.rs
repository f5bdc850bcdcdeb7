//! Binary dataset file.
//!
//! Layout (all integers little-endian): magic `LSGD`, format version `u32`,
//! sample count `u32`, then per sample `color u8, position u8, shape u8`
//! followed by 3072 `f32` pixels in channel-major order. Samples appear in id
//! order, train split first.

use std::io::{Read, Write};

use super::render::{CHANNELS, IMAGE_SIZE, NUM_COLORS, NUM_POSITIONS, NUM_SHAPES};
use super::{ImageSample, Label, ShapesError};
use crate::numerics::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"LSGD";
pub const DATASET_VERSION: u32 = 1;
const PIXELS: usize = CHANNELS * IMAGE_SIZE * IMAGE_SIZE;

pub fn write_dataset<'a, W: Write>(
    mut w: W,
    samples: impl ExactSizeIterator<Item = &'a ImageSample>,
) -> Result<(), ShapesError> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(3 + PIXELS * 4);
    for s in samples {
        buf.clear();
        buf.extend_from_slice(&[s.label.color, s.label.position, s.shape]);
        for v in s.pixels.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads every sample, assigning ids in file order.
pub fn read_dataset<R: Read>(mut r: R) -> Result<Vec<ImageSample>, ShapesError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ShapesError::Format("truncated header".into()))?;
    if &magic != DATASET_MAGIC {
        return Err(ShapesError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != DATASET_VERSION {
        return Err(ShapesError::Format(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut samples = Vec::with_capacity(count);
    let mut record = vec![0u8; 3 + PIXELS * 4];
    for id in 0..count {
        r.read_exact(&mut record)
            .map_err(|_| ShapesError::Format(format!("truncated at sample {id} of {count}")))?;
        let (color, position, shape) = (record[0], record[1], record[2]);
        for (what, value, bound) in [
            ("color_id", color, NUM_COLORS),
            ("position_id", position, NUM_POSITIONS),
            ("shape_id", shape, NUM_SHAPES),
        ] {
            if usize::from(value) >= bound {
                return Err(ShapesError::OutOfRange {
                    what,
                    value: value.into(),
                    bound,
                });
            }
        }
        let pixels: Vec<f32> = record[3..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ShapesError::Format(format!("sample {id}: pixel outside [0, 1]")));
        }
        samples.push(ImageSample {
            id: id as u32,
            label: Label { color, position },
            shape,
            pixels: Tensor::new(vec![CHANNELS, IMAGE_SIZE, IMAGE_SIZE], pixels)
                .map_err(|e| ShapesError::Format(e.to_string()))?,
        });
    }
    Ok(samples)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ShapesError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| ShapesError::Format("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}
