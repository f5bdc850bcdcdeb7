//! Procedurally rendered shape images labelled by color and position, and
//! construction of signaling games over them.

mod dataset;
mod io;
mod render;

pub use dataset::{build_dataset, sample_game, Dataset, DatasetSplit, GameInstance, SplitKind};
pub use io::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use render::{
    render_image, BACKGROUND, CHANNELS, IMAGE_SIZE, NUM_COLORS, NUM_POSITIONS, NUM_SHAPES, PALETTE,
    POSITION_CENTERS,
};

use thiserror::Error;

use crate::numerics::Tensor;

pub const DEFAULT_TRAIN_SIZE: usize = 4000;
pub const DEFAULT_TEST_SIZE: usize = 1000;

/// `(color, position)` attribute pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub color: u8,
    pub position: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    /// Global index within the dataset; train ids precede test ids.
    pub id: u32,
    pub label: Label,
    /// Nuisance attribute, not a prediction target.
    pub shape: u8,
    /// `[3, 32, 32]`, values in `[0, 1]`.
    pub pixels: Tensor,
}

#[derive(Debug, Error)]
pub enum ShapesError {
    #[error("{what} {value} out of range [0, {bound})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        bound: usize,
    },
    #[error("cannot draw {requested} distinct candidates from a split of {available}")]
    TooManyCandidates { requested: usize, available: usize },
    #[error("dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
