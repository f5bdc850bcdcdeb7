//! Fixed architecture sizes.

pub const VOCAB_SIZE: usize = 20;
pub const MESSAGE_LEN: usize = 5;
pub const EMBED_DIM: usize = 32;
pub const HIDDEN_DIM: usize = 64;
pub const FEATURE_DIM: usize = 50;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_SIDE: usize = 32;
pub const CONV_CHANNELS: usize = 20;
pub const KERNEL_SIZE: usize = 5;
pub const CONV_SIDE: usize = IMAGE_SIDE - KERNEL_SIZE + 1;
pub const CONV_FLAT: usize = CONV_CHANNELS * CONV_SIDE * CONV_SIDE;
pub const NUM_COLOR_CLASSES: usize = 8;
pub const NUM_POSITION_CLASSES: usize = 5;
