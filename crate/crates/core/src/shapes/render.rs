use rand::Rng;

use super::ShapesError;
use crate::numerics::Tensor;
use crate::rng::StreamRng;
use rand::SeedableRng;

pub const IMAGE_SIZE: usize = 32;
pub const CHANNELS: usize = 3;
pub const NUM_COLORS: usize = 8;
pub const NUM_POSITIONS: usize = 5;
pub const NUM_SHAPES: usize = 3;

/// Shape colors, indexed by color id: red, green, blue, yellow, cyan,
/// magenta, white, orange.
pub const PALETTE: [[f32; 3]; NUM_COLORS] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 1.0],
    [1.0, 0.5, 0.0],
];

pub const BACKGROUND: [f32; 3] = [0.0, 0.0, 0.0];

/// `(row, col)` cell centers: four quadrants then the image center.
pub const POSITION_CENTERS: [(f32, f32); NUM_POSITIONS] =
    [(8.0, 8.0), (8.0, 24.0), (24.0, 8.0), (24.0, 24.0), (16.0, 16.0)];

const BASE_RADIUS: f32 = 4.5;
const MAX_OFFSET: i32 = 2;
const SIZE_JITTER: f32 = 0.15;

/// Renders one filled shape on a uniform dark background as a `[3, 32, 32]`
/// tensor. The result is a pure function of the four arguments.
///
/// Shape ids: 0 circle, 1 square, 2 triangle. `jitter_seed` selects an
/// integer center offset in `[-2, 2]²` and a size factor in `[0.85, 1.15]`.
pub fn render_image(
    color_id: usize,
    position_id: usize,
    shape_id: usize,
    jitter_seed: u64,
) -> Result<Tensor, ShapesError> {
    for (what, value, bound) in [
        ("color_id", color_id, NUM_COLORS),
        ("position_id", position_id, NUM_POSITIONS),
        ("shape_id", shape_id, NUM_SHAPES),
    ] {
        if value >= bound {
            return Err(ShapesError::OutOfRange { what, value, bound });
        }
    }
    let mut rng = StreamRng::seed_from_u64(jitter_seed);
    let dy = rng.random_range(-MAX_OFFSET..=MAX_OFFSET) as f32;
    let dx = rng.random_range(-MAX_OFFSET..=MAX_OFFSET) as f32;
    let radius = BASE_RADIUS * rng.random_range(1.0 - SIZE_JITTER..=1.0 + SIZE_JITTER);
    let (cy, cx) = POSITION_CENTERS[position_id];
    let (cy, cx) = (cy + dy, cx + dx);

    let plane = IMAGE_SIZE * IMAGE_SIZE;
    let mut pixels = vec![0.0f32; CHANNELS * plane];
    for ch in 0..CHANNELS {
        pixels[ch * plane..(ch + 1) * plane].fill(BACKGROUND[ch]);
    }
    let color = PALETTE[color_id];
    for r in 0..IMAGE_SIZE {
        for c in 0..IMAGE_SIZE {
            // Sample at pixel centers, relative to the shape center.
            let y = r as f32 + 0.5 - cy;
            let x = c as f32 + 0.5 - cx;
            if inside(shape_id, y, x, radius) {
                for ch in 0..CHANNELS {
                    pixels[ch * plane + r * IMAGE_SIZE + c] = color[ch];
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![CHANNELS, IMAGE_SIZE, IMAGE_SIZE], pixels))
}

fn inside(shape_id: usize, y: f32, x: f32, radius: f32) -> bool {
    match shape_id {
        0 => x * x + y * y <= radius * radius,
        // Side chosen so the square's area roughly matches the circle's.
        1 => {
            let half = radius * 0.886;
            x.abs() <= half && y.abs() <= half
        }
        // Upward isosceles triangle, apex at -radius, base at +radius.
        _ => {
            if !(-radius..=radius).contains(&y) {
                return false;
            }
            let half_width = radius * (y + radius) / (2.0 * radius);
            x.abs() <= half_width
        }
    }
}
