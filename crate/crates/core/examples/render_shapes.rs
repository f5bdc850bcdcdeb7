//! Renders a small dataset, writes it in the binary format and reads it back.

use lsg::shapes::{build_dataset, read_dataset, render_image, write_dataset, ShapesError};

fn main() -> Result<(), ShapesError> {
    let image = render_image(2, 4, 1, 17)?;
    let lit = image.data().iter().filter(|&&v| v > 0.0).count();
    println!("one image: shape {:?}, {lit} nonzero values", image.shape());

    let data = build_dataset(7, 60, 20);
    for s in data.train.samples.iter().take(5) {
        println!("id {:2} color {} position {} shape {}", s.id, s.label.color, s.label.position, s.shape);
    }

    let mut bytes = Vec::new();
    write_dataset(&mut bytes, data.all_samples().collect::<Vec<_>>().into_iter())?;
    let back = read_dataset(bytes.as_slice())?;
    println!("{} samples, {} bytes, round trip equal: {}", back.len(), bytes.len(),
        back.iter().zip(data.all_samples()).all(|(a, b)| a == b));
    Ok(())
}
