//! Saves agent parameters to a checksummed checkpoint and loads them back.

use lsg::agents::{ParamTree, SpeakerParams, VisionParams};
use lsg::cli::{load_checkpoint, save_checkpoint, Checkpoint, CliError};
use lsg::rng::stream;

fn main() -> Result<(), CliError> {
    let mut rng = stream(2, 0, "example");
    let vision = VisionParams::init(&mut rng);
    let speaker = SpeakerParams::init(&mut rng, vision.clone());

    let mut ckpt = Checkpoint::new();
    ckpt.insert_tree("speaker0", &speaker);
    ckpt.insert_counter("speaker0.steps", 123_456);
    ckpt.insert_text("note", "example");

    let dir = std::env::temp_dir().join("lsg-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let path = dir.join("speaker.lsgc");
    save_checkpoint(&path, &ckpt)?;

    let back = load_checkpoint(&path)?;
    let mut restored = SpeakerParams::init(&mut rng, vision);
    back.load_tree("speaker0", &mut restored)?;
    println!("{} entries, steps {}, note {:?}", back.len(), back.counter("speaker0.steps")?, back.text("note")?);
    println!("parameters identical: {}", restored.same_bits(&speaker));

    let mut bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    bytes[20] ^= 1;
    println!("corrupted file: {}", Checkpoint::from_bytes(&bytes).unwrap_err());
    Ok(())
}
