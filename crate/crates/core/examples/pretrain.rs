//! Pretrains the vision encoder on color and position classification.

use lsg::learning::pretrain_vision;
use lsg::rng::stream;
use lsg::shapes::build_dataset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = build_dataset(11, 1000, 250);
    let outcome = pretrain_vision(&data.train, &data.test, 2, &mut stream(11, 0, "pretrain"))?;
    for (i, a) in outcome.epoch_accuracy.iter().enumerate() {
        println!("epoch {}: color {:.3} position {:.3}", i + 1, a.color, a.position);
    }
    Ok(())
}
