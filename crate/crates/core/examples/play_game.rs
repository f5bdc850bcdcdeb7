//! One signaling game between untrained agents.

use lsg::agents::{listen, speak, Action, ListenerParams, SpeakerParams, VisionParams};
use lsg::rng::stream;
use lsg::shapes::{build_dataset, sample_game};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = stream(3, 0, "example");
    let data = build_dataset(3, 100, 20);
    let vision = VisionParams::init(&mut rng);
    let speaker = SpeakerParams::init(&mut rng, vision.clone());
    let listener = ListenerParams::init(&mut rng, vision);

    let game = sample_game(&data.train, 4, &mut rng)?;
    let said = speak(&speaker, &game.target().pixels, Action::Sample, &mut rng)?;
    let candidates: Vec<_> = game.candidates.iter().map(|c| c.pixels.clone()).collect();
    let heard = listen(&listener, &said.message, &candidates, Action::Sample, &mut rng)?;

    println!("message {:?}", said.message.tokens());
    println!("per-token entropy {:?}", said.step_entropies);
    println!("listener probabilities {:?}", heard.probabilities);
    println!("target {} chosen {} reward {}", game.target_index, heard.choice,
        u8::from(heard.choice == game.target_index));
    Ok(())
}
