use rand::Rng;

use super::arch::{HIDDEN_DIM, MESSAGE_LEN};
use super::params::{SpeakerParams, SpeakerVars, TrainableSet};
use super::vision::encode_on_tape;
use super::{choose, lstm_step, Action, AgentError, Message};
use crate::numerics::{Tape, Tensor, Var};

/// Tape handles for one spoken message.
#[derive(Debug, Clone)]
pub struct SpeakerTrace {
    pub message: Message,
    /// Log-probability of each emitted token, one scalar per step.
    pub token_log_probs: Vec<Var>,
    /// Entropy of each step's token distribution.
    pub step_entropies: Vec<Var>,
}

/// Runs the speaker's recurrent policy from the target feature `u`.
pub fn speak_on_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &SpeakerVars,
    feature: Var,
    action: Action<&Message>,
    rng: &mut R,
) -> Result<SpeakerTrace, AgentError> {
    let proj = tape.linear(feature, vars.init_proj.weight, vars.init_proj.bias)?;
    let mut h = tape.tanh(proj)?;
    let mut c = tape.constant(Tensor::zeros(&[HIDDEN_DIM]));
    let mut x = vars.start_token;
    let mut tokens = [0u8; MESSAGE_LEN];
    let mut token_log_probs = Vec::with_capacity(MESSAGE_LEN);
    let mut step_entropies = Vec::with_capacity(MESSAGE_LEN);
    for (step, slot) in tokens.iter_mut().enumerate() {
        (h, c) = lstm_step(tape, &vars.lstm, x, h, c)?;
        let logits = tape.linear(h, vars.output.weight, vars.output.bias)?;
        let logp = tape.log_softmax(logits)?;
        let step_action = match action {
            Action::Sample => Action::Sample,
            Action::Greedy => Action::Greedy,
            Action::Fixed(m) => Action::Fixed(usize::from(m.tokens()[step])),
        };
        let token = choose(tape, logp, step_action, rng)?;
        token_log_probs.push(tape.pick(logp, token)?);
        step_entropies.push(tape.entropy(logits)?);
        *slot = token as u8;
        x = tape.embedding(vars.embedding, token)?;
    }
    Ok(SpeakerTrace {
        message: Message(tokens),
        token_log_probs,
        step_entropies,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakOutput {
    pub message: Message,
    pub token_log_probs: [f32; MESSAGE_LEN],
    pub step_entropies: [f32; MESSAGE_LEN],
}

/// Describes `image` with a message, outside of training.
pub fn speak<R: Rng + ?Sized>(
    speaker: &SpeakerParams,
    image: &Tensor,
    action: Action<&Message>,
    rng: &mut R,
) -> Result<SpeakOutput, AgentError> {
    let mut tape = Tape::new();
    let vars = speaker.bind(&mut tape, TrainableSet::Frozen);
    let x = tape.constant(image.clone());
    let u = encode_on_tape(&mut tape, &vars.vision, x)?;
    let trace = speak_on_tape(&mut tape, &vars, u, action, rng)?;
    let read = |vs: &[Var]| std::array::from_fn(|i| tape.value(vs[i]).item());
    Ok(SpeakOutput {
        message: trace.message,
        token_log_probs: read(&trace.token_log_probs),
        step_entropies: read(&trace.step_entropies),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::arch::VOCAB_SIZE;
    use crate::agents::VisionParams;
    use crate::rng::StreamRng;
    use crate::shapes::render_image;
    use rand::SeedableRng;

    fn speaker(seed: u64) -> SpeakerParams {
        let mut rng = StreamRng::seed_from_u64(seed);
        let vision = VisionParams::init(&mut rng);
        SpeakerParams::init(&mut rng, vision)
    }

    #[test]
    fn message_has_fixed_length_and_valid_tokens() {
        let s = speaker(1);
        let img = render_image(0, 0, 0, 0).unwrap();
        let mut rng = StreamRng::seed_from_u64(2);
        for _ in 0..20 {
            let out = speak(&s, &img, Action::Sample, &mut rng).unwrap();
            assert!(out.message.tokens().iter().all(|&t| usize::from(t) < VOCAB_SIZE));
            assert!(out.token_log_probs.iter().all(|&lp| lp <= 0.0));
            let max_h = (VOCAB_SIZE as f32).ln() + 1e-5;
            assert!(out.step_entropies.iter().all(|&h| (0.0..=max_h).contains(&h)));
        }
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut s = speaker(3);
        s.output.weight = Tensor::zeros(s.output.weight.shape());
        s.output.bias = Tensor::zeros(s.output.bias.shape());
        let img = render_image(4, 2, 1, 7).unwrap();
        let out = speak(&s, &img, Action::Sample, &mut StreamRng::seed_from_u64(0)).unwrap();
        let uniform = -(VOCAB_SIZE as f32).ln();
        for (&lp, &h) in out.token_log_probs.iter().zip(&out.step_entropies) {
            assert!((lp - uniform).abs() < 1e-5);
            assert!((h + uniform).abs() < 1e-5);
        }
    }

    #[test]
    fn fixed_replay_reproduces_sampled_log_probs() {
        let s = speaker(5);
        let img = render_image(6, 4, 2, 11).unwrap();
        let sampled = speak(&s, &img, Action::Sample, &mut StreamRng::seed_from_u64(9)).unwrap();
        let replay = speak(
            &s,
            &img,
            Action::Fixed(&sampled.message),
            &mut StreamRng::seed_from_u64(1234),
        )
        .unwrap();
        assert_eq!(sampled, replay);
    }

    #[test]
    fn greedy_is_deterministic() {
        let s = speaker(8);
        let img = render_image(3, 1, 0, 2).unwrap();
        let a = speak(&s, &img, Action::Greedy, &mut StreamRng::seed_from_u64(1)).unwrap();
        let b = speak(&s, &img, Action::Greedy, &mut StreamRng::seed_from_u64(2)).unwrap();
        assert_eq!(a.message, b.message);
    }
}
