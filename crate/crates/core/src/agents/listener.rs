use rand::Rng;

use super::arch::HIDDEN_DIM;
use super::params::{ListenerParams, ListenerVars, TrainableSet};
use super::vision::encode_batch_on_tape;
use super::{batch_linear, choose, lstm_step, Action, AgentError, Message};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct ListenerTrace {
    pub choice: usize,
    /// Scalar log-probability of `choice`.
    pub choice_log_prob: Var,
    /// Log-probabilities over all candidates.
    pub log_probs: Var,
}

/// Encodes `message`, scores each candidate feature (rows of the `[X, 50]`
/// matrix `candidates`) against the final hidden state and picks one.
pub fn listen_on_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ListenerVars,
    message: &Message,
    candidates: Var,
    action: Action<usize>,
    rng: &mut R,
) -> Result<ListenerTrace, AgentError> {
    let shape = tape.value(candidates).shape();
    let count = if shape.len() == 2 { shape[0] } else { 0 };
    if count < 2 {
        return Err(AgentError::TooFewCandidates(count));
    }
    let mut h = tape.constant(Tensor::zeros(&[HIDDEN_DIM]));
    let mut c = tape.constant(Tensor::zeros(&[HIDDEN_DIM]));
    for &token in message.tokens() {
        let x = tape.embedding(vars.embedding, usize::from(token))?;
        (h, c) = lstm_step(tape, &vars.lstm, x, h, c)?;
    }
    let projected = batch_linear(tape, candidates, &vars.candidate_proj)?;
    let scores = tape.matmul(projected, h)?;
    let log_probs = tape.log_softmax(scores)?;
    let choice = choose(tape, log_probs, action, rng)?;
    let choice_log_prob = tape.pick(log_probs, choice)?;
    Ok(ListenerTrace {
        choice,
        choice_log_prob,
        log_probs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListenOutput {
    pub choice: usize,
    pub choice_log_prob: f32,
    pub probabilities: Vec<f32>,
}

pub fn listen<R: Rng + ?Sized>(
    listener: &ListenerParams,
    message: &Message,
    candidates: &[Tensor],
    action: Action<usize>,
    rng: &mut R,
) -> Result<ListenOutput, AgentError> {
    if candidates.len() < 2 {
        return Err(AgentError::TooFewCandidates(candidates.len()));
    }
    let mut tape = Tape::new();
    let vars = listener.bind(&mut tape, TrainableSet::Frozen);
    let images: Vec<Var> = candidates.iter().map(|im| tape.constant(im.clone())).collect();
    let features = encode_batch_on_tape(&mut tape, &vars.vision, &images)?;
    let trace = listen_on_tape(&mut tape, &vars, message, features, action, rng)?;
    Ok(ListenOutput {
        choice: trace.choice,
        choice_log_prob: tape.value(trace.choice_log_prob).item(),
        probabilities: tape.value(trace.log_probs).data().iter().map(|lp| lp.exp()).collect(),
    })
}
