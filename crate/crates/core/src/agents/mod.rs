//! Speaker and listener networks: a shared-architecture vision encoder, the
//! speaker's recurrent message policy, and the listener's message encoder and
//! pointing module.

pub mod arch;
mod listener;
mod params;
mod speaker;
mod vision;

pub use listener::{listen, listen_on_tape, ListenOutput, ListenerTrace};
pub use params::{
    is_vision, ClassifierHeads, HeadVars, Linear, LinearVars, ListenerParams, ListenerVars, LstmParams,
    LstmVars, ParamTree, SpeakerParams, SpeakerVars, TrainableSet, VisionParams, VisionVars,
};
pub use speaker::{speak, speak_on_tape, SpeakOutput, SpeakerTrace};
pub use vision::{classify, classify_on_tape, encode_batch_on_tape, encode_image, encode_on_tape};

use rand::Rng;
use thiserror::Error;

use crate::numerics::{sample_categorical, NumericsError, Tape, Tensor, Var};
use arch::{MESSAGE_LEN, VOCAB_SIZE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("listener needs at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("token {0} outside vocabulary of {VOCAB_SIZE}")]
    InvalidToken(u8),
    #[error("fixed action {index} out of range for {count} options")]
    InvalidAction { index: usize, count: usize },
}

/// A fixed-length sequence of vocabulary tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Message([u8; MESSAGE_LEN]);

impl Message {
    pub fn new(tokens: [u8; MESSAGE_LEN]) -> Result<Self, AgentError> {
        if let Some(&t) = tokens.iter().find(|&&t| usize::from(t) >= VOCAB_SIZE) {
            return Err(AgentError::InvalidToken(t));
        }
        Ok(Self(tokens))
    }

    pub fn tokens(&self) -> &[u8; MESSAGE_LEN] {
        &self.0
    }
}

/// How an agent picks its discrete action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action<T> {
    /// Draw from the policy.
    Sample,
    /// Take the most probable action (deterministic evaluation).
    Greedy,
    /// Replay a given action, e.g. to re-score a previously sampled one.
    Fixed(T),
}

impl<T> Action<T> {
    pub fn as_ref(&self) -> Action<&T> {
        match self {
            Action::Sample => Action::Sample,
            Action::Greedy => Action::Greedy,
            Action::Fixed(t) => Action::Fixed(t),
        }
    }
}

/// Chooses an index from the log-probabilities held at `logp` on the tape.
fn choose<R: Rng + ?Sized>(
    tape: &Tape,
    logp: Var,
    action: Action<usize>,
    rng: &mut R,
) -> Result<usize, AgentError> {
    let values = tape.value(logp).data();
    match action {
        Action::Sample => Ok(sample_categorical(values, rng)?.0),
        Action::Greedy => Ok(argmax(values)),
        Action::Fixed(i) if i < values.len() => Ok(i),
        Action::Fixed(index) => Err(AgentError::InvalidAction {
            index,
            count: values.len(),
        }),
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One LSTM step; returns the new `(h, c)`.
fn lstm_step(tape: &mut Tape, lstm: &LstmVars, x: Var, h: Var, c: Var) -> Result<(Var, Var), NumericsError> {
    let hidden = tape.value(h).len();
    let xi = tape.matmul(x, lstm.w_ih)?;
    let hh = tape.matmul(h, lstm.w_hh)?;
    let gates = tape.add(xi, hh)?;
    let gates = tape.add(gates, lstm.bias)?;
    let i = tape.slice(gates, 0, hidden)?;
    let f = tape.slice(gates, hidden, hidden)?;
    let g = tape.slice(gates, 2 * hidden, hidden)?;
    let o = tape.slice(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next)?;
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// `x W + b` for each row of a rank-2 `x`. The bias is broadcast through a
/// ones column so only primitive ops appear on the tape.
pub fn batch_linear(tape: &mut Tape, x: Var, lin: &LinearVars) -> Result<Var, NumericsError> {
    let rows = tape.value(x).shape()[0];
    let out = tape.value(lin.bias).len();
    let xw = tape.matmul(x, lin.weight)?;
    let ones = tape.constant(Tensor::full(&[rows, 1], 1.0));
    let bias = tape.reshape(lin.bias, &[1, out])?;
    let b = tape.matmul(ones, bias)?;
    tape.add(xw, b)
}
