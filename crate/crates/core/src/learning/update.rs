use super::optim::OptimizerState;
use super::play::{BatchOutcome, GameOutcome};
use super::{compute_baseline, entropy_coefficient, LearningError};
use crate::agents::{ListenerParams, SpeakerParams, TrainableSet};
use crate::numerics::{Tensor, Var};

/// Baseline and per-game entropy weights entering the surrogate loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub baseline: f32,
    pub alphas: Vec<f32>,
}

impl Coefficients {
    /// Batch-mean baseline with the scheduled entropy weight for each game.
    pub fn for_batch(batch: &BatchOutcome, speaker_steps: u64) -> Result<Self, LearningError> {
        let rewards = batch.rewards();
        let baseline = compute_baseline(&rewards)?;
        let alphas = rewards
            .iter()
            .map(|&r| entropy_coefficient(speaker_steps, r, baseline))
            .collect();
        Ok(Self { baseline, alphas })
    }

    pub fn mean_alpha(&self) -> f32 {
        if self.alphas.is_empty() {
            return 0.0;
        }
        (self.alphas.iter().map(|&a| f64::from(a)).sum::<f64>() / self.alphas.len() as f64) as f32
    }

    fn check(&self, n: usize) -> Result<(), LearningError> {
        if self.alphas.len() != n {
            return Err(LearningError::CoefficientCount {
                expected: n,
                got: self.alphas.len(),
            });
        }
        Ok(())
    }
}

/// Surrogate loss evaluated from recorded values alone:
/// `−(1/N) Σ [(R − b)(Σ log p_speaker + log p_listener) + α H_S]`.
pub fn surrogate_value(games: &[GameOutcome], coefficients: &Coefficients) -> f64 {
    let b = f64::from(coefficients.baseline);
    let total: f64 = games
        .iter()
        .zip(&coefficients.alphas)
        .map(|(g, &alpha)| {
            let logp: f64 = g.token_log_probs.iter().map(|&v| f64::from(v)).sum::<f64>()
                + f64::from(g.choice_log_prob);
            let entropy: f64 = g.step_entropies.iter().map(|&v| f64::from(v)).sum();
            (f64::from(g.reward) - b) * logp + f64::from(alpha) * entropy
        })
        .sum();
    -total / games.len() as f64
}

/// Named gradients of the surrogate loss for each agent. Only parameters
/// the batch was recorded as trainable appear.
#[derive(Debug, Clone)]
pub struct SurrogateGradients {
    pub loss: f32,
    pub filter: TrainableSet,
    pub speaker: Vec<(String, Tensor)>,
    pub listener: Vec<(String, Tensor)>,
}

pub fn surrogate_gradients(
    batch: BatchOutcome,
    coefficients: &Coefficients,
) -> Result<SurrogateGradients, LearningError> {
    coefficients.check(batch.len())?;
    let games = batch.games().to_vec();
    let mut live = batch.live.ok_or(LearningError::DeadTape)?;
    let tape = &mut live.tape;
    let n = games.len();
    let mut total: Option<Var> = None;
    for ((g, vars), &alpha) in games.iter().zip(&live.games).zip(&coefficients.alphas) {
        let mut logp = vars.choice_log_prob;
        for &v in &vars.token_log_probs {
            logp = tape.add(logp, v)?;
        }
        let weighted = tape.scale(logp, g.reward - coefficients.baseline)?;
        let mut entropy = vars.step_entropies[0];
        for &v in &vars.step_entropies[1..] {
            entropy = tape.add(entropy, v)?;
        }
        let bonus = tape.scale(entropy, alpha)?;
        let term = tape.add(weighted, bonus)?;
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let total = total.ok_or(LearningError::EmptyBatch)?;
    let loss = tape.scale(total, -1.0 / n as f32)?;
    let mut grads = tape.backward(loss)?;

    let mut speaker = Vec::new();
    live.speaker.visit(&mut |name, var| {
        if let Some(g) = grads.take(var) {
            speaker.push((name, g));
        }
    });
    let mut listener = Vec::new();
    live.listener.visit(&mut |name, var| {
        if let Some(g) = grads.take(var) {
            listener.push((name, g));
        }
    });
    Ok(SurrogateGradients {
        loss: tape.value(loss).item(),
        filter: live.filter,
        speaker,
        listener,
    })
}

/// Mutable access to both agents of a pair and their optimizer states.
#[derive(Debug)]
pub struct PairState<'a> {
    pub speaker: &'a mut SpeakerParams,
    pub listener: &'a mut ListenerParams,
    pub speaker_optimizer: &'a mut OptimizerState,
    pub listener_optimizer: &'a mut OptimizerState,
}

/// Differentiates the surrogate loss of `batch` and applies one optimizer
/// step to the parameters in `filter`. Returns the loss.
pub fn pair_update(
    pair: PairState<'_>,
    batch: BatchOutcome,
    coefficients: &Coefficients,
    filter: TrainableSet,
) -> Result<f32, LearningError> {
    match batch.filter() {
        None => return Err(LearningError::DeadTape),
        Some(recorded) if recorded != filter => {
            return Err(LearningError::FilterMismatch(format!(
                "batch recorded with {recorded:?} but update requested {filter:?}"
            )))
        }
        Some(_) => {}
    }
    let grads = surrogate_gradients(batch, coefficients)?;
    pair.speaker_optimizer.apply(pair.speaker, &grads.speaker, filter)?;
    pair.listener_optimizer.apply(pair.listener, &grads.listener, filter)?;
    Ok(grads.loss)
}
