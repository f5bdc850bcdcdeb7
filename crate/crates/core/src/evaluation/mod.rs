//! Cross-population evaluation: pair a speaker from one population with a
//! listener from another, keep their vision modules frozen, re-initialize
//! everything else and train on held-out images with more distractors.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::agents::TrainableSet;
use crate::learning::{pair_update, play_batch, Coefficients, FeatureTable, Features, PlayConfig, DEFAULT_BATCH_SIZE};
use crate::population::{
    pair_state, AgentRegistry, ListenerAgent, PopulationError, SpeakerAgent, TrailingWindow, REWARD_WINDOW,
};
use crate::shapes::{sample_game, DatasetSplit, SplitKind};

pub const DEFAULT_EVAL_CANDIDATES: usize = 5;
pub const DEFAULT_EVAL_STEPS: usize = 1_024_000;
pub const DEFAULT_TEST_PAIRS: usize = 4;
/// Games between learning-curve points.
pub const CURVE_INTERVAL: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub candidates: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub n_test_pairs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            candidates: DEFAULT_EVAL_CANDIDATES,
            steps: DEFAULT_EVAL_STEPS,
            batch_size: DEFAULT_BATCH_SIZE,
            n_test_pairs: DEFAULT_TEST_PAIRS,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), PopulationError> {
        let bad = |m: String| Err(PopulationError::Config(m));
        if self.candidates < 2 {
            return bad(format!("{} evaluation candidates; need at least 2", self.candidates));
        }
        if self.batch_size == 0 || self.steps == 0 || !self.steps.is_multiple_of(self.batch_size) {
            return bad(format!(
                "evaluation steps {} must be a positive multiple of the batch size {}",
                self.steps, self.batch_size
            ));
        }
        if self.n_test_pairs == 0 {
            return bad("at least one test pair is required".into());
        }
        Ok(())
    }
}

/// One point of a learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub games_played: usize,
    /// Mean reward over the trailing window of games.
    pub window_reward: f32,
    /// Mean loss over the updates since the previous point.
    pub loss: f32,
    /// Mean per-step speaker entropy over the updates since the previous point.
    pub mean_entropy: f32,
    /// Mean entropy weight over the updates since the previous point.
    pub alpha: f32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn final_reward(&self) -> Option<f32> {
        self.points.last().map(|p| p.window_reward)
    }
}

/// Samples `n_test_pairs` speakers of `a` and listeners of `b` without
/// replacement and zips the two shuffled id lists.
pub fn build_eval_pairs<R: Rng + ?Sized>(
    a: &AgentRegistry,
    b: &AgentRegistry,
    n_test_pairs: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, PopulationError> {
    let (sa, lb) = (a.speakers().len(), b.listeners().len());
    if n_test_pairs > sa.min(lb) {
        return Err(PopulationError::Config(format!(
            "{n_test_pairs} test pairs requested but the populations hold {sa} speakers and {lb} listeners"
        )));
    }
    let mut speakers = index::sample(rng, sa, n_test_pairs).into_vec();
    let mut listeners = index::sample(rng, lb, n_test_pairs).into_vec();
    speakers.shuffle(rng);
    listeners.shuffle(rng);
    Ok(speakers.into_iter().zip(listeners).collect())
}

/// Copy of `agent` with vision untouched and every other parameter, the
/// optimizer state and the step counter reset.
pub fn reset_speaker<R: Rng + ?Sized>(agent: &SpeakerAgent, rng: &mut R) -> SpeakerAgent {
    let mut params = agent.params.clone();
    params.reset_policy(rng);
    SpeakerAgent::new(agent.id, params)
}

pub fn reset_listener<R: Rng + ?Sized>(agent: &ListenerAgent, rng: &mut R) -> ListenerAgent {
    let mut params = agent.params.clone();
    params.reset_policy(rng);
    ListenerAgent::new(agent.id, params)
}

/// A speaker and listener prepared for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub speaker: SpeakerAgent,
    pub listener: ListenerAgent,
}

impl EvalPair {
    pub fn reset_from<R: Rng + ?Sized>(speaker: &SpeakerAgent, listener: &ListenerAgent, rng: &mut R) -> Self {
        Self {
            speaker: reset_speaker(speaker, rng),
            listener: reset_listener(listener, rng),
        }
    }
}

/// Trains `pair` with frozen vision on `config.steps` games drawn from the
/// test split, recording a curve point every [`CURVE_INTERVAL`] games.
pub fn run_eval<R: Rng + ?Sized>(
    pair: &mut EvalPair,
    split: &DatasetSplit,
    config: &EvalConfig,
    rng: &mut R,
) -> Result<LearningCurve, PopulationError> {
    config.validate()?;
    if split.kind != SplitKind::Test {
        return Err(PopulationError::Config("evaluation games must come from the test split".into()));
    }
    // Vision is frozen, so every image's feature is fixed for the whole run.
    let speaker_features = FeatureTable::compute(&pair.speaker.params.vision, &split.samples)?;
    let listener_features = FeatureTable::compute(&pair.listener.params.vision, &split.samples)?;
    let play = PlayConfig {
        filter: TrainableSet::PolicyOnly,
        features: Features::Cached {
            speaker: &speaker_features,
            listener: &listener_features,
        },
    };
    let ids = split.id_range();
    let mut window = TrailingWindow::new(REWARD_WINDOW);
    let mut curve = LearningCurve::default();
    let (mut loss_sum, mut entropy_sum, mut alpha_sum, mut updates) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    let mut games_played = 0;
    let mut next_point = CURVE_INTERVAL;
    while games_played < config.steps {
        let games = (0..config.batch_size)
            .map(|_| sample_game(split, config.candidates, rng))
            .collect::<Result<Vec<_>, _>>()?;
        debug_assert!(games.iter().flat_map(|g| &g.candidates).all(|c| ids.contains(&c.id)));
        let batch = play_batch(&pair.speaker.params, &pair.listener.params, &games, play, rng)?;
        let coefficients = Coefficients::for_batch(&batch, pair.speaker.steps)?;
        for r in batch.rewards() {
            window.push(r);
        }
        entropy_sum += f64::from(batch.mean_entropy());
        alpha_sum += f64::from(coefficients.mean_alpha());
        let state = pair_state(&mut pair.speaker, &mut pair.listener);
        loss_sum += f64::from(pair_update(state, batch, &coefficients, TrainableSet::PolicyOnly)?);
        updates += 1;
        games_played += games.len();
        pair.speaker.steps += games.len() as u64;
        if games_played >= next_point || games_played == config.steps {
            curve.points.push(CurvePoint {
                games_played,
                window_reward: window.mean(),
                loss: (loss_sum / updates as f64) as f32,
                mean_entropy: (entropy_sum / updates as f64) as f32,
                alpha: (alpha_sum / updates as f64) as f32,
            });
            (loss_sum, entropy_sum, alpha_sum, updates) = (0.0, 0.0, 0.0, 0);
            while next_point <= games_played {
                next_point += CURVE_INTERVAL;
            }
        }
    }
    Ok(curve)
}
