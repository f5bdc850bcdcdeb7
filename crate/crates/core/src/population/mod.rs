//! Populations of speakers and listeners, pairing schedules, and the
//! sequential outer training loop.

mod registry;
mod schedule;

pub use registry::{pair_state, AgentRegistry, ListenerAgent, SpeakerAgent};
pub use schedule::{build_schedule, PairingSchedule, SCHEDULE_HEADER};

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::agents::{TrainableSet, VisionParams};
use crate::learning::{pair_update, play_batch, Coefficients, LearningError, PlayConfig, DEFAULT_BATCH_SIZE};
use crate::rng::stream;
use crate::shapes::{sample_game, DatasetSplit, ShapesError};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_PAIR_STEPS: usize = 1_024_000;
pub const DEFAULT_TRAIN_CANDIDATES: usize = 4;
/// Games in the trailing reward window.
pub const REWARD_WINDOW: usize = 1000;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("population size {0} must be even and at least 2")]
    OddPopulation(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("no speaker with id {0}")]
    UnknownSpeaker(usize),
    #[error("no listener with id {0}")]
    UnknownListener(usize),
    #[error("pretrained vision parameters are required")]
    MissingVision,
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Shapes(#[from] ShapesError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub n: usize,
    pub k: usize,
    /// Games per pairing.
    pub steps: usize,
    pub batch_size: usize,
    pub candidates: usize,
    /// Root of every random stream used by this population.
    pub seed: u64,
    /// Ends a pairing early once the trailing window mean reaches this value.
    pub success_threshold: Option<f32>,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n: 2,
            k: DEFAULT_K,
            steps: DEFAULT_PAIR_STEPS,
            batch_size: DEFAULT_BATCH_SIZE,
            candidates: DEFAULT_TRAIN_CANDIDATES,
            seed: 0,
            success_threshold: None,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return Err(PopulationError::OddPopulation(self.n));
        }
        let bad = |m: String| Err(PopulationError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.batch_size == 0 || self.steps == 0 || !self.steps.is_multiple_of(self.batch_size) {
            return bad(format!(
                "steps {} must be a positive multiple of the batch size {}",
                self.steps, self.batch_size
            ));
        }
        if self.candidates < 2 {
            return bad(format!("{} candidates per game; need at least 2", self.candidates));
        }
        if let Some(t) = self.success_threshold {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("success threshold {t} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// One optimizer step of one pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub pairing_index: usize,
    pub speaker_id: usize,
    pub listener_id: usize,
    /// Games played by this pairing so far, this batch included.
    pub games_played: usize,
    pub mean_reward: f32,
    pub loss: f32,
    /// Mean per-step speaker entropy over the batch.
    pub mean_entropy: f32,
    pub alpha: f32,
}

/// Per-game rewards over the last `capacity` games.
#[derive(Debug, Clone)]
pub struct TrailingWindow {
    capacity: usize,
    rewards: VecDeque<f32>,
}

impl TrailingWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            rewards: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, reward: f32) {
        if self.rewards.len() == self.capacity {
            self.rewards.pop_front();
        }
        self.rewards.push_back(reward);
    }

    pub fn is_full(&self) -> bool {
        self.rewards.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn mean(&self) -> f32 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        (self.rewards.iter().map(|&r| f64::from(r)).sum::<f64>() / self.rewards.len() as f64) as f32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSummary {
    pub games_played: usize,
    /// Trailing-window mean reward at the end of the pairing.
    pub final_window_reward: f32,
    pub stopped_early: bool,
}

/// Trains one speaker-listener pair on `config.steps` games from `split`
/// with every parameter trainable, updating the registry in place.
#[allow(clippy::too_many_arguments)]
pub fn run_pair<R: Rng + ?Sized>(
    registry: &mut AgentRegistry,
    pairing_index: usize,
    speaker_id: usize,
    listener_id: usize,
    config: &PopulationConfig,
    split: &DatasetSplit,
    rng: &mut R,
    sink: &mut dyn FnMut(&UpdateRecord),
) -> Result<PairSummary, PopulationError> {
    config.validate()?;
    let (speaker, listener) = registry.pair_mut(speaker_id, listener_id)?;
    let play = PlayConfig::training();
    let mut window = TrailingWindow::new(REWARD_WINDOW);
    let mut games_played = 0;
    let mut stopped_early = false;
    while games_played < config.steps {
        let games = (0..config.batch_size)
            .map(|_| sample_game(split, config.candidates, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let batch = play_batch(&speaker.params, &listener.params, &games, play, rng)?;
        let coefficients = Coefficients::for_batch(&batch, speaker.steps)?;
        for r in batch.rewards() {
            window.push(r);
        }
        let mean_reward = batch.mean_reward();
        let mean_entropy = batch.mean_entropy();
        let loss = pair_update(pair_state(speaker, listener), batch, &coefficients, TrainableSet::All)?;
        games_played += games.len();
        speaker.steps += games.len() as u64;
        sink(&UpdateRecord {
            pairing_index,
            speaker_id,
            listener_id,
            games_played,
            mean_reward,
            loss,
            mean_entropy,
            alpha: coefficients.mean_alpha(),
        });
        if let Some(t) = config.success_threshold {
            if window.is_full() && window.mean() >= t {
                stopped_early = games_played < config.steps;
                break;
            }
        }
    }
    Ok(PairSummary {
        games_played,
        final_window_reward: window.mean(),
        stopped_early,
    })
}

/// Result of training one population.
#[derive(Debug, Clone)]
pub struct PopulationOutcome {
    pub registry: AgentRegistry,
    pub schedule: PairingSchedule,
    pub pairs: Vec<PairSummary>,
}

/// Initializes a population from the pretrained convolution, builds its
/// schedule and trains every pairing in order.
///
/// Random streams are derived from `config.seed` under the labels `init`,
/// `schedule` and `pair` (indexed by pairing), so two populations with
/// different seeds share nothing.
pub fn run_population(
    config: &PopulationConfig,
    pretrained: Option<&VisionParams>,
    split: &DatasetSplit,
    sink: &mut dyn FnMut(&UpdateRecord),
) -> Result<PopulationOutcome, PopulationError> {
    config.validate()?;
    let pretrained = pretrained.ok_or(PopulationError::MissingVision)?;
    let mut registry = AgentRegistry::init(config.n, pretrained, &mut stream(config.seed, 0, "init"))?;
    let schedule = build_schedule(config.n, config.k, &mut stream(config.seed, 0, "schedule"))?;
    let mut pairs = Vec::with_capacity(schedule.len());
    for (i, &(s, l)) in schedule.pairs().iter().enumerate() {
        let mut rng = stream(config.seed, i as u64, "pair");
        pairs.push(run_pair(&mut registry, i, s, l, config, split, &mut rng, sink)?);
    }
    Ok(PopulationOutcome {
        registry,
        schedule,
        pairs,
    })
}
