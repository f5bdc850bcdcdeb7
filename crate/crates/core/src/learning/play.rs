use std::collections::HashMap;

use rand::Rng;

use super::LearningError;
use crate::agents::arch::{FEATURE_DIM, MESSAGE_LEN};
use crate::agents::{
    encode_batch_on_tape, listen_on_tape, speak_on_tape, Action, ListenerParams, ListenerVars, Message,
    SpeakerParams, SpeakerVars, TrainableSet, VisionParams,
};
use crate::numerics::{Tape, Tensor, Var};
use crate::shapes::{GameInstance, ImageSample};

/// Vision features of a fixed set of images under frozen encoder weights,
/// keyed by sample id.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    rows: HashMap<u32, Vec<f32>>,
}

impl FeatureTable {
    pub fn compute<'a>(
        vision: &VisionParams,
        samples: impl IntoIterator<Item = &'a ImageSample>,
    ) -> Result<Self, LearningError> {
        const CHUNK: usize = 64;
        let samples: Vec<&ImageSample> = samples.into_iter().collect();
        let mut rows = HashMap::with_capacity(samples.len());
        for chunk in samples.chunks(CHUNK) {
            let mut tape = Tape::new();
            let vars = vision.bind(&mut tape, false);
            let images: Vec<Var> = chunk.iter().map(|s| tape.constant(s.pixels.clone())).collect();
            let u = encode_batch_on_tape(&mut tape, &vars, &images)?;
            for (s, row) in chunk.iter().zip(tape.value(u).data().chunks(FEATURE_DIM)) {
                rows.insert(s.id, row.to_vec());
            }
        }
        Ok(Self { rows })
    }

    pub fn get(&self, id: u32) -> Option<&[f32]> {
        self.rows.get(&id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn matrix<'a>(&self, samples: impl Iterator<Item = &'a ImageSample>) -> Result<Tensor, LearningError> {
        let mut data = Vec::new();
        for s in samples {
            let row = self.get(s.id).ok_or(LearningError::MissingFeature(s.id))?;
            data.extend_from_slice(row);
        }
        let rows = data.len() / FEATURE_DIM;
        Ok(Tensor::new(vec![rows, FEATURE_DIM], data)?)
    }
}

/// Where image features come from during play.
#[derive(Debug, Clone, Copy, Default)]
pub enum Features<'a> {
    /// Run each agent's vision module on the tape.
    #[default]
    Encode,
    /// Look up precomputed features; only valid while vision is frozen.
    Cached {
        speaker: &'a FeatureTable,
        listener: &'a FeatureTable,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct PlayConfig<'a> {
    pub filter: TrainableSet,
    pub features: Features<'a>,
}

impl PlayConfig<'_> {
    pub fn training() -> Self {
        Self {
            filter: TrainableSet::All,
            features: Features::Encode,
        }
    }
}

/// Per-game action overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Actions {
    pub speaker: Action<Message>,
    pub listener: Action<usize>,
}

impl Actions {
    pub fn sample() -> Self {
        Self {
            speaker: Action::Sample,
            listener: Action::Sample,
        }
    }
}

/// Recorded values of one game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub target_index: usize,
    pub choice: usize,
    /// 1 when the listener picked the target, else 0.
    pub reward: f32,
    pub message: Message,
    pub token_log_probs: [f32; MESSAGE_LEN],
    pub choice_log_prob: f32,
    pub step_entropies: [f32; MESSAGE_LEN],
}

impl GameOutcome {
    /// Total speaker entropy over the message.
    pub fn speaker_entropy(&self) -> f32 {
        self.step_entropies.iter().sum()
    }
}

#[derive(Debug)]
pub(super) struct GameVars {
    pub token_log_probs: Vec<Var>,
    pub choice_log_prob: Var,
    pub step_entropies: Vec<Var>,
}

#[derive(Debug)]
pub(super) struct LiveTape {
    pub tape: Tape,
    pub filter: TrainableSet,
    pub speaker: SpeakerVars,
    pub listener: ListenerVars,
    pub games: Vec<GameVars>,
}

/// Results of a batch of games, plus the tape needed to differentiate them
/// until [`BatchOutcome::detach`] drops it.
#[derive(Debug)]
pub struct BatchOutcome {
    games: Vec<GameOutcome>,
    pub(super) live: Option<LiveTape>,
}

impl BatchOutcome {
    pub fn games(&self) -> &[GameOutcome] {
        &self.games
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn rewards(&self) -> Vec<f32> {
        self.games.iter().map(|g| g.reward).collect()
    }

    pub fn mean_reward(&self) -> f32 {
        mean(self.games.iter().map(|g| g.reward))
    }

    /// Mean per-step speaker entropy.
    pub fn mean_entropy(&self) -> f32 {
        mean(self.games.iter().flat_map(|g| g.step_entropies))
    }

    /// Parameter set the tape was recorded with, or `None` once detached.
    pub fn filter(&self) -> Option<TrainableSet> {
        self.live.as_ref().map(|l| l.filter)
    }

    pub fn is_live(&self) -> bool {
        self.live.is_some()
    }

    /// Drops the tape, keeping only the recorded values.
    pub fn detach(mut self) -> Self {
        self.live = None;
        self
    }
}

fn mean(values: impl Iterator<Item = f32>) -> f32 {
    let (sum, n) = values.fold((0.0f64, 0usize), |(s, n), v| (s + f64::from(v), n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64) as f32
    }
}

/// Plays every game with sampled actions on one shared tape.
pub fn play_batch<R: Rng + ?Sized>(
    speaker: &SpeakerParams,
    listener: &ListenerParams,
    games: &[GameInstance],
    config: PlayConfig<'_>,
    rng: &mut R,
) -> Result<BatchOutcome, LearningError> {
    play_batch_with(speaker, listener, games, config, rng, &mut |_| Actions::sample())
}

/// [`play_batch`] with the action of each game chosen by `actions(game_index)`.
pub fn play_batch_with<R: Rng + ?Sized>(
    speaker: &SpeakerParams,
    listener: &ListenerParams,
    games: &[GameInstance],
    config: PlayConfig<'_>,
    rng: &mut R,
    actions: &mut dyn FnMut(usize) -> Actions,
) -> Result<BatchOutcome, LearningError> {
    let Some(first) = games.first() else {
        return Err(LearningError::EmptyBatch);
    };
    let per_game = first.candidates.len();
    if let Some(g) = games.iter().find(|g| g.candidates.len() != per_game) {
        return Err(LearningError::MixedCandidateCounts {
            expected: per_game,
            got: g.candidates.len(),
        });
    }

    let mut tape = Tape::new();
    let sv = speaker.bind(&mut tape, config.filter);
    let lv = listener.bind(&mut tape, config.filter);
    let (targets, candidates) = match config.features {
        Features::Encode => {
            let t: Vec<Var> = games.iter().map(|g| tape.constant(g.target().pixels.clone())).collect();
            let c: Vec<Var> = games
                .iter()
                .flat_map(|g| &g.candidates)
                .map(|s| s.pixels.clone())
                .collect::<Vec<_>>()
                .into_iter()
                .map(|p| tape.constant(p))
                .collect();
            let t = encode_batch_on_tape(&mut tape, &sv.vision, &t)?;
            let c = encode_batch_on_tape(&mut tape, &lv.vision, &c)?;
            (t, c)
        }
        Features::Cached {
            speaker: st,
            listener: lt,
        } => {
            if config.filter.trains_vision() {
                return Err(LearningError::FilterMismatch(
                    "cached features require a frozen vision module".into(),
                ));
            }
            let t = st.matrix(games.iter().map(|g| g.target()))?;
            let c = lt.matrix(games.iter().flat_map(|g| &g.candidates))?;
            (tape.constant(t), tape.constant(c))
        }
    };

    let mut outcomes = Vec::with_capacity(games.len());
    let mut vars = Vec::with_capacity(games.len());
    for (i, game) in games.iter().enumerate() {
        let act = actions(i);
        let u = tape.slice(targets, i, 1)?;
        let u = tape.reshape(u, &[FEATURE_DIM])?;
        let spoken = speak_on_tape(&mut tape, &sv, u, act.speaker.as_ref(), rng)?;
        let cands = tape.slice(candidates, i * per_game, per_game)?;
        let heard = listen_on_tape(&mut tape, &lv, &spoken.message, cands, act.listener, rng)?;
        let read = |vs: &[Var]| std::array::from_fn(|k| tape.value(vs[k]).item());
        outcomes.push(GameOutcome {
            target_index: game.target_index,
            choice: heard.choice,
            reward: if heard.choice == game.target_index { 1.0 } else { 0.0 },
            message: spoken.message,
            token_log_probs: read(&spoken.token_log_probs),
            choice_log_prob: tape.value(heard.choice_log_prob).item(),
            step_entropies: read(&spoken.step_entropies),
        });
        vars.push(GameVars {
            token_log_probs: spoken.token_log_probs,
            choice_log_prob: heard.choice_log_prob,
            step_entropies: spoken.step_entropies,
        });
    }
    Ok(BatchOutcome {
        games: outcomes,
        live: Some(LiveTape {
            tape,
            filter: config.filter,
            speaker: sv,
            listener: lv,
            games: vars,
        }),
    })
}
