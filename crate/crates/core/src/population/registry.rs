use rand::Rng;

use super::PopulationError;
use crate::agents::{ListenerParams, SpeakerParams, VisionParams};
use crate::learning::{AdamConfig, OptimizerState, PairState};

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerAgent {
    pub id: usize,
    pub params: SpeakerParams,
    pub optimizer: OptimizerState,
    /// Games this speaker has been trained on; drives the entropy schedule.
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListenerAgent {
    pub id: usize,
    pub params: ListenerParams,
    pub optimizer: OptimizerState,
}

impl SpeakerAgent {
    pub fn new(id: usize, params: SpeakerParams) -> Self {
        Self {
            id,
            params,
            optimizer: OptimizerState::new(AdamConfig::default()),
            steps: 0,
        }
    }
}

impl ListenerAgent {
    pub fn new(id: usize, params: ListenerParams) -> Self {
        Self {
            id,
            params,
            optimizer: OptimizerState::new(AdamConfig::default()),
        }
    }
}

/// The speakers and listeners of one population. Ids are positions,
/// `0..n/2` in each role.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRegistry {
    speakers: Vec<SpeakerAgent>,
    listeners: Vec<ListenerAgent>,
}

impl AgentRegistry {
    /// `n/2` speakers and `n/2` listeners, each with the pretrained
    /// convolution, its own fresh MLP and fresh policy weights.
    pub fn init<R: Rng + ?Sized>(n: usize, pretrained: &VisionParams, rng: &mut R) -> Result<Self, PopulationError> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(PopulationError::OddPopulation(n));
        }
        let half = n / 2;
        let mut speakers = Vec::with_capacity(half);
        for id in 0..half {
            let vision = pretrained.with_fresh_mlp(rng);
            speakers.push(SpeakerAgent::new(id, SpeakerParams::init(rng, vision)));
        }
        let mut listeners = Vec::with_capacity(half);
        for id in 0..half {
            let vision = pretrained.with_fresh_mlp(rng);
            listeners.push(ListenerAgent::new(id, ListenerParams::init(rng, vision)));
        }
        Ok(Self { speakers, listeners })
    }

    /// Assembles a registry from existing agents, whose ids must be
    /// `0..len` in order.
    pub fn from_agents(speakers: Vec<SpeakerAgent>, listeners: Vec<ListenerAgent>) -> Result<Self, PopulationError> {
        if speakers.is_empty() || speakers.len() != listeners.len() {
            return Err(PopulationError::Config(format!(
                "{} speakers and {} listeners; need equal, nonzero counts",
                speakers.len(),
                listeners.len()
            )));
        }
        let ordered = speakers.iter().enumerate().all(|(i, s)| s.id == i)
            && listeners.iter().enumerate().all(|(i, l)| l.id == i);
        if !ordered {
            return Err(PopulationError::Config("agent ids must be 0..n/2 in order".into()));
        }
        Ok(Self { speakers, listeners })
    }

    /// Population size `n`.
    pub fn size(&self) -> usize {
        2 * self.speakers.len()
    }

    pub fn speakers(&self) -> &[SpeakerAgent] {
        &self.speakers
    }

    pub fn listeners(&self) -> &[ListenerAgent] {
        &self.listeners
    }

    pub fn speaker(&self, id: usize) -> Result<&SpeakerAgent, PopulationError> {
        self.speakers.get(id).ok_or(PopulationError::UnknownSpeaker(id))
    }

    pub fn listener(&self, id: usize) -> Result<&ListenerAgent, PopulationError> {
        self.listeners.get(id).ok_or(PopulationError::UnknownListener(id))
    }

    /// Mutable access to one speaker and one listener at once.
    pub fn pair_mut(
        &mut self,
        speaker_id: usize,
        listener_id: usize,
    ) -> Result<(&mut SpeakerAgent, &mut ListenerAgent), PopulationError> {
        let s = self
            .speakers
            .get_mut(speaker_id)
            .ok_or(PopulationError::UnknownSpeaker(speaker_id))?;
        let l = self
            .listeners
            .get_mut(listener_id)
            .ok_or(PopulationError::UnknownListener(listener_id))?;
        Ok((s, l))
    }
}

/// Borrow both agents and their optimizers for one update.
pub fn pair_state<'a>(speaker: &'a mut SpeakerAgent, listener: &'a mut ListenerAgent) -> PairState<'a> {
    PairState {
        speaker: &mut speaker.params,
        listener: &mut listener.params,
        speaker_optimizer: &mut speaker.optimizer,
        listener_optimizer: &mut listener.optimizer,
    }
}
