use std::fmt::Write as _;

use crate::evaluation::LearningCurve;
use crate::population::UpdateRecord;

pub const METRICS_VERSION: u32 = 1;
pub const METRICS_HEADER: &str =
    "phase,population_id,pairing_index,speaker_id,listener_id,games_played,mean_reward,loss,mean_entropy,alpha";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

/// One CSV row. Training rows are per update; evaluation rows are curve
/// points, with `mean_reward` the trailing-window mean and
/// `pairing_index` the evaluation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub phase: Phase,
    pub population_id: usize,
    pub pairing_index: usize,
    pub speaker_id: usize,
    pub listener_id: usize,
    pub games_played: usize,
    pub mean_reward: f32,
    pub loss: f32,
    pub mean_entropy: f32,
    pub alpha: f32,
}

impl MetricsRow {
    pub fn train(population_id: usize, r: &UpdateRecord) -> Self {
        Self {
            phase: Phase::Train,
            population_id,
            pairing_index: r.pairing_index,
            speaker_id: r.speaker_id,
            listener_id: r.listener_id,
            games_played: r.games_played,
            mean_reward: r.mean_reward,
            loss: r.loss,
            mean_entropy: r.mean_entropy,
            alpha: r.alpha,
        }
    }

    /// Rows for one evaluation pair: speaker from population 0, listener
    /// from population 1.
    pub fn eval(pair_index: usize, speaker_id: usize, listener_id: usize, curve: &LearningCurve) -> Vec<Self> {
        curve
            .points
            .iter()
            .map(|p| Self {
                phase: Phase::Eval,
                population_id: 0,
                pairing_index: pair_index,
                speaker_id,
                listener_id,
                games_played: p.games_played,
                mean_reward: p.window_reward,
                loss: p.loss,
                mean_entropy: p.mean_entropy,
                alpha: p.alpha,
            })
            .collect()
    }
}

/// Serialises rows with a version line and the fixed header. Floats are
/// written with Rust's shortest round-trip formatting.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("# lsg-metrics v{METRICS_VERSION}\n{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.phase.name(),
            r.population_id,
            r.pairing_index,
            r.speaker_id,
            r.listener_id,
            r.games_played,
            r.mean_reward,
            r.loss,
            r.mean_entropy,
            r.alpha
        );
    }
    out
}

/// Mean curve across evaluation pairs, thinned to at most `max_points`
/// evenly spaced points: `games_played,mean_reward`.
pub fn plot_csv(curves: &[LearningCurve], max_points: usize) -> String {
    let mut out = String::from("games_played,mean_reward\n");
    let len = curves.iter().map(|c| c.points.len()).min().unwrap_or(0);
    if len == 0 || max_points == 0 {
        return out;
    }
    let stride = len.div_ceil(max_points);
    let mut picks: Vec<usize> = (0..len).step_by(stride).collect();
    if picks.last() != Some(&(len - 1)) {
        picks.push(len - 1);
    }
    for i in picks {
        let games = curves[0].points[i].games_played;
        let mean = curves.iter().map(|c| f64::from(c.points[i].window_reward)).sum::<f64>() / curves.len() as f64;
        let _ = writeln!(out, "{games},{mean:.6}");
    }
    out
}
