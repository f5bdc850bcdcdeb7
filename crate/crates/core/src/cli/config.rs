use std::fmt::Write as _;
use std::path::PathBuf;

use super::CliError;
use crate::agents::arch::{EMBED_DIM, HIDDEN_DIM, MESSAGE_LEN, VOCAB_SIZE};
use crate::evaluation::{EvalConfig, DEFAULT_EVAL_CANDIDATES, DEFAULT_EVAL_STEPS, DEFAULT_TEST_PAIRS};
use crate::learning::DEFAULT_BATCH_SIZE;
use crate::population::{PopulationConfig, DEFAULT_K, DEFAULT_PAIR_STEPS, DEFAULT_TRAIN_CANDIDATES};
use crate::shapes::{DEFAULT_TEST_SIZE, DEFAULT_TRAIN_SIZE};

pub const DEFAULT_PRETRAIN_EPOCHS: usize = 5;

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub dataset_seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub pretrain_epochs: usize,
    pub n: usize,
    pub k: usize,
    pub pair_steps: usize,
    pub success_threshold: Option<f32>,
    pub batch: usize,
    pub train_candidates: usize,
    pub eval_candidates: usize,
    pub eval_steps: usize,
    pub n_test_pairs: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    // Fixed architecture, reported but not configurable.
    pub vocab_size: usize,
    pub message_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_path: PathBuf::from("data/shapes.lsgd"),
            dataset_seed: 0,
            train_size: DEFAULT_TRAIN_SIZE,
            test_size: DEFAULT_TEST_SIZE,
            pretrain_epochs: DEFAULT_PRETRAIN_EPOCHS,
            n: 2,
            k: DEFAULT_K,
            pair_steps: DEFAULT_PAIR_STEPS,
            success_threshold: None,
            batch: DEFAULT_BATCH_SIZE,
            train_candidates: DEFAULT_TRAIN_CANDIDATES,
            eval_candidates: DEFAULT_EVAL_CANDIDATES,
            eval_steps: DEFAULT_EVAL_STEPS,
            n_test_pairs: 1,
            master_seed: 0,
            output_dir: PathBuf::from("runs"),
            vocab_size: VOCAB_SIZE,
            message_len: MESSAGE_LEN,
            embed_dim: EMBED_DIM,
            hidden_dim: HIDDEN_DIM,
        }
    }
}

const KEYS: &[&str] = &[
    "dataset.path",
    "dataset.seed",
    "dataset.train_size",
    "dataset.test_size",
    "pretrain.epochs",
    "population.n",
    "population.k",
    "pair.steps",
    "pair.success_threshold",
    "train.batch",
    "train.candidates",
    "eval.candidates",
    "eval.steps",
    "eval.n_test_pairs",
    "seed.master",
    "output.dir",
];

fn parse_error(line: usize, key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| parse_error(line, key, format!("cannot parse {value:?}")))
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// ignored. Absent keys take their defaults; `eval.n_test_pairs` defaults to
/// `min(4, n/2)`.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::default();
    let mut seen: Vec<(&str, usize)> = Vec::new();
    let mut test_pairs_set = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(parse_error(line, content, "expected `key = value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
            return Err(parse_error(line, key, "unknown key"));
        };
        if let Some((_, first)) = seen.iter().find(|(k, _)| *k == known) {
            return Err(parse_error(line, key, format!("duplicate key, first set on line {first}")));
        }
        seen.push((known, line));
        match known {
            "dataset.path" => c.dataset_path = PathBuf::from(value),
            "dataset.seed" => c.dataset_seed = number(line, key, value)?,
            "dataset.train_size" => c.train_size = number(line, key, value)?,
            "dataset.test_size" => c.test_size = number(line, key, value)?,
            "pretrain.epochs" => c.pretrain_epochs = number(line, key, value)?,
            "population.n" => c.n = number(line, key, value)?,
            "population.k" => c.k = number(line, key, value)?,
            "pair.steps" => c.pair_steps = number(line, key, value)?,
            "pair.success_threshold" => {
                c.success_threshold = match value {
                    "none" => None,
                    v => Some(number(line, key, v)?),
                }
            }
            "train.batch" => c.batch = number(line, key, value)?,
            "train.candidates" => c.train_candidates = number(line, key, value)?,
            "eval.candidates" => c.eval_candidates = number(line, key, value)?,
            "eval.steps" => c.eval_steps = number(line, key, value)?,
            "eval.n_test_pairs" => {
                c.n_test_pairs = number(line, key, value)?;
                test_pairs_set = true;
            }
            "seed.master" => c.master_seed = number(line, key, value)?,
            "output.dir" => c.output_dir = PathBuf::from(value),
            _ => unreachable!("every key in KEYS is handled"),
        }
    }
    if !test_pairs_set {
        c.n_test_pairs = DEFAULT_TEST_PAIRS.min(c.n / 2);
    }
    let line_of = |key: &str| seen.iter().find(|(k, _)| *k == key).map_or(0, |(_, l)| *l);
    let check = |ok: bool, key: &str, message: String| if ok { Ok(()) } else { Err(parse_error(line_of(key), key, message)) };
    check(c.n >= 2 && c.n % 2 == 0, "population.n", format!("{} must be even and at least 2", c.n))?;
    check(c.k >= 1, "population.k", "must be at least 1".into())?;
    check(c.batch >= 1, "train.batch", "must be at least 1".into())?;
    check(
        c.pair_steps >= 1 && c.pair_steps % c.batch == 0,
        "pair.steps",
        format!("{} must be a positive multiple of train.batch = {}", c.pair_steps, c.batch),
    )?;
    check(
        c.eval_steps >= 1 && c.eval_steps % c.batch == 0,
        "eval.steps",
        format!("{} must be a positive multiple of train.batch = {}", c.eval_steps, c.batch),
    )?;
    check(c.train_candidates >= 2, "train.candidates", "must be at least 2".into())?;
    check(
        c.eval_candidates > c.train_candidates,
        "eval.candidates",
        format!("{} must exceed train.candidates = {}", c.eval_candidates, c.train_candidates),
    )?;
    check(
        (1..=c.n / 2).contains(&c.n_test_pairs),
        "eval.n_test_pairs",
        format!("{} must lie in 1..={}", c.n_test_pairs, c.n / 2),
    )?;
    check(c.pretrain_epochs >= 1, "pretrain.epochs", "must be at least 1".into())?;
    check(
        c.train_size >= c.train_candidates,
        "dataset.train_size",
        format!("{} images cannot fill {} candidates", c.train_size, c.train_candidates),
    )?;
    check(
        c.test_size >= c.eval_candidates,
        "dataset.test_size",
        format!("{} images cannot fill {} candidates", c.test_size, c.eval_candidates),
    )?;
    if let Some(t) = c.success_threshold {
        check((0.0..=1.0).contains(&t), "pair.success_threshold", format!("{t} outside [0, 1]"))?;
    }
    Ok(c)
}

impl RunConfig {
    /// Text that parses back to this configuration, defaults written out.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let threshold = self.success_threshold.map_or("none".to_string(), |t| t.to_string());
        let rows: [(&str, String); 16] = [
            ("dataset.path", self.dataset_path.display().to_string()),
            ("dataset.seed", self.dataset_seed.to_string()),
            ("dataset.train_size", self.train_size.to_string()),
            ("dataset.test_size", self.test_size.to_string()),
            ("pretrain.epochs", self.pretrain_epochs.to_string()),
            ("population.n", self.n.to_string()),
            ("population.k", self.k.to_string()),
            ("pair.steps", self.pair_steps.to_string()),
            ("pair.success_threshold", threshold),
            ("train.batch", self.batch.to_string()),
            ("train.candidates", self.train_candidates.to_string()),
            ("eval.candidates", self.eval_candidates.to_string()),
            ("eval.steps", self.eval_steps.to_string()),
            ("eval.n_test_pairs", self.n_test_pairs.to_string()),
            ("seed.master", self.master_seed.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(
            s,
            "# fixed: vocab {} message length {} embedding {} hidden {}",
            self.vocab_size, self.message_len, self.embed_dim, self.hidden_dim
        );
        s
    }

    /// Population `index` (0 or 1 for the two disjoint populations).
    pub fn population(&self, index: u64) -> PopulationConfig {
        PopulationConfig {
            n: self.n,
            k: self.k,
            steps: self.pair_steps,
            batch_size: self.batch,
            candidates: self.train_candidates,
            seed: crate::rng::derive_seed(self.master_seed, index, "population"),
            success_threshold: self.success_threshold,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            candidates: self.eval_candidates,
            steps: self.eval_steps,
            batch_size: self.batch,
            n_test_pairs: self.n_test_pairs,
        }
    }
}
