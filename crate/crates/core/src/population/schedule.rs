use rand::seq::SliceRandom;
use rand::Rng;

use super::PopulationError;

/// Ordered `(speaker_id, listener_id)` pairings for one population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingSchedule {
    n: usize,
    k: usize,
    pairs: Vec<(usize, usize)>,
}

pub const SCHEDULE_HEADER: &str = "pairing_index,speaker_id,listener_id";

impl PairingSchedule {
    /// Checks the occurrence invariants: every speaker and listener id in
    /// `0..n/2` appears exactly `k` times.
    pub fn new(n: usize, k: usize, pairs: Vec<(usize, usize)>) -> Result<Self, PopulationError> {
        check_size(n, k)?;
        let half = n / 2;
        if pairs.len() != k * half {
            return Err(PopulationError::Schedule(format!(
                "{} pairings, expected k·n/2 = {}",
                pairs.len(),
                k * half
            )));
        }
        let mut speaker_counts = vec![0usize; half];
        let mut listener_counts = vec![0usize; half];
        for &(s, l) in &pairs {
            if s >= half || l >= half {
                return Err(PopulationError::Schedule(format!("pair ({s}, {l}) has an id outside 0..{half}")));
            }
            speaker_counts[s] += 1;
            listener_counts[l] += 1;
        }
        for (role, counts) in [("speaker", &speaker_counts), ("listener", &listener_counts)] {
            if let Some((id, &c)) = counts.iter().enumerate().find(|(_, &c)| c != k) {
                return Err(PopulationError::Schedule(format!("{role} {id} occurs {c} times, expected {k}")));
            }
        }
        Ok(Self { n, k, pairs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SCHEDULE_HEADER}\n");
        for (i, (s, l)) in self.pairs.iter().enumerate() {
            out.push_str(&format!("{i},{s},{l}\n"));
        }
        out
    }

    /// Parses the output of [`to_csv`](Self::to_csv). Population size and k
    /// are recovered from the ids and validated.
    pub fn from_csv(text: &str) -> Result<Self, PopulationError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == SCHEDULE_HEADER => {}
            other => {
                return Err(PopulationError::Schedule(format!(
                    "expected header {SCHEDULE_HEADER:?}, found {other:?}"
                )))
            }
        }
        let mut pairs = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |i: usize| -> Result<usize, PopulationError> {
                fields
                    .get(i)
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| PopulationError::Schedule(format!("row {}: malformed line {line:?}", row + 1)))
            };
            if fields.len() != 3 || parse(0)? != row {
                return Err(PopulationError::Schedule(format!("row {}: malformed line {line:?}", row + 1)));
            }
            pairs.push((parse(1)?, parse(2)?));
        }
        let half = pairs.iter().map(|&(s, l)| s.max(l) + 1).max().unwrap_or(0);
        if half == 0 || pairs.len() % half != 0 {
            return Err(PopulationError::Schedule(format!(
                "{} pairings cannot cover {half} speakers evenly",
                pairs.len()
            )));
        }
        let k = pairs.len() / half;
        Self::new(2 * half, k, pairs)
    }
}

fn check_size(n: usize, k: usize) -> Result<(), PopulationError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(PopulationError::OddPopulation(n));
    }
    if k == 0 {
        return Err(PopulationError::Config("k must be at least 1".into()));
    }
    Ok(())
}

/// Repeats each speaker id and each listener id `k` times, shuffles the two
/// lists independently and zips them.
pub fn build_schedule<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<PairingSchedule, PopulationError> {
    check_size(n, k)?;
    let half = n / 2;
    let mut speakers: Vec<usize> = (0..half).flat_map(|id| std::iter::repeat_n(id, k)).collect();
    let mut listeners = speakers.clone();
    speakers.shuffle(rng);
    listeners.shuffle(rng);
    PairingSchedule::new(n, k, speakers.into_iter().zip(listeners).collect())
}
