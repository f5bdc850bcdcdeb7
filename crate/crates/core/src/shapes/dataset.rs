use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::render::{render_image, NUM_COLORS, NUM_POSITIONS, NUM_SHAPES};
use super::{ImageSample, Label, ShapesError};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Test => "test",
        }
    }

    /// Jitter seeds of train images have the top bit clear, test images set,
    /// so the two splits never share a jitter seed.
    fn jitter_seed(self, dataset_seed: u64, index: usize) -> u64 {
        let raw = derive_seed(dataset_seed, index as u64, self.name()) >> 1;
        match self {
            SplitKind::Train => raw,
            SplitKind::Test => raw | (1 << 63),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub kind: SplitKind,
    pub samples: Vec<ImageSample>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Half-open range of sample ids in this split.
    pub fn id_range(&self) -> std::ops::Range<u32> {
        let lo = self.samples.iter().map(|s| s.id).min().unwrap_or(0);
        let hi = self.samples.iter().map(|s| s.id + 1).max().unwrap_or(0);
        lo..hi
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: DatasetSplit,
    pub test: DatasetSplit,
}

impl Dataset {
    /// Splits a flat, id-ordered sample list into its train prefix and test
    /// suffix.
    pub fn from_samples(mut samples: Vec<ImageSample>, train_size: usize) -> Result<Self, ShapesError> {
        if train_size > samples.len() {
            return Err(ShapesError::Format(format!(
                "file holds {} samples, fewer than the configured train size {train_size}",
                samples.len()
            )));
        }
        let test = samples.split_off(train_size);
        Ok(Self {
            train: DatasetSplit {
                kind: SplitKind::Train,
                samples,
            },
            test: DatasetSplit {
                kind: SplitKind::Test,
                samples: test,
            },
        })
    }

    pub fn all_samples(&self) -> impl Iterator<Item = &ImageSample> {
        self.train.samples.iter().chain(&self.test.samples)
    }
}

fn build_split(kind: SplitKind, seed: u64, size: usize, first_id: u32) -> DatasetSplit {
    // Every (color, position) combination appears floor(size/40) or
    // ceil(size/40) times; order and shapes are randomised.
    let combos = NUM_COLORS * NUM_POSITIONS;
    let mut labels: Vec<usize> = (0..size).map(|i| i % combos).collect();
    let mut rng = stream(seed, 0, &format!("{}-labels", kind.name()));
    labels.shuffle(&mut rng);
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, combo)| {
            let (color, position) = (combo / NUM_POSITIONS, combo % NUM_POSITIONS);
            let shape = rng.random_range(0..NUM_SHAPES);
            let pixels = render_image(color, position, shape, kind.jitter_seed(seed, i))
                .expect("ids are in range by construction");
            ImageSample {
                id: first_id + i as u32,
                label: Label {
                    color: color as u8,
                    position: position as u8,
                },
                shape: shape as u8,
                pixels,
            }
        })
        .collect();
    DatasetSplit { kind, samples }
}

/// Renders the train and test splits for `seed`.
pub fn build_dataset(seed: u64, train_size: usize, test_size: usize) -> Dataset {
    let train = build_split(SplitKind::Train, seed, train_size, 0);
    let test = build_split(SplitKind::Test, seed, test_size, train_size as u32);
    Dataset { train, test }
}

/// One signaling game: the candidate set and which of them is the target.
#[derive(Debug, Clone)]
pub struct GameInstance {
    pub candidates: Vec<ImageSample>,
    pub target_index: usize,
}

impl GameInstance {
    pub fn target(&self) -> &ImageSample {
        &self.candidates[self.target_index]
    }
}

/// Draws `num_candidates` distinct samples and a uniformly chosen target.
pub fn sample_game<R: Rng + ?Sized>(
    split: &DatasetSplit,
    num_candidates: usize,
    rng: &mut R,
) -> Result<GameInstance, ShapesError> {
    if num_candidates == 0 || num_candidates > split.len() {
        return Err(ShapesError::TooManyCandidates {
            requested: num_candidates,
            available: split.len(),
        });
    }
    let candidates = index::sample(rng, split.len(), num_candidates)
        .into_iter()
        .map(|i| split.samples[i].clone())
        .collect();
    let target_index = rng.random_range(0..num_candidates);
    Ok(GameInstance {
        candidates,
        target_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand::SeedableRng;
    use std::collections::{HashMap, HashSet};

    fn small() -> Dataset {
        build_dataset(5, 400, 100)
    }

    #[test]
    fn sizes_ids_and_label_ranges() {
        let d = small();
        assert_eq!(d.train.len(), 400);
        assert_eq!(d.test.len(), 100);
        assert_eq!(d.train.id_range(), 0..400);
        assert_eq!(d.test.id_range(), 400..500);
        for s in d.all_samples() {
            assert!((s.label.color as usize) < NUM_COLORS);
            assert!((s.label.position as usize) < NUM_POSITIONS);
            assert!(s.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn combinations_are_balanced() {
        let d = small();
        let mut counts: HashMap<Label, usize> = HashMap::new();
        for s in &d.train.samples {
            *counts.entry(s.label).or_default() += 1;
        }
        assert_eq!(counts.len(), 40);
        assert!(counts.values().all(|&c| c == 10));
    }

    #[test]
    fn regeneration_is_bit_identical_and_seed_sensitive() {
        let (a, b) = (small(), small());
        for (x, y) in a.all_samples().zip(b.all_samples()) {
            assert_eq!(x.label, y.label);
            assert!(x.pixels.bit_eq(&y.pixels));
        }
        let c = build_dataset(6, 400, 100);
        assert!(a.all_samples().zip(c.all_samples()).any(|(x, y)| !x.pixels.bit_eq(&y.pixels)));
    }

    #[test]
    fn jitter_seed_ranges_disjoint() {
        for i in 0..1000 {
            assert_eq!(SplitKind::Train.jitter_seed(1, i) >> 63, 0);
            assert_eq!(SplitKind::Test.jitter_seed(1, i) >> 63, 1);
        }
    }

    #[test]
    fn games_have_distinct_candidates() {
        let d = small();
        let mut rng = StreamRng::seed_from_u64(0);
        for k in [2, 4, 5] {
            for _ in 0..200 {
                let g = sample_game(&d.train, k, &mut rng).unwrap();
                assert_eq!(g.candidates.len(), k);
                let ids: HashSet<u32> = g.candidates.iter().map(|s| s.id).collect();
                assert_eq!(ids.len(), k);
                assert!(g.target_index < k);
            }
        }
        assert!(matches!(
            sample_game(&d.test, 101, &mut rng),
            Err(ShapesError::TooManyCandidates { .. })
        ));
    }

    #[test]
    fn target_index_uniform() {
        let d = small();
        let mut rng = StreamRng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_game(&d.train, 4, &mut rng).unwrap().target_index] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }
}
