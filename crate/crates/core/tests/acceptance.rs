//! End-to-end acceptance checks, one report line per criterion.
//!
//! Runs without the libtest harness so the lines reach the console. The
//! desk-scale learning runs take tens of minutes on one core. Set
//! `LSG_ACCEPTANCE_ONLY=1,4` to run a subset, and `LSG_LONG_RUN=1` to include
//! the multi-hour population comparison.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use lsg::agents::{is_vision, ParamTree, TrainableSet, VisionParams};
use lsg::cli::{self, parse_config, RunConfig};
use lsg::evaluation::{build_eval_pairs, run_eval, EvalConfig, EvalPair};
use lsg::learning::{play_batch, pretrain_vision, FeatureTable, Features, PlayConfig};
use lsg::population::{build_schedule, run_pair, run_population, AgentRegistry, PopulationConfig};
use lsg::rng::stream;
use lsg::shapes::{build_dataset, sample_game, Dataset, DatasetSplit};

const DATASET_SEED: u64 = 2024;
const DESK_GAMES: usize = 64_000;
const DESK_SEEDS: [u64; 3] = [0, 1, 2];
const DESK_TARGET: f32 = 0.6;
const BASELINE_TOL: f64 = 0.015;

struct Report {
    failed: Vec<u32>,
    only: Option<BTreeSet<u32>>,
}

impl Report {
    fn wants(&self, id: u32) -> bool {
        self.only.as_ref().is_none_or(|s| s.contains(&id))
    }

    fn line(&mut self, id: u32, pass: bool, elapsed: Duration, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id}: {verdict} ({:.1}s) {detail}", elapsed.as_secs_f64());
        if !pass {
            self.failed.push(id);
        }
    }
}

fn gradients() -> (bool, String) {
    let mut worst_op = 0.0f32;
    let mut worst_name = "";
    for case in common::op_cases() {
        for seed in 0..20 {
            let e = common::op_gradient_error(&case, 7000 + seed);
            if e > worst_op {
                (worst_op, worst_name) = (e, case.name);
            }
        }
    }
    let worst_surrogate = (0..20).map(common::surrogate_gradient_error).fold(0.0f64, f64::max);
    let pass = worst_op <= common::GRAD_TOL && worst_surrogate <= f64::from(common::GRAD_TOL);
    (
        pass,
        format!(
            "{} ops x 20 seeds worst rel err {worst_op:.2e} ({worst_name}); surrogate x 20 seeds worst {worst_surrogate:.2e}; tol {:.0e}",
            common::op_cases().len(),
            common::GRAD_TOL
        ),
    )
}

/// Mean reward of an untrained pair over `games` games, no updates.
fn chance_reward(vision: &VisionParams, split: &DatasetSplit, candidates: usize, games: usize, seed: u64) -> f64 {
    let registry = AgentRegistry::init(2, vision, &mut stream(seed, 0, "baseline-init")).unwrap();
    let pair = EvalPair::reset_from(&registry.speakers()[0], &registry.listeners()[0], &mut stream(seed, 0, "reset"));
    let st = FeatureTable::compute(&pair.speaker.params.vision, &split.samples).unwrap();
    let lt = FeatureTable::compute(&pair.listener.params.vision, &split.samples).unwrap();
    let config = PlayConfig {
        filter: TrainableSet::Frozen,
        features: Features::Cached { speaker: &st, listener: &lt },
    };
    let mut rng = stream(seed, candidates as u64, "baseline-games");
    let mut total = 0.0f64;
    for _ in 0..games / 100 {
        let batch: Vec<_> = (0..100).map(|_| sample_game(split, candidates, &mut rng).unwrap()).collect();
        let outcome = play_batch(&pair.speaker.params, &pair.listener.params, &batch, config, &mut rng).unwrap();
        total += outcome.rewards().iter().map(|&r| f64::from(r)).sum::<f64>();
    }
    total / games as f64
}

fn schedules() -> (bool, String) {
    let mut ok = true;
    for n in [2usize, 6, 10] {
        for seed in 0..1000u64 {
            let s = build_schedule(n, 4, &mut stream(seed, n as u64, "schedule")).unwrap();
            let half = n / 2;
            let mut sc = vec![0; half];
            let mut lc = vec![0; half];
            for &(a, b) in s.pairs() {
                sc[a] += 1;
                lc[b] += 1;
            }
            ok &= s.len() == 4 * n / 2 && sc.iter().chain(&lc).all(|&c| c == 4);
            if n == 2 {
                ok &= s.pairs() == [(0, 0); 4];
            }
        }
    }
    (ok, "n in {2,6,10}, k = 4, 1000 schedules each: occurrence counts, k*n/2 pairs, n=2 forced".into())
}

fn desk_pair(vision: &VisionParams, train: &DatasetSplit, seed: u64) -> (f32, AgentRegistry) {
    let config = PopulationConfig {
        n: 2,
        steps: DESK_GAMES,
        seed,
        ..PopulationConfig::default()
    };
    let mut registry = AgentRegistry::init(2, vision, &mut stream(seed, 0, "init")).unwrap();
    let summary = run_pair(&mut registry, 0, 0, 0, &config, train, &mut stream(seed, 0, "pair"), &mut |_| {}).unwrap();
    (summary.final_window_reward, registry)
}

fn freeze_contract(a: &AgentRegistry, b: &AgentRegistry, test: &DatasetSplit) -> (bool, String) {
    let config = EvalConfig {
        steps: DESK_GAMES,
        n_test_pairs: 1,
        ..EvalConfig::default()
    };
    let pairs = build_eval_pairs(a, b, 1, &mut stream(9, 0, "pairs")).unwrap();
    let (s, l) = pairs[0];
    let mut pair = EvalPair::reset_from(&a.speakers()[s], &b.listeners()[l], &mut stream(9, 0, "reset"));
    let before = pair.clone();
    let curve = run_eval(&mut pair, test, &config, &mut stream(9, 0, "eval")).unwrap();
    let vision_frozen = pair.speaker.params.vision.same_bits(&a.speakers()[s].params.vision)
        && pair.listener.params.vision.same_bits(&b.listeners()[l].params.vision);
    let mutated = |x: &dyn Fn() -> Vec<(String, bool)>| -> (BTreeSet<String>, BTreeSet<String>) {
        let all = x();
        let changed = all.iter().filter(|(_, c)| *c).map(|(n, _)| n.clone()).collect();
        let policy = all.iter().map(|(n, _)| n.clone()).filter(|n| !is_vision(n)).collect();
        (changed, policy)
    };
    let diff = |p: &dyn ParamTreeDyn, q: &dyn ParamTreeDyn| -> Vec<(String, bool)> {
        p.named_dyn().into_iter().zip(q.named_dyn()).map(|((n, t), (_, u))| (n, !t.bit_eq(&u))).collect()
    };
    let (sc, sp) = mutated(&|| diff(&before.speaker.params, &pair.speaker.params));
    let (lc, lp) = mutated(&|| diff(&before.listener.params, &pair.listener.params));
    let pass = vision_frozen && sc == sp && lc == lp;
    let first = curve.points.first().map_or(0.0, |p| p.window_reward);
    let last = curve.final_reward().unwrap_or(0.0);
    (
        pass,
        format!(
            "vision bit-identical: {vision_frozen}; mutated = policy set: speaker {} listener {}; eval reward {first:.3} -> {last:.3} over {DESK_GAMES} games",
            sc == sp,
            lc == lp
        ),
    )
}

/// Object-safe view of [`ParamTree::named`].
trait ParamTreeDyn {
    fn named_dyn(&self) -> Vec<(String, lsg::numerics::Tensor)>;
}

impl<P: ParamTree> ParamTreeDyn for P {
    fn named_dyn(&self) -> Vec<(String, lsg::numerics::Tensor)> {
        self.named().into_iter().map(|(n, t)| (n, t.clone())).collect()
    }
}

fn pipeline_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> (bool, String) {
    let root = tempfile::tempdir().unwrap();
    let text = format!(
        "dataset.path = {}\ndataset.train_size = 400\ndataset.test_size = 100\npretrain.epochs = 1\n\
         population.n = 4\npair.steps = 320\neval.steps = 1024\neval.n_test_pairs = 2\nseed.master = 11\noutput.dir = {}\n",
        root.path().join("shapes.lsgd").display(),
        root.path().join("out").display()
    );
    let config: RunConfig = parse_config(&text).unwrap();
    let run = || {
        let _ = std::fs::remove_dir_all(&config.output_dir);
        cli::gen_data(&config).unwrap();
        cli::pretrain(&config).unwrap();
        cli::train(&config).unwrap();
        cli::eval(&config, None, true).unwrap();
        cli::analyze_graph(&config, None, Some(100)).unwrap();
        pipeline_files(&config.output_dir)
    };
    let first = run();
    let second = run();
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    let pass = first == second && names.contains(&"train_metrics.csv") && names.contains(&"population0.lsgc");
    (pass, format!("{} artifacts compared byte for byte: {}", names.len(), names.join(" ")))
}

fn population_effect(vision: &VisionParams, data: &Dataset) -> (bool, String) {
    let mut finals = Vec::new();
    for n in [2usize, 6] {
        let mut total = 0.0f64;
        for seed in 0..3u64 {
            let run = |index: u64| {
                let config = PopulationConfig {
                    n,
                    steps: 256_000,
                    seed: lsg::rng::derive_seed(seed, index, "population"),
                    ..PopulationConfig::default()
                };
                run_population(&config, Some(vision), &data.train, &mut |_| {}).unwrap().registry
            };
            let (a, b) = (run(0), run(1));
            let eval = EvalConfig {
                steps: 256_000,
                n_test_pairs: (n / 2).min(4),
                ..EvalConfig::default()
            };
            let pairs = build_eval_pairs(&a, &b, eval.n_test_pairs, &mut stream(seed, 0, "eval-pairs")).unwrap();
            for (i, &(s, l)) in pairs.iter().enumerate() {
                let mut pair = EvalPair::reset_from(&a.speakers()[s], &b.listeners()[l], &mut stream(seed, i as u64, "reset"));
                let curve = run_eval(&mut pair, &data.test, &eval, &mut stream(seed, i as u64, "eval")).unwrap();
                total += f64::from(curve.final_reward().unwrap()) / pairs.len() as f64 / 3.0;
            }
        }
        finals.push(total);
    }
    (finals[1] > finals[0], format!("final windowed eval reward n=2 {:.3}, n=6 {:.3}", finals[0], finals[1]))
}

fn main() {
    let only = std::env::var("LSG_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut report = Report { failed: Vec::new(), only };

    if report.wants(1) {
        let t = Instant::now();
        let (pass, detail) = gradients();
        let elapsed = t.elapsed();
        report.line(1, pass && elapsed < Duration::from_secs(60), elapsed, detail);
    }

    let needs_data = [2, 3, 5, 6, 8].iter().any(|&i| report.wants(i));
    let prepared = needs_data.then(|| {
        let data = build_dataset(DATASET_SEED, 4000, 1000);
        let t = Instant::now();
        let outcome = pretrain_vision(&data.train, &data.test, 10, &mut stream(DATASET_SEED, 0, "pretrain")).unwrap();
        (data, outcome, t.elapsed())
    });

    if report.wants(2) {
        let (data, outcome, _) = prepared.as_ref().unwrap();
        let t = Instant::now();
        let five = chance_reward(&outcome.vision, &data.test, 5, 10_000, 1);
        let four = chance_reward(&outcome.vision, &data.test, 4, 10_000, 2);
        let pass = (five - 0.2).abs() <= BASELINE_TOL && (four - 0.25).abs() <= BASELINE_TOL;
        let elapsed = t.elapsed();
        report.line(
            2,
            pass && elapsed < Duration::from_secs(60),
            elapsed,
            format!("untrained pair, 10000 games: |X|=5 {five:.4} (0.2 +/- {BASELINE_TOL}), |X|=4 {four:.4} (0.25 +/- {BASELINE_TOL})"),
        );
    }

    if report.wants(3) {
        let (_, outcome, elapsed) = prepared.as_ref().unwrap();
        let first = outcome.epoch_accuracy.iter().position(|a| a.min() >= 0.95);
        let shown: Vec<String> = outcome
            .epoch_accuracy
            .iter()
            .map(|a| format!("{:.3}/{:.3}", a.color, a.position))
            .collect();
        report.line(
            3,
            first.is_some() && *elapsed < Duration::from_secs(600),
            *elapsed,
            format!(
                "held-out color/position accuracy per epoch [{}]; >= 0.95 on both first at epoch {}",
                shown.join(" "),
                first.map_or("none".into(), |e| (e + 1).to_string())
            ),
        );
    }

    if report.wants(4) {
        let t = Instant::now();
        let (pass, detail) = schedules();
        let elapsed = t.elapsed();
        report.line(4, pass && elapsed < Duration::from_secs(60), elapsed, detail);
    }

    let mut desk_registries = Vec::new();
    if report.wants(5) || report.wants(6) {
        let (data, outcome, _) = prepared.as_ref().unwrap();
        let t = Instant::now();
        let seeds: &[u64] = if report.wants(5) { &DESK_SEEDS } else { &DESK_SEEDS[..2] };
        let mut rewards = Vec::new();
        for &seed in seeds {
            let (reward, registry) = desk_pair(&outcome.vision, &data.train, seed);
            rewards.push(reward);
            desk_registries.push(registry);
        }
        if report.wants(5) {
            let hits = rewards.iter().filter(|&&r| r >= DESK_TARGET).count();
            let shown: Vec<String> = rewards.iter().map(|r| format!("{r:.3}")).collect();
            report.line(
                5,
                hits >= 2,
                t.elapsed(),
                format!(
                    "n=2 pair, |X|=4, {DESK_GAMES} games, batch 32: trailing 1000-game reward per seed [{}]; {hits}/3 >= {DESK_TARGET}",
                    shown.join(", ")
                ),
            );
        }
    }

    if report.wants(6) {
        let (data, _, _) = prepared.as_ref().unwrap();
        let t = Instant::now();
        let (pass, detail) = freeze_contract(&desk_registries[0], &desk_registries[1], &data.test);
        report.line(6, pass, t.elapsed(), detail);
    }

    if report.wants(7) {
        let t = Instant::now();
        let (pass, detail) = determinism();
        report.line(7, pass, t.elapsed(), detail);
    }

    if report.wants(8) {
        if std::env::var_os("LSG_LONG_RUN").is_some() {
            let (data, outcome, _) = prepared.as_ref().unwrap();
            let t = Instant::now();
            let (pass, detail) = population_effect(&outcome.vision, data);
            // Optional: a miss is reported but does not fail the suite.
            let verdict = if pass { "PASS" } else { "FAIL (optional, not counted)" };
            println!("criterion 8: {verdict} ({:.1}s) {detail}", t.elapsed().as_secs_f64());
        } else {
            println!("criterion 8: SKIPPED optional long run; set LSG_LONG_RUN=1");
        }
    }

    if report.failed.is_empty() {
        println!("acceptance: all checked criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", report.failed);
        std::process::exit(1);
    }
}
