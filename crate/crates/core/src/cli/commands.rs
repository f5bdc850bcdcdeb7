use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::SeedableRng;

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::config::RunConfig;
use super::metrics::{metrics_csv, plot_csv, MetricsRow};
use super::CliError;
use crate::agents::{ClassifierHeads, ListenerParams, ParamTree, SpeakerParams, VisionParams};
use crate::evaluation::{build_eval_pairs, run_eval, EvalPair, LearningCurve};
use crate::graphstats::{build_pairing_graph, connected_components, GraphReport};
use crate::learning::{pretrain_vision, Accuracy};
use crate::population::{
    build_schedule, run_population, AgentRegistry, ListenerAgent, PairingSchedule, PopulationOutcome, SpeakerAgent,
    UpdateRecord,
};
use crate::rng::{stream, StreamRng};
use crate::shapes::{build_dataset, read_dataset, write_dataset, Dataset};

/// Where each stage reads and writes, all under `output.dir` except the
/// dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPaths {
    pub dataset: PathBuf,
    pub resolved_config: PathBuf,
    pub vision: PathBuf,
    pub pretrain_report: PathBuf,
    pub populations: [PathBuf; 2],
    pub schedules: [PathBuf; 2],
    pub train_metrics: PathBuf,
    pub eval_curve: PathBuf,
    pub eval_plot: PathBuf,
}

impl ArtifactPaths {
    pub fn new(config: &RunConfig) -> Self {
        let out = |name: &str| config.output_dir.join(name);
        Self {
            dataset: config.dataset_path.clone(),
            resolved_config: out("config.resolved.txt"),
            vision: out("vision.lsgc"),
            pretrain_report: out("pretrain_report.csv"),
            populations: [out("population0.lsgc"), out("population1.lsgc")],
            schedules: [out("schedule0.csv"), out("schedule1.csv")],
            train_metrics: out("train_metrics.csv"),
            eval_curve: out("eval_curve.csv"),
            eval_plot: out("eval_plot.csv"),
        }
    }

    /// Stats and histogram files for a schedule, named after it.
    pub fn graph_outputs(config: &RunConfig, schedule: &Path) -> (PathBuf, PathBuf) {
        let stem = schedule.file_stem().and_then(|s| s.to_str()).unwrap_or("schedule");
        (
            config.output_dir.join(format!("{stem}_stats.csv")),
            config.output_dir.join(format!("{stem}_histogram.csv")),
        )
    }
}

fn require(path: &Path, producer: &'static str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        })
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn prepare(config: &RunConfig) -> Result<ArtifactPaths, CliError> {
    let paths = ArtifactPaths::new(config);
    write(&paths.resolved_config, &config.to_text())?;
    Ok(paths)
}

fn load_dataset(config: &RunConfig, paths: &ArtifactPaths) -> Result<Dataset, CliError> {
    require(&paths.dataset, "gen-data")?;
    let file = File::open(&paths.dataset).map_err(|e| CliError::io(&paths.dataset, e))?;
    let samples = read_dataset(BufReader::new(file))?;
    let expected = config.train_size + config.test_size;
    if samples.len() != expected {
        return Err(CliError::Data(format!(
            "{} holds {} images but the configuration expects {expected}; rerun `lsg gen-data`",
            paths.dataset.display(),
            samples.len()
        )));
    }
    Ok(Dataset::from_samples(samples, config.train_size)?)
}

/// Renders the dataset and writes it to `dataset.path`.
pub fn gen_data(config: &RunConfig) -> Result<PathBuf, CliError> {
    let paths = prepare(config)?;
    let data = build_dataset(config.dataset_seed, config.train_size, config.test_size);
    if let Some(dir) = paths.dataset.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(&paths.dataset).map_err(|e| CliError::io(&paths.dataset, e))?;
    let samples: Vec<_> = data.all_samples().collect();
    write_dataset(BufWriter::new(file), samples.into_iter())?;
    Ok(paths.dataset)
}

/// Pretrains the encoder on the train split and saves it with its
/// classifier heads. Returns the held-out accuracy after each epoch.
pub fn pretrain(config: &RunConfig) -> Result<Vec<Accuracy>, CliError> {
    let paths = prepare(config)?;
    let data = load_dataset(config, &paths)?;
    let mut rng = stream(config.master_seed, 0, "pretrain");
    let outcome = pretrain_vision(&data.train, &data.test, config.pretrain_epochs, &mut rng)?;
    let mut ckpt = Checkpoint::new();
    ckpt.insert_tree("vision", &outcome.trained_vision);
    ckpt.insert_tree("heads", &outcome.heads);
    ckpt.insert_text("config", &config.to_text());
    save_checkpoint(&paths.vision, &ckpt)?;
    let mut report = String::from("epoch,color_accuracy,position_accuracy\n");
    for (i, a) in outcome.epoch_accuracy.iter().enumerate() {
        report.push_str(&format!("{},{:.4},{:.4}\n", i + 1, a.color, a.position));
    }
    write(&paths.pretrain_report, &report)?;
    Ok(outcome.epoch_accuracy)
}

fn load_vision(paths: &ArtifactPaths) -> Result<(VisionParams, ClassifierHeads), CliError> {
    require(&paths.vision, "pretrain")?;
    let ckpt = load_checkpoint(&paths.vision)?;
    let mut rng = StreamRng::seed_from_u64(0);
    let mut vision = VisionParams::init(&mut rng);
    let mut heads = ClassifierHeads::init(&mut rng);
    ckpt.load_tree("vision", &mut vision)?;
    ckpt.load_tree("heads", &mut heads)?;
    Ok((vision, heads))
}

/// Parameters, step counters and seed of one trained population.
pub fn population_checkpoint(index: usize, seed: u64, registry: &AgentRegistry, config: &RunConfig) -> Checkpoint {
    let mut ckpt = Checkpoint::new();
    let p = format!("population{index}");
    ckpt.insert_text(format!("{p}.seed"), &seed.to_string());
    ckpt.insert_counter(format!("{p}.n"), registry.size() as u64);
    for s in registry.speakers() {
        ckpt.insert_tree(&format!("{p}.speaker{}", s.id), &s.params);
        ckpt.insert_counter(format!("{p}.speaker{}.steps", s.id), s.steps);
    }
    for l in registry.listeners() {
        ckpt.insert_tree(&format!("{p}.listener{}", l.id), &l.params);
    }
    ckpt.insert_text("config", &config.to_text());
    ckpt
}

/// Rebuilds a registry from [`population_checkpoint`] output. Optimizer
/// state is not stored, so the agents come back with fresh optimizers.
pub fn load_population(ckpt: &Checkpoint, index: usize) -> Result<(AgentRegistry, u64), CliError> {
    let p = format!("population{index}");
    let seed: u64 = ckpt
        .text(&format!("{p}.seed"))?
        .parse()
        .map_err(|_| CliError::Checkpoint(format!("entry {p}.seed is not a seed")))?;
    let n = ckpt.counter(&format!("{p}.n"))? as usize;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(CliError::Checkpoint(format!("entry {p}.n holds {n}")));
    }
    // Shapes come from a throwaway initialization; every value is overwritten.
    let mut rng = StreamRng::seed_from_u64(0);
    let template = VisionParams::init(&mut rng);
    let mut speakers = Vec::new();
    let mut listeners = Vec::new();
    for id in 0..n / 2 {
        let mut s = SpeakerParams::init(&mut rng, template.clone());
        ckpt.load_tree(&format!("{p}.speaker{id}"), &mut s)?;
        let mut agent = SpeakerAgent::new(id, s);
        agent.steps = ckpt.counter(&format!("{p}.speaker{id}.steps"))?;
        speakers.push(agent);
        let mut l = ListenerParams::init(&mut rng, template.clone());
        ckpt.load_tree(&format!("{p}.listener{id}"), &mut l)?;
        listeners.push(ListenerAgent::new(id, l));
    }
    Ok((AgentRegistry::from_agents(speakers, listeners)?, seed))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub seeds: [u64; 2],
    /// Final trailing-window reward of each pairing, per population.
    pub final_rewards: [Vec<f32>; 2],
    pub metrics_rows: usize,
}

/// Trains the two disjoint populations (in parallel) and writes their
/// checkpoints, schedules and the per-update metrics.
pub fn train(config: &RunConfig) -> Result<TrainSummary, CliError> {
    let paths = prepare(config)?;
    let data = load_dataset(config, &paths)?;
    let (vision, _) = load_vision(&paths)?;
    let configs = [config.population(0), config.population(1)];
    let run = |pc: &crate::population::PopulationConfig| {
        let mut records: Vec<UpdateRecord> = Vec::new();
        let outcome = run_population(pc, Some(&vision), &data.train, &mut |r| records.push(r.clone()));
        outcome.map(|o| (o, records))
    };
    let results: Vec<Result<(PopulationOutcome, Vec<UpdateRecord>), _>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|pc| scope.spawn(move || run(pc))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("population thread panicked"))
            .collect()
    });
    let mut rows = Vec::new();
    let mut final_rewards: [Vec<f32>; 2] = Default::default();
    for (index, result) in results.into_iter().enumerate() {
        let (outcome, records) = result?;
        rows.extend(records.iter().map(|r| MetricsRow::train(index, r)));
        final_rewards[index] = outcome.pairs.iter().map(|p| p.final_window_reward).collect();
        let ckpt = population_checkpoint(index, configs[index].seed, &outcome.registry, config);
        save_checkpoint(&paths.populations[index], &ckpt)?;
        write(&paths.schedules[index], &outcome.schedule.to_csv())?;
    }
    write(&paths.train_metrics, &metrics_csv(&rows))?;
    Ok(TrainSummary {
        seeds: [configs[0].seed, configs[1].seed],
        final_rewards,
        metrics_rows: rows.len(),
    })
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub pairs: Vec<(usize, usize)>,
    pub curves: Vec<LearningCurve>,
}

/// Evaluates speakers of population A with listeners of population B.
/// `populations` overrides the two checkpoint paths.
pub fn eval(
    config: &RunConfig,
    populations: Option<(PathBuf, PathBuf)>,
    plot_data: bool,
) -> Result<EvalSummary, CliError> {
    let paths = prepare(config)?;
    let data = load_dataset(config, &paths)?;
    let [default_a, default_b] = paths.populations.clone();
    let (path_a, path_b) = populations.unwrap_or((default_a, default_b));
    require(&path_a, "train")?;
    require(&path_b, "train")?;
    let (a, seed_a) = load_population_file(&path_a)?;
    let (b, seed_b) = load_population_file(&path_b)?;
    if seed_a == seed_b {
        return Err(CliError::Data(format!(
            "{} and {} come from the same seed {seed_a}; evaluation needs two disjoint populations",
            path_a.display(),
            path_b.display()
        )));
    }
    if a.size() != b.size() {
        return Err(CliError::Data(format!(
            "population sizes differ: {} and {}",
            a.size(),
            b.size()
        )));
    }
    let eval_config = config.eval();
    let pairs = build_eval_pairs(&a, &b, eval_config.n_test_pairs, &mut stream(config.master_seed, 0, "eval-pairs"))?;
    let results: Vec<Result<LearningCurve, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(s, l))| {
                let (a, b, data, eval_config) = (&a, &b, &data, &eval_config);
                scope.spawn(move || -> Result<LearningCurve, CliError> {
                    let speaker = a.speaker(s)?;
                    let listener = b.listener(l)?;
                    let mut reset_rng = stream(config.master_seed, i as u64, "eval-reset");
                    let mut pair = EvalPair::reset_from(speaker, listener, &mut reset_rng);
                    let mut rng = stream(config.master_seed, i as u64, "eval");
                    let curve = run_eval(&mut pair, &data.test, eval_config, &mut rng)?;
                    let frozen = pair.speaker.params.vision.same_bits(&speaker.params.vision)
                        && pair.listener.params.vision.same_bits(&listener.params.vision);
                    if !frozen {
                        return Err(CliError::Data(format!("vision of evaluation pair {i} changed")));
                    }
                    Ok(curve)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    });
    let curves = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<MetricsRow> = pairs
        .iter()
        .zip(&curves)
        .enumerate()
        .flat_map(|(i, (&(s, l), c))| MetricsRow::eval(i, s, l, c))
        .collect();
    write(&paths.eval_curve, &metrics_csv(&rows))?;
    if plot_data {
        write(&paths.eval_plot, &plot_csv(&curves, 200))?;
    }
    Ok(EvalSummary { pairs, curves })
}

fn load_population_file(path: &Path) -> Result<(AgentRegistry, u64), CliError> {
    let ckpt = load_checkpoint(path)?;
    // The file holds exactly one population; find its index.
    let index = ckpt
        .entries()
        .iter()
        .find_map(|(name, _)| name.strip_prefix("population")?.split('.').next()?.parse::<usize>().ok())
        .ok_or_else(|| CliError::Checkpoint(format!("{}: no population entries", path.display())))?;
    load_population(&ckpt, index)
}

/// Fraction of `trials` random schedules of size `(n, k)` whose pairing
/// graph is connected.
pub fn connectivity_probability(n: usize, k: usize, trials: usize, seed: u64) -> Result<f64, CliError> {
    let mut rng = stream(seed, 0, "connectivity");
    let mut connected = 0usize;
    for _ in 0..trials {
        let schedule = build_schedule(n, k, &mut rng)?;
        if connected_components(&build_pairing_graph(&schedule)).len() == 1 {
            connected += 1;
        }
    }
    Ok(if trials == 0 { 0.0 } else { connected as f64 / trials as f64 })
}

/// Reads a schedule file and writes its statistics and weight histogram.
/// With `monte_carlo = Some(trials)` the stats also carry the estimated
/// probability that a random schedule of the same size is connected.
pub fn analyze_graph(
    config: &RunConfig,
    schedule_path: Option<PathBuf>,
    monte_carlo: Option<usize>,
) -> Result<GraphReport, CliError> {
    let paths = prepare(config)?;
    let schedule_path = schedule_path.unwrap_or_else(|| paths.schedules[0].clone());
    require(&schedule_path, "train")?;
    let text = std::fs::read_to_string(&schedule_path).map_err(|e| CliError::io(&schedule_path, e))?;
    let schedule = PairingSchedule::from_csv(&text)?;
    let report = GraphReport::of(&build_pairing_graph(&schedule));
    let mut stats = report.stats_csv();
    if let Some(trials) = monte_carlo {
        let p = connectivity_probability(schedule.n(), schedule.k(), trials, config.master_seed)?;
        stats.push_str(&format!("monte_carlo_trials,{trials}\nmonte_carlo_p_connected,{p:.6}\n"));
    }
    let (stats_path, hist_path) = ArtifactPaths::graph_outputs(config, &schedule_path);
    write(&stats_path, &stats)?;
    write(&hist_path, &report.histogram_csv())?;
    Ok(report)
}
