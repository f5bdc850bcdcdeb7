//! Trains two tiny populations and evaluates a cross-population pair with
//! frozen vision.

use lsg::evaluation::{build_eval_pairs, run_eval, EvalConfig, EvalPair};
use lsg::learning::pretrain_vision;
use lsg::population::{run_population, PopulationConfig};
use lsg::rng::{derive_seed, stream};
use lsg::shapes::build_dataset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = build_dataset(9, 600, 200);
    let vision = pretrain_vision(&data.train, &data.test, 1, &mut stream(9, 0, "pretrain"))?.vision;

    let train = |index| {
        let config = PopulationConfig { n: 4, steps: 512, seed: derive_seed(9, index, "population"), ..PopulationConfig::default() };
        run_population(&config, Some(&vision), &data.train, &mut |_| {})
    };
    let (a, b) = (train(0)?.registry, train(1)?.registry);

    let config = EvalConfig { steps: 4096, n_test_pairs: 2, ..EvalConfig::default() };
    for (i, (s, l)) in build_eval_pairs(&a, &b, 2, &mut stream(9, 0, "pairs"))?.into_iter().enumerate() {
        let mut pair = EvalPair::reset_from(&a.speakers()[s], &b.listeners()[l], &mut stream(9, i as u64, "reset"));
        let curve = run_eval(&mut pair, &data.test, &config, &mut stream(9, i as u64, "eval"))?;
        let shown: Vec<String> = curve.points.iter().map(|p| format!("{:.2}", p.window_reward)).collect();
        println!("speaker {s} / listener {l}: {}", shown.join(" "));
    }
    Ok(())
}
