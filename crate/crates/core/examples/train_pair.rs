//! Trains a single speaker-listener pair and prints its learning curve.
//! Pass the number of games as the first argument (default 4096).

use lsg::learning::pretrain_vision;
use lsg::population::{run_pair, AgentRegistry, PopulationConfig};
use lsg::rng::stream;
use lsg::shapes::build_dataset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let games = std::env::args().nth(1).map_or(Ok(4096), |a| a.parse())?;
    let data = build_dataset(5, 1000, 250);
    let vision = pretrain_vision(&data.train, &data.test, 1, &mut stream(5, 0, "pretrain"))?.vision;

    let config = PopulationConfig { n: 2, steps: games, seed: 5, ..PopulationConfig::default() };
    let mut registry = AgentRegistry::init(2, &vision, &mut stream(5, 0, "init"))?;
    let summary = run_pair(&mut registry, 0, 0, 0, &config, &data.train, &mut stream(5, 0, "pair"), &mut |r| {
        if r.games_played % 1024 == 0 {
            println!("games {:6} reward {:.3} entropy {:.3} alpha {:.4}", r.games_played, r.mean_reward, r.mean_entropy, r.alpha);
        }
    })?;
    println!("trailing reward after {} games: {:.3}", summary.games_played, summary.final_window_reward);
    Ok(())
}
