//! Builds a random pairing schedule and reports its graph statistics, plus a
//! Monte Carlo estimate of how often schedules are connected.

use lsg::cli::connectivity_probability;
use lsg::graphstats::{build_pairing_graph, islands, GraphReport};
use lsg::population::build_schedule;
use lsg::rng::stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = build_schedule(10, 4, &mut stream(1, 0, "schedule"))?;
    print!("{}", schedule.to_csv());

    let graph = build_pairing_graph(&schedule);
    println!("islands: {:?}", islands(&graph));
    let report = GraphReport::of(&graph);
    print!("{}{}", report.stats_csv(), report.histogram_csv());

    for n in [2, 6, 10, 20] {
        println!("n = {n:2}: P(connected) ~ {:.3}", connectivity_probability(n, 4, 2000, 1)?);
    }
    Ok(())
}
