use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsg::cli::{self, parse_config, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "lsg", about = "Population-based Lewis signaling games")]
struct Args {
    /// `key = value` configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the shape dataset.
    GenData,
    /// Pretrain the vision encoder on color and position.
    Pretrain,
    /// Train two disjoint populations.
    Train,
    /// Evaluate cross-population pairs on held-out images.
    Eval {
        /// Population checkpoints to pair (speakers from the first).
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        populations: Option<Vec<PathBuf>>,
        /// Also write a downsampled mean curve.
        #[arg(long)]
        plot_data: bool,
    },
    /// Connectivity, path and edge-weight statistics of a schedule.
    AnalyzeGraph {
        /// Schedule file; defaults to the first population's.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Estimate P(connected) over this many random schedules.
        #[arg(long)]
        monte_carlo: Option<usize>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return parse_config("");
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

fn run(args: Args) -> Result<(), CliError> {
    let config = load_config(args.config.as_ref())?;
    match args.command {
        Command::GenData => {
            let path = cli::gen_data(&config)?;
            println!("wrote {}", path.display());
        }
        Command::Pretrain => {
            let accuracy = cli::pretrain(&config)?;
            for (i, a) in accuracy.iter().enumerate() {
                println!("epoch {}: color {:.4} position {:.4}", i + 1, a.color, a.position);
            }
        }
        Command::Train => {
            let summary = cli::train(&config)?;
            for (p, rewards) in summary.final_rewards.iter().enumerate() {
                let shown: Vec<String> = rewards.iter().map(|r| format!("{r:.3}")).collect();
                println!("population {p}: final window reward per pairing [{}]", shown.join(", "));
            }
            println!("{} metrics rows", summary.metrics_rows);
        }
        Command::Eval {
            populations,
            plot_data,
        } => {
            let populations = populations.map(|p| (p[0].clone(), p[1].clone()));
            let summary = cli::eval(&config, populations, plot_data)?;
            for ((s, l), curve) in summary.pairs.iter().zip(&summary.curves) {
                let last = curve.final_reward().unwrap_or(0.0);
                println!("speaker {s} / listener {l}: final window reward {last:.3}");
            }
        }
        Command::AnalyzeGraph {
            schedule,
            monte_carlo,
        } => {
            let report = cli::analyze_graph(&config, schedule, monte_carlo)?;
            print!("{}", report.stats_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
