//! Runs every pipeline stage at toy scale into a temporary directory.

use lsg::cli::{self, parse_config, CliError};

fn main() -> Result<(), CliError> {
    let dir = std::env::temp_dir().join("lsg-pipeline-example");
    let text = format!(
        "dataset.path = {0}/shapes.lsgd\ndataset.train_size = 400\ndataset.test_size = 100\n\
         pretrain.epochs = 1\npopulation.n = 4\npair.steps = 320\neval.steps = 1024\n\
         eval.n_test_pairs = 2\nseed.master = 3\noutput.dir = {0}/out\n",
        dir.display()
    );
    let config = parse_config(&text)?;
    cli::gen_data(&config)?;
    cli::pretrain(&config)?;
    cli::train(&config)?;
    cli::eval(&config, None, true)?;
    let report = cli::analyze_graph(&config, None, Some(500))?;
    print!("{}", report.stats_csv());
    for entry in std::fs::read_dir(&config.output_dir).map_err(|e| CliError::io(&config.output_dir, e))? {
        println!("{}", entry.map_err(|e| CliError::io(&config.output_dir, e))?.path().display());
    }
    Ok(())
}
