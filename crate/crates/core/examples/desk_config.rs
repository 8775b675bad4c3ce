//! Prints the built-in desk-scale experiment as a JSON config for the
//! `train-eval` and `sweep-alpha` subcommands.
//!
//! cargo run --example desk_config > desk.json

use spoofvqa::pipeline::ExperimentConfig;

fn main() -> spoofvqa::Result<()> {
    let config = ExperimentConfig::desk_scale(vec![1, 2, 3]);
    println!("{}", serde_json::to_string_pretty(&config)?);
    Ok(())
}
