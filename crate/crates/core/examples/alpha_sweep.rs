//! Sweeps the lopsided-loss weight and writes the plot-ready CSV.
//!
//! cargo run --release --example alpha_sweep -- OUT_DIR

use spoofvqa::pipeline::{cmd_sweep_alpha, ExperimentConfig};
use std::path::PathBuf;

fn main() -> spoofvqa::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/alpha_sweep".into()));
    let mut config = ExperimentConfig::desk_scale(vec![1, 2]);
    config.train.epochs = 3;
    for row in cmd_sweep_alpha(&config, &out)? {
        println!(
            "alpha {:.2}: HTER {:6.2}  AUC {:6.2}  judgment accuracy {:6.2}",
            row.alpha, row.hter.mean, row.auc.mean, row.judgment_accuracy.mean
        );
    }
    println!("wrote {}", out.join("alpha_sweep.csv").display());
    Ok(())
}
