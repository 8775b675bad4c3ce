//! Train on two synthetic source domains, evaluate on three shifted targets.
//!
//! cargo run --release --example cross_domain -- [seeds...]

use spoofvqa::pipeline::ExperimentConfig;
use spoofvqa::protocol::run_protocol;
use std::time::Instant;

fn main() -> spoofvqa::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let config = ExperimentConfig::desk_scale(if seeds.is_empty() { vec![1] } else { seeds });
    let start = Instant::now();
    let data = config.data()?;
    println!("train {} / dev {} samples", data.train.len(), data.dev.len());

    let mut untrained = config.trainer();
    untrained.train.epochs = 0;
    let base = run_protocol(&config.protocol, &data, &untrained, &config.seeds)?;
    println!("untrained: AUC {:.2} HTER {:.2}", base.auc.mean, base.hter.mean);

    let report = run_protocol(&config.protocol, &data, &config.trainer(), &config.seeds)?;
    for d in &report.per_domain {
        println!(
            "{:6} AUC {:6.2} HTER {:6.2} (oracle EER {:5.2}) judgment acc {:6.2}",
            d.domain_tag, d.auc.mean, d.hter.mean, d.hter_oracle_eer.mean, d.judgment_accuracy.mean
        );
    }
    println!("avg    AUC {:6.2} HTER {:6.2}", report.auc.mean, report.hter.mean);
    println!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
