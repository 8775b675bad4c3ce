//! Full connector against the variant whose global tokens are replaced by
//! learnable queries, on the desk-scale protocol.
//!
//! cargo run --release --example gac_ablation -- [seeds...]

use spoofvqa::pipeline::ExperimentConfig;
use spoofvqa::protocol::run_protocol;

fn main() -> spoofvqa::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let config = ExperimentConfig::desk_scale(if seeds.is_empty() { vec![1] } else { seeds });
    let data = config.data()?;
    let full = run_protocol(&config.protocol, &data, &config.trainer(), &config.seeds)?;
    let mut ablated_trainer = config.trainer();
    ablated_trainer.train.ablate_gac = true;
    let ablated = run_protocol(&config.protocol, &data, &ablated_trainer, &config.seeds)?;

    println!("{:8} {:>10} {:>10}", "target", "full AUC", "ablated");
    for (f, a) in full.per_domain.iter().zip(&ablated.per_domain) {
        println!("{:8} {:10.2} {:10.2}", f.domain_tag, f.auc.mean, a.auc.mean);
    }
    println!("{:8} {:10.2} {:10.2}", "avg", full.auc.mean, ablated.auc.mean);
    Ok(())
}
