//! Trains briefly on one synthetic domain and prints the model's free-form
//! answers next to the liveness score.

use spoofvqa::pipeline::ExperimentConfig;
use spoofvqa::protocol::LivenessTrainer;
use spoofvqa::synth::generate_domain;

fn main() -> spoofvqa::Result<()> {
    let config = ExperimentConfig::desk_scale(vec![1]);
    let data = config.data()?;
    let mut trainer = config.trainer();
    trainer.train.epochs = 4;
    let model = trainer.train(&data.train, 1)?;

    let target = &config.protocol.targets[0];
    let samples = generate_domain(target, &config.dims, &config.captioner, &config.dictionary)?;
    for s in samples.iter().take(8) {
        let truth = s.record.spoof_type.map_or("real", |t| t.as_str());
        println!("[{truth:9}] p(yes) {:.3}  {}", model.score(&s.vis)?, model.answer(&s.vis, 16)?);
    }
    Ok(())
}
