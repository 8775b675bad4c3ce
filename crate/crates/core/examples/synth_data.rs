//! One synthetic domain: class balance and where the planted cues sit.

use spoofvqa::scf::{CaptionerStub, KeywordDictionary, Label, SpoofType};
use spoofvqa::synth::{generate_domain, DomainSpec, FeatureDims};

fn main() -> spoofvqa::Result<()> {
    let dims = FeatureDims::default();
    let spec = DomainSpec::new("demo", 400, [0.25; 4], 3.0, 0.0, 5);
    let samples = generate_domain(&spec, &dims, &CaptionerStub::default(), &KeywordDictionary::default())?;
    let reals: Vec<_> = samples.iter().filter(|s| s.label == Label::Real).collect();
    println!("{} samples, {} real", samples.len(), reals.len());

    // mean norm of each global token and of the mean local token, per class
    let profile = |pick: &dyn Fn(&spoofvqa::synth::SynthSample) -> bool| {
        let group: Vec<_> = samples.iter().filter(|s| pick(s)).collect();
        let n = group.len() as f64;
        let mut out = vec![0.0; dims.n_layers + 1];
        for s in &group {
            for (l, o) in out.iter_mut().take(dims.n_layers).enumerate() {
                *o += s.vis.globals.row(l).iter().map(|x| x * x).sum::<f64>().sqrt() / n;
            }
            let mean_local: Vec<f64> = (0..dims.d_enc)
                .map(|j| (0..dims.n_local).map(|r| s.vis.local.row(r)[j]).sum::<f64>() / dims.n_local as f64)
                .collect();
            out[dims.n_layers] += mean_local.iter().map(|x| x * x).sum::<f64>().sqrt() / n;
        }
        out.iter().map(|v| format!("{v:5.2}")).collect::<Vec<_>>().join(" ")
    };
    println!("{:10} layers 1..{} | local", "", dims.n_layers);
    println!("{:10} {}", "real", profile(&|s| s.label == Label::Real));
    for t in SpoofType::ALL {
        println!("{:10} {}", t.as_str(), profile(&|s| s.record.spoof_type == Some(t)));
    }
    println!("\n{}", samples[0].record.caption);
    Ok(())
}
