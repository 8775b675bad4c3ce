//! AUC, HTER and threshold selection on a small hand-made score set.

use spoofvqa::metrics::{compute_auc, compute_hter, eer_threshold, select_threshold, ScoredSample};
use spoofvqa::scf::Label;

fn main() -> spoofvqa::Result<()> {
    let reals = [0.92, 0.85, 0.77, 0.61, 0.40];
    let fakes = [0.70, 0.35, 0.30, 0.12, 0.05, 0.35];
    let samples: Vec<ScoredSample> = reals
        .iter()
        .map(|&s| ScoredSample::new(s, Label::Real, "demo"))
        .chain(fakes.iter().map(|&s| ScoredSample::new(s, Label::Fake, "demo")))
        .collect();

    println!("AUC {:.2}", compute_auc(&samples)?);
    for t in [0.0, 0.5, 1.0] {
        println!("HTER at {t:.2}: {:.2}", compute_hter(&samples, t)?);
    }
    let t = select_threshold(&samples)?;
    println!("best threshold {t:.3}: HTER {:.2}", compute_hter(&samples, t)?);
    let e = eer_threshold(&samples)?;
    println!("EER threshold {e:.3}: HTER {:.2}", compute_hter(&samples, e)?);
    Ok(())
}
