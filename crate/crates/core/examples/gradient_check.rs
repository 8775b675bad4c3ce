//! Central finite differences against the tape's gradients on a small
//! connector + decoder + lopsided loss graph.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spoofvqa::answer_lm::{AnswerFormat, AnswerLm, DecoderConfig, VqaSample, QUESTION};
use spoofvqa::gac::{Gac, GacConfig, VisualFeatures};
use spoofvqa::loss::lopsided_loss_on_tape;
use spoofvqa::params::ParamStore;
use spoofvqa::scf::Label;
use spoofvqa::tensor::{Tape, Tensor};
use spoofvqa::vocab::Vocabulary;

fn main() -> spoofvqa::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let gac = Gac::new(GacConfig { d_model: 8, n_heads: 2, n_learnable: 2, n_layers_vision: 3, mlp_hidden: 16, d_enc: 6 })?;
    let caption = "a man holding up a paper";
    let vocab = Vocabulary::from_texts([QUESTION, &format!("This is {caption}")]);
    let lm = AnswerLm::new(DecoderConfig { vocab_size: vocab.len(), d_model: 8, n_heads: 2, n_blocks: 1, context: 32, mlp_hidden: 16 })?;
    let mut store = ParamStore::new();
    gac.init_params(&mut store, &mut rng);
    lm.init_params(&mut store, &mut rng);
    // larger weights than the 0.02 init so every path carries signal
    for name in store.names().cloned().collect::<Vec<_>>() {
        let t = store.get_mut(&name)?;
        let noise = Tensor::randn(t.shape(), 0.3, &mut rng);
        for (x, n) in t.data_mut().iter_mut().zip(noise.data()) {
            *x += n;
        }
    }
    let vis = VisualFeatures { local: Tensor::randn(&[5, 6], 1.0, &mut rng), globals: Tensor::randn(&[3, 6], 1.0, &mut rng) };
    let sample = VqaSample::build(&vocab, vis, Label::Fake, caption, "demo", AnswerFormat::Interpreted)?;

    let loss = |store: &ParamStore, grads: bool| -> spoofvqa::Result<(f64, Option<Vec<f64>>)> {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let x = gac.forward(&mut tape, &b, &sample.vis)?;
        let logits = lm.answer_logits(&mut tape, &b, x, &sample.question_tokens, &sample.answer_tokens)?;
        let (v, _) = lopsided_loss_on_tape(
            &mut tape,
            logits,
            &sample.answer_tokens,
            sample.judgment_span.clone(),
            sample.interpretation_span.clone(),
            0.7,
        )?;
        let value = tape.value(v.total).item();
        if !grads {
            return Ok((value, None));
        }
        tape.backward(v.total)?;
        Ok((value, Some(b.grads(&tape).remove("gac.queries").unwrap())))
    };

    let (value, analytic) = loss(&store, true)?;
    let analytic = analytic.unwrap();
    println!("loss {value:.6}");
    println!("{:>5} {:>14} {:>14} {:>10}", "coord", "analytic", "numeric", "rel err");
    let h = 1e-5;
    for i in 0..analytic.len() {
        let mut plus = store.clone();
        plus.get_mut("gac.queries")?.data_mut()[i] += h;
        let mut minus = store.clone();
        minus.get_mut("gac.queries")?.data_mut()[i] -= h;
        let numeric = (loss(&plus, false)?.0 - loss(&minus, false)?.0) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-12);
        println!("{i:>5} {:>14.8} {numeric:>14.8} {rel:>10.2e}", analytic[i]);
    }
    Ok(())
}
