mod common;

use common::decode::incremental_logprobs;
use common::fixtures::{overfit_three, random_lm_case, small_lm, toy_vocab};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spoofvqa::answer_lm::judge;
use spoofvqa::params::ParamStore;
use spoofvqa::scf::Label;
use spoofvqa::tensor::Tensor;

#[test]
fn zero_head_gives_uniform_logprobs() {
    let vocab = toy_vocab();
    let lm = small_lm(&vocab, 8);
    let mut store = ParamStore::new();
    lm.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(1));
    let prefix = Tensor::randn(&[3, 8], 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let lp = lm.sequence_logprob(&store, &vocab, &prefix, &[vocab.bos()], &[vocab.yes(), 7, 9]).unwrap();
    let want = -(vocab.len() as f64).ln();
    for v in lp {
        assert!((v - want).abs() < 1e-12);
    }
    let s = lm.predict_score(&store, &vocab, &prefix, &[vocab.bos()]).unwrap();
    assert!((s - 1.0 / vocab.len() as f64).abs() < 1e-15);
}

#[test]
fn teacher_forced_matches_incremental_exactly() {
    for seed in 0..30 {
        let c = random_lm_case(seed);
        let tf = c.lm.sequence_logprob(&c.store, &c.vocab, &c.prefix, &c.question, &c.answer).unwrap();
        let inc = incremental_logprobs(&c.lm, &c.store, &c.prefix, &c.question, &c.answer);
        assert_eq!(tf, inc, "seed {seed}");
    }
}

#[test]
fn logprob_sum_is_log_of_product() {
    let c = random_lm_case(3);
    let lp = c.lm.sequence_logprob(&c.store, &c.vocab, &c.prefix, &c.question, &c.answer).unwrap();
    let product: f64 = lp.iter().map(|v| v.exp()).product();
    assert!((lp.iter().sum::<f64>() - product.ln()).abs() < 1e-10);
}

#[test]
fn score_distribution_is_normalised() {
    for seed in 0..10 {
        let c = random_lm_case(seed);
        let dist = c.lm.next_token_distribution(&c.store, &c.prefix, &c.question).unwrap();
        let score = c.lm.predict_score(&c.store, &c.vocab, &c.prefix, &c.question).unwrap();
        let others: f64 = dist.iter().enumerate().filter(|(i, _)| *i != c.vocab.yes() && *i != c.vocab.no()).map(|(_, p)| p).sum();
        assert!((score + dist[c.vocab.no()] + others - 1.0).abs() < 1e-10);
    }
}

#[test]
fn forcing_the_yes_logit_saturates_the_score() {
    let mut c = random_lm_case(4);
    let yes = c.vocab.yes();
    c.store.get_mut("lm.head.weight").unwrap().data_mut().fill(0.0);
    let bias = c.store.get_mut("lm.head.bias").unwrap();
    bias.data_mut().fill(0.0);
    bias.data_mut()[yes] = 1000.0;
    let s = c.lm.predict_score(&c.store, &c.vocab, &c.prefix, &c.question).unwrap();
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn later_tokens_do_not_affect_earlier_positions() {
    for seed in 0..10 {
        let c = random_lm_case(seed);
        if c.answer.len() < 2 {
            continue;
        }
        let base = c.lm.sequence_logprob(&c.store, &c.vocab, &c.prefix, &c.question, &c.answer).unwrap();
        let j = c.answer.len() / 2;
        let mut changed = c.answer.clone();
        changed[j] = (changed[j] + 1) % c.vocab.len();
        let out = c.lm.sequence_logprob(&c.store, &c.vocab, &c.prefix, &c.question, &changed).unwrap();
        assert_eq!(base[..j], out[..j]);
    }
}

#[test]
fn trailing_padding_does_not_change_the_score() {
    let c = random_lm_case(5);
    let base = c.lm.predict_score(&c.store, &c.vocab, &c.prefix, &c.question).unwrap();
    for n in 1..4 {
        let mut q = c.question.clone();
        q.extend(std::iter::repeat_n(c.vocab.pad(), n));
        assert_eq!(c.lm.predict_score(&c.store, &c.vocab, &c.prefix, &q).unwrap(), base);
    }
}

#[test]
fn unknown_ids_are_rejected() {
    let c = random_lm_case(6);
    let bad = [c.vocab.len() + 3];
    assert!(c.lm.sequence_logprob(&c.store, &c.vocab, &c.prefix, &c.question, &bad).is_err());
    assert!(c.lm.sequence_logprob(&c.store, &c.vocab, &c.prefix, &c.question, &[]).is_err());
}

#[test]
fn generation_is_deterministic_and_respects_max_len() {
    let c = random_lm_case(7);
    let a = c.lm.generate(&c.store, &c.vocab, &c.prefix, &c.question, 6).unwrap();
    let b = c.lm.generate(&c.store, &c.vocab, &c.prefix, &c.question, 6).unwrap();
    assert_eq!(a, b);
    assert!(!a.is_empty() && a.len() <= 6);
    assert_eq!(c.lm.generate(&c.store, &c.vocab, &c.prefix, &c.question, 1).unwrap().len(), 1);
    assert!(c.lm.generate(&c.store, &c.vocab, &c.prefix, &c.question, 0).is_err());
}

#[test]
fn judgment_ties_reject() {
    assert_eq!(judge(0.4, 0.4), Label::Fake);
    assert_eq!(judge(0.41, 0.4), Label::Real);
}

#[test]
fn memorises_a_three_sample_corpus() {
    let (gac, lm, vocab, store, samples) = overfit_three(300);
    for s in &samples {
        let prefix = gac.forward_value(&store, &s.vis, false).unwrap();
        let out = lm.generate(&store, &vocab, &prefix, &s.question_tokens, 20).unwrap();
        assert_eq!(out, s.answer_tokens, "{}", vocab.decode(&out).unwrap_or_default());
    }
    // the trained model is sensitive to its visual prefix
    let s = &samples[0];
    let prefix = gac.forward_value(&store, &s.vis, false).unwrap();
    let other = gac.forward_value(&store, &samples[1].vis, false).unwrap();
    let a = lm.predict_score(&store, &vocab, &prefix, &s.question_tokens).unwrap();
    let b = lm.predict_score(&store, &vocab, &other, &s.question_tokens).unwrap();
    assert!((a - b).abs() > 1e-3, "{a} vs {b}");
}
