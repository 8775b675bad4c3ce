//! Small seeded inputs shared across tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spoofvqa::answer_lm::{AnswerFormat, AnswerLm, DecoderConfig, VqaSample, QUESTION};
use spoofvqa::gac::{Gac, GacConfig, VisualFeatures};
use spoofvqa::params::ParamStore;
use spoofvqa::scf::{CaptionRecord, CaptionSource, Label, SpoofType};
use spoofvqa::tensor::Tensor;
use spoofvqa::vocab::Vocabulary;

/// M=2, L=3, N=5 (local rows come from the features), D=8.
pub fn small_gac() -> Gac {
    Gac::new(GacConfig {
        d_model: 8,
        n_heads: 2,
        n_learnable: 2,
        n_layers_vision: 3,
        mlp_hidden: 16,
        d_enc: 6,
    })
    .unwrap()
}

pub fn random_vis(rng: &mut ChaCha8Rng, n_local: usize, n_layers: usize, d_enc: usize) -> VisualFeatures {
    let mut draw = |r: usize| {
        Tensor::new(vec![r, d_enc], (0..r * d_enc).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let local = draw(n_local);
    let globals = draw(n_layers);
    VisualFeatures { local, globals }
}

pub const CAPTIONS: [&str; 3] = [
    "a man holding up a paper with a photo",
    "a woman with long hair in an office",
    "a face of a person displayed on a screen",
];

pub fn toy_vocab() -> Vocabulary {
    let answers: Vec<String> = CAPTIONS.iter().map(|c| format!("This is {c}")).collect();
    Vocabulary::from_texts(std::iter::once(QUESTION).chain(answers.iter().map(String::as_str)))
}

pub fn small_lm(vocab: &Vocabulary, d_model: usize) -> AnswerLm {
    AnswerLm::new(DecoderConfig {
        vocab_size: vocab.len(),
        d_model,
        n_heads: 2,
        n_blocks: 1,
        context: 32,
        mlp_hidden: 16,
    })
    .unwrap()
}

/// Connector + decoder parameters in one store.
pub fn small_model(seed: u64, ablated: bool) -> (Gac, AnswerLm, Vocabulary, ParamStore) {
    let gac = small_gac();
    let vocab = toy_vocab();
    let lm = small_lm(&vocab, gac.config.d_model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    gac.init_params(&mut store, &mut rng);
    if ablated {
        gac.init_ablation_queries(&mut store, &mut rng);
    }
    lm.init_params(&mut store, &mut rng);
    (gac, lm, vocab, store)
}

pub fn toy_sample(vocab: &Vocabulary, vis: VisualFeatures, i: usize) -> VqaSample {
    let label = if i == 1 { Label::Real } else { Label::Fake };
    VqaSample::build(vocab, vis, label, CAPTIONS[i % 3], "toy", AnswerFormat::Interpreted).unwrap()
}

const FILLER: [&str; 16] = [
    "a", "man", "woman", "holding", "with", "in", "front", "of", "office", "smiling", "photo", "face", "masked",
    "papers", "smartphone", "cellar",
];
const KEYWORDS: [&str; 22] = [
    "paper", "cardboard", "paper card", "poster", "picture", "screen", "monitor", "cell", "phone", "tablet", "laptop",
    "ipad", "mask", "sticker", "plastic", "fake face", "plaster", "mannequin", "doll", "statue", "sculpture",
    "fake head",
];

/// Fake records with captions mixing filler words, keywords (sometimes
/// uppercased or split by odd whitespace) and keyword look-alikes.
pub fn random_fake_corpus(seed: u64, n: usize) -> Vec<CaptionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let words = rng.random_range(2..9);
            let mut parts: Vec<String> = Vec::with_capacity(words);
            for _ in 0..words {
                let w = if rng.random_bool(0.25) {
                    KEYWORDS[rng.random_range(0..KEYWORDS.len())]
                } else {
                    FILLER[rng.random_range(0..FILLER.len())]
                };
                let w = if rng.random_bool(0.1) { w.to_uppercase() } else { w.to_string() };
                parts.push(w.replace(' ', if rng.random_bool(0.2) { "  \t" } else { " " }));
            }
            let sep = if rng.random_bool(0.1) { "\n " } else { " " };
            CaptionRecord {
                image_id: format!("f{seed}-{i}"),
                label: Label::Fake,
                spoof_type: Some(SpoofType::ALL[rng.random_range(0..4)]),
                caption: parts.join(sep),
                caption_source: CaptionSource::SpoofAware,
            }
        })
        .collect()
}

/// Plain nested-loop connector, read straight off the parameter store.
pub fn gac_oracle(store: &ParamStore, vis: &VisualFeatures, n_heads: usize, ablated: bool) -> Vec<Vec<f64>> {
    use super::oracles::mat::*;
    let m = |name: &str| -> M {
        let t = store.get(name).unwrap();
        (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
    };
    let v = |name: &str| store.get(name).unwrap().data().to_vec();
    let lin = |x: &M, name: &str| linear(x, &m(&format!("{name}.weight")), &v(&format!("{name}.bias")));
    let norm = |x: &M, name: &str| ln(x, &v(&format!("{name}.gain")), &v(&format!("{name}.bias")));
    let attn = |q_in: &M, kv_in: &M, name: &str| -> M {
        let q = lin(q_in, &format!("{name}.wq"));
        let k = lin(kv_in, &format!("{name}.wk"));
        let val = lin(kv_in, &format!("{name}.wv"));
        let d = q[0].len();
        let dh = d / n_heads;
        let cols = |a: &M, lo: usize| -> M { a.iter().map(|r| r[lo..lo + dh].to_vec()).collect() };
        let mut merged: M = vec![Vec::new(); q.len()];
        for h in 0..n_heads {
            let lo = h * dh;
            let scores: M = mm(&cols(&q, lo), &t(&cols(&k, lo)))
                .into_iter()
                .map(|r| r.into_iter().map(|s| s / (dh as f64).sqrt()).collect())
                .collect();
            let out = mm(&softmax_rows(&scores), &cols(&val, lo));
            for (row, o) in merged.iter_mut().zip(out) {
                row.extend(o);
            }
        }
        lin(&merged, &format!("{name}.wo"))
    };
    let to_m = |t: &Tensor| -> M { (0..t.rows()).map(|r| t.row(r).to_vec()).collect() };

    let q_v = if ablated { m("gac.ablation_queries") } else { lin(&to_m(&vis.globals), "gac.global_proj") };
    let mut q = m("gac.queries");
    q.extend(q_v);
    let ln_q = norm(&q, "gac.ln_q");
    let q1 = add(&q, &attn(&ln_q, &ln_q, "gac.msa"));
    let kv = norm(&lin(&to_m(&vis.local), "gac.local_proj"), "gac.ln_kv");
    let q2 = add(&q1, &attn(&norm(&q1, "gac.ln_q1"), &kv, "gac.mca"));
    let h = gelu(&lin(&norm(&q2, "gac.ln_q2"), "gac.mlp.fc1"));
    add(&q2, &lin(&h, "gac.mlp.fc2"))
}

/// Decoder with non-trivial weights plus a random prefix and token sequences.
pub struct LmCase {
    pub lm: AnswerLm,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    pub prefix: Tensor,
    pub question: Vec<usize>,
    pub answer: Vec<usize>,
}

pub fn random_lm_case(seed: u64) -> LmCase {
    let vocab = toy_vocab();
    let lm = small_lm(&vocab, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    lm.init_params(&mut store, &mut rng);
    super::gradcheck::rescale_params(&mut store, seed ^ 0x5eed);
    let n_prefix = rng.random_range(1..6);
    let prefix = Tensor::randn(&[n_prefix, 8], 1.0, &mut rng);
    let q_len = rng.random_range(1..8);
    let a_len = rng.random_range(1..12);
    let pad = vocab.pad();
    let question = (0..q_len)
        .map(|_| match rng.random_range(0..vocab.len()) {
            t if t == pad => vocab.bos(),
            t => t,
        })
        .collect();
    let answer = (0..a_len).map(|_| rng.random_range(0..vocab.len())).collect();
    LmCase { lm, store, vocab, prefix, question, answer }
}

/// Trains connector + decoder on the three toy captions until the answers
/// are memorised.
pub fn overfit_three(steps: usize) -> (Gac, AnswerLm, Vocabulary, ParamStore, Vec<VqaSample>) {
    use spoofvqa::loss::lopsided_loss_on_tape;
    use spoofvqa::params::AdamW;
    let (gac, lm, vocab, mut store) = small_model(5, false);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples: Vec<VqaSample> = (0..3).map(|i| toy_sample(&vocab, random_vis(&mut rng, 5, 3, 6), i)).collect();
    let mut opt = AdamW::new(1e-2, 0.0);
    for _ in 0..steps {
        let mut total: std::collections::HashMap<String, Vec<f64>> = Default::default();
        for s in &samples {
            let mut tape = spoofvqa::tensor::Tape::new();
            let b = store.bind(&mut tape);
            let x = gac.forward(&mut tape, &b, &s.vis).unwrap();
            let logits = lm.answer_logits(&mut tape, &b, x, &s.question_tokens, &s.answer_tokens).unwrap();
            let (v, _) = lopsided_loss_on_tape(
                &mut tape,
                logits,
                &s.answer_tokens,
                s.judgment_span.clone(),
                s.interpretation_span.clone(),
                0.5,
            )
            .unwrap();
            tape.backward(v.total).unwrap();
            for (k, g) in b.grads(&tape) {
                let acc = total.entry(k).or_insert_with(|| vec![0.0; g.len()]);
                acc.iter_mut().zip(g).for_each(|(a, g)| *a += g / 3.0);
            }
        }
        opt.step(&mut store, &total).unwrap();
    }
    (gac, lm, vocab, store, samples)
}

/// Fake records captioned by the spoof-aware stub, types cycling.
pub fn stub_corpus(seed: u64, n: usize, stub: &spoofvqa::scf::CaptionerStub) -> Vec<CaptionRecord> {
    let dict = spoofvqa::scf::KeywordDictionary::default();
    (0..n)
        .map(|i| {
            let spoof = SpoofType::ALL[i % 4];
            let id = format!("s{seed}-{i}");
            CaptionRecord {
                caption: stub.caption(&id, Label::Fake, Some(spoof), CaptionSource::SpoofAware, seed, &dict),
                image_id: id,
                label: Label::Fake,
                spoof_type: Some(spoof),
                caption_source: CaptionSource::SpoofAware,
            }
        })
        .collect()
}

/// Seeded score set with both classes; every third set is quantised to
/// force ties.
pub fn random_scores(seed: u64) -> Vec<spoofvqa::metrics::ScoredSample> {
    use spoofvqa::metrics::ScoredSample;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_real = rng.random_range(1..60);
    let n_fake = rng.random_range(1..60);
    let shift: f64 = rng.random_range(0.0..0.4);
    let levels = if seed % 3 == 0 { Some(rng.random_range(2..12) as f64) } else { None };
    let mut draw = |lo: f64| {
        let x: f64 = (lo + rng.random_range(0.0..0.6)).min(1.0);
        levels.map_or(x, |l| (x * l).round() / l)
    };
    let mut out: Vec<ScoredSample> = (0..n_real).map(|_| ScoredSample::new(draw(shift), Label::Real, "d")).collect();
    out.extend((0..n_fake).map(|_| ScoredSample::new(draw(0.0), Label::Fake, "d")));
    out
}

/// Seconds-scale experiment: tiny features, tiny model, a few steps.
pub fn tiny_experiment(seeds: Vec<u64>) -> spoofvqa::pipeline::ExperimentConfig {
    use spoofvqa::model::{ModelConfig, TrainConfig};
    use spoofvqa::pipeline::ExperimentConfig;
    use spoofvqa::protocol::ProtocolSpec;
    use spoofvqa::synth::{DomainSpec, FeatureDims};
    let dims = FeatureDims { n_local: 4, n_layers: 2, d_enc: 8 };
    let dom = |tag: &str, n, seed| DomainSpec::new(tag, n, [0.25; 4], 3.0, 0.2, seed);
    ExperimentConfig {
        protocol: ProtocolSpec {
            name: "a to b&c".into(),
            sources: vec![dom("a", 60, 1)],
            targets: vec![dom("b", 40, 2), dom("c", 40, 3)],
            dev_fraction: 0.25,
        },
        seeds,
        dims,
        captioner: Default::default(),
        dictionary: Default::default(),
        model: ModelConfig {
            gac: GacConfig { d_model: 8, n_heads: 2, n_learnable: 2, n_layers_vision: 2, mlp_hidden: 16, d_enc: 8 },
            decoder: DecoderConfig { d_model: 8, n_heads: 2, n_blocks: 1, mlp_hidden: 16, ..Default::default() },
        },
        train: TrainConfig { epochs: 1, batch_size: 16, max_steps: Some(3), ..Default::default() },
        alphas: spoofvqa::pipeline::DEFAULT_ALPHA_GRID.to_vec(),
    }
}
