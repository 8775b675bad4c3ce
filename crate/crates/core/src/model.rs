//! Connector + decoder wired into a trainable liveness model.

use crate::answer_lm::{judge, AnswerFormat, AnswerLm, DecoderConfig, VqaSample, QUESTION};
use crate::error::{config_err, Error, Result};
use crate::gac::{Gac, GacConfig, VisualFeatures};
use crate::loss::{lopsided_loss_on_tape, standard_lm_loss_on_tape, LossBreakdown, DEFAULT_ALPHA};
use crate::params::{AdamW, ParamStore};
use crate::protocol::{LivenessModel, LivenessTrainer, Prediction};
use crate::rng::{stream_rng, Stream};
use crate::scf::{
    assemble_dcap, filter_with_stats, CaptionRecord, CaptionSource, CaptionedDataset, CaptionerStub,
    KeywordDictionary, Label, MatchOptions,
};
use crate::synth::SynthSample;
use crate::tensor::{Tape, Tensor};
use crate::vocab::Vocabulary;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub gac: GacConfig,
    /// `vocab_size` is filled in from the training vocabulary.
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.gac.validate()?;
        if self.gac.d_model != self.decoder.d_model {
            return Err(config_err(format!(
                "model.decoder.d_model ({}) must equal model.gac.d_model ({})",
                self.decoder.d_model, self.gac.d_model
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Lopsided,
    Standard,
}

/// Training hyperparameters. The learning rate is far above the 1e-5 used
/// when fine-tuning a pretrained model because everything here starts from
/// random weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<usize>,
    pub loss: LossKind,
    pub ablate_gac: bool,
    pub answer_format: AnswerFormat,
    /// Recaption fakes with the spoof-aware captioner and filter them; when
    /// off, every sample keeps its general caption.
    pub scf: bool,
    pub word_boundary: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            lr: 1e-3,
            weight_decay: 1e-2,
            batch_size: 32,
            epochs: 10,
            max_steps: None,
            loss: LossKind::Lopsided,
            ablate_gac: false,
            answer_format: AnswerFormat::Interpreted,
            scf: true,
            word_boundary: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(config_err(format!("train.alpha ({}) must lie in [0, 1]", self.alpha)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err("train.lr must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(config_err("train.weight_decay must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(config_err("train.batch_size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    ablate_gac: bool,
    vocab: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SpoofVqaModel {
    pub gac: Gac,
    pub lm: AnswerLm,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub ablate_gac: bool,
    question: Vec<usize>,
}

impl SpoofVqaModel {
    /// Fresh model with parameters drawn from the init stream of `seed`.
    pub fn init(config: &ModelConfig, vocab: Vocabulary, ablate_gac: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let gac = Gac::new(config.gac.clone())?;
        let lm = AnswerLm::new(DecoderConfig {
            vocab_size: vocab.len(),
            ..config.decoder.clone()
        })?;
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let mut store = ParamStore::new();
        gac.init_params(&mut store, &mut rng);
        if ablate_gac {
            gac.init_ablation_queries(&mut store, &mut rng);
        }
        lm.init_params(&mut store, &mut rng);
        Self::assemble(gac, lm, vocab, store, ablate_gac)
    }

    fn assemble(gac: Gac, lm: AnswerLm, vocab: Vocabulary, store: ParamStore, ablate_gac: bool) -> Result<Self> {
        let mut question = vec![vocab.bos()];
        question.extend(vocab.encode(QUESTION)?);
        Ok(Self {
            gac,
            lm,
            vocab,
            store,
            ablate_gac,
            question,
        })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            gac: self.gac.config.clone(),
            decoder: self.lm.config.clone(),
        }
    }

    /// Question tokens every sample is asked.
    pub fn question(&self) -> &[usize] {
        &self.question
    }

    /// Connector output for one image.
    pub fn prefix(&self, vis: &VisualFeatures) -> Result<Tensor> {
        self.gac.forward_value(&self.store, vis, self.ablate_gac)
    }

    /// `(p(Yes), p(No))` for the first answer token.
    pub fn judgment_probs(&self, vis: &VisualFeatures) -> Result<(f64, f64)> {
        let prefix = self.prefix(vis)?;
        let dist = self.lm.next_token_distribution(&self.store, &prefix, &self.question)?;
        Ok((dist[self.vocab.yes()], dist[self.vocab.no()]))
    }

    pub fn score(&self, vis: &VisualFeatures) -> Result<f64> {
        self.judgment_probs(vis).map(|(y, _)| y)
    }

    /// Greedy answer text for one image.
    pub fn answer(&self, vis: &VisualFeatures, max_len: usize) -> Result<String> {
        let prefix = self.prefix(vis)?;
        let ids = self.lm.generate(&self.store, &self.vocab, &prefix, &self.question, max_len)?;
        self.vocab.decode(&ids)
    }

    /// Mean loss over `samples` with the current weights.
    pub fn evaluate_loss(&self, samples: &[VqaSample], train: &TrainConfig) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            total += self.sample_loss(s, train, false)?.0;
        }
        Ok(total / samples.len().max(1) as f64)
    }

    /// Loss of one sample and, if requested, its parameter gradients.
    pub fn sample_loss(
        &self,
        sample: &VqaSample,
        train: &TrainConfig,
        with_grads: bool,
    ) -> Result<(f64, Option<HashMap<String, Vec<f64>>>)> {
        let mut tape = Tape::new();
        let b = self.store.bind(&mut tape);
        let prefix = if self.ablate_gac {
            self.gac.ablated_forward(&mut tape, &b, &sample.vis)?
        } else {
            self.gac.forward(&mut tape, &b, &sample.vis)?
        };
        let logits = self
            .lm
            .answer_logits(&mut tape, &b, prefix, &sample.question_tokens, &sample.answer_tokens)?;
        let total = match train.loss {
            LossKind::Lopsided => {
                lopsided_loss_on_tape(
                    &mut tape,
                    logits,
                    &sample.answer_tokens,
                    sample.judgment_span.clone(),
                    sample.interpretation_span.clone(),
                    train.alpha,
                )?
                .0
                .total
            }
            LossKind::Standard => standard_lm_loss_on_tape(&mut tape, logits, &sample.answer_tokens)?,
        };
        let value = tape.value(total).item();
        if !with_grads {
            return Ok((value, None));
        }
        tape.backward(total)?;
        Ok((value, Some(b.grads(&tape))))
    }

    /// Lopsided loss components for one sample.
    pub fn loss_breakdown(&self, sample: &VqaSample, alpha: f64) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let b = self.store.bind(&mut tape);
        let prefix = if self.ablate_gac {
            self.gac.ablated_forward(&mut tape, &b, &sample.vis)?
        } else {
            self.gac.forward(&mut tape, &b, &sample.vis)?
        };
        let logits = self
            .lm
            .answer_logits(&mut tape, &b, prefix, &sample.question_tokens, &sample.answer_tokens)?;
        lopsided_loss_on_tape(
            &mut tape,
            logits,
            &sample.answer_tokens,
            sample.judgment_span.clone(),
            sample.interpretation_span.clone(),
            alpha,
        )
        .map(|(_, b)| b)
    }

    /// Trains in place; returns the mean loss of each step. Each batch's
    /// samples are differentiated on separate tapes and their gradients
    /// averaged in sample order, which equals one tape over the batch mean.
    pub fn fit(&mut self, samples: &[VqaSample], train: &TrainConfig, seed: u64) -> Result<Vec<f64>> {
        train.validate()?;
        if samples.is_empty() {
            return Err(Error::Data("no training samples".into()));
        }
        for s in samples {
            s.validate(&self.vocab)?;
        }
        let mut opt = AdamW::new(train.lr, train.weight_decay);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut history = Vec::new();
        let max_steps = train.max_steps.unwrap_or(usize::MAX);
        'epochs: for epoch in 0..train.epochs {
            order.shuffle(&mut stream_rng(seed, Stream::Shuffle, epoch as u64));
            for batch in order.chunks(train.batch_size) {
                if history.len() >= max_steps {
                    break 'epochs;
                }
                let results = batch
                    .par_iter()
                    .map(|&i| self.sample_loss(&samples[i], train, true))
                    .collect::<Result<Vec<_>>>()?;
                let n = results.len() as f64;
                let mut loss = 0.0;
                let mut grads: HashMap<String, Vec<f64>> = HashMap::new();
                for (l, g) in results {
                    loss += l / n;
                    for (k, v) in g.expect("gradients requested") {
                        let acc = grads.entry(k).or_insert_with(|| vec![0.0; v.len()]);
                        for (a, x) in acc.iter_mut().zip(v) {
                            *a += x / n;
                        }
                    }
                }
                opt.step(&mut self.store, &grads)?;
                if !self.store.is_finite() {
                    return Err(Error::NonFinite("parameters after optimizer step"));
                }
                history.push(loss);
            }
        }
        Ok(history)
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let meta = CheckpointMeta {
            model: self.config(),
            ablate_gac: self.ablate_gac,
            vocab: (0..self.vocab.len())
                .map(|i| self.vocab.token(i).map(str::to_string))
                .collect::<Result<_>>()?,
        };
        self.store.save(w, serde_json::to_value(meta)?)
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let (store, meta) = ParamStore::load(r)?;
        let meta: CheckpointMeta = serde_json::from_value(meta)?;
        let vocab = Vocabulary::from_tokens(meta.vocab)?;
        let gac = Gac::new(meta.model.gac)?;
        let lm = AnswerLm::new(meta.model.decoder)?;
        Self::assemble(gac, lm, vocab, store, meta.ablate_gac)
    }
}

impl LivenessModel for SpoofVqaModel {
    fn predict(&self, vis: &VisualFeatures) -> Result<Prediction> {
        let (p_yes, p_no) = self.judgment_probs(vis)?;
        Ok(Prediction {
            score: p_yes,
            judgment: judge(p_yes, p_no),
        })
    }
}

/// Builds the captioned training set from generated samples: reals keep
/// their general captions, fakes are recaptioned spoof-aware and filtered.
pub fn build_dcap(
    samples: &[SynthSample],
    captioner: &CaptionerStub,
    dict: &KeywordDictionary,
    opts: MatchOptions,
    seed: u64,
) -> Result<CaptionedDataset> {
    let reals: Vec<CaptionRecord> = samples
        .iter()
        .filter(|s| s.label == Label::Real)
        .map(|s| s.record.clone())
        .collect();
    let fakes: Vec<CaptionRecord> = samples
        .iter()
        .filter(|s| s.label == Label::Fake)
        .map(|s| captioner.recaption(&s.record, CaptionSource::SpoofAware, seed, dict))
        .collect();
    let (kept, stats) = filter_with_stats(&fakes, dict, opts)?;
    assemble_dcap(reals, kept, stats)
}

/// Vocabulary covering the question, both judgments and every caption.
pub fn build_vocab<'a>(captions: impl IntoIterator<Item = &'a str>) -> Vocabulary {
    let answers: Vec<String> = captions.into_iter().map(|c| format!("This is {c}")).collect();
    Vocabulary::from_texts(std::iter::once(QUESTION).chain(answers.iter().map(String::as_str)))
}

/// Full training recipe: captioning and filtering, VQA formatting, fitting.
#[derive(Clone, Debug, Default)]
pub struct VqaTrainer {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub captioner: CaptionerStub,
    pub dict: KeywordDictionary,
}

impl VqaTrainer {
    /// Training samples and vocabulary for `data`.
    pub fn prepare(&self, data: &[SynthSample], seed: u64) -> Result<(Vocabulary, Vec<VqaSample>)> {
        let records: Vec<CaptionRecord> = if self.train.scf {
            let opts = MatchOptions {
                word_boundary: self.train.word_boundary,
            };
            build_dcap(data, &self.captioner, &self.dict, opts, seed)?.records
        } else {
            data.iter().map(|s| s.record.clone()).collect()
        };
        let vocab = build_vocab(records.iter().map(|r| r.caption.as_str()));
        let by_id: HashMap<&str, &SynthSample> = data.iter().map(|s| (s.record.image_id.as_str(), s)).collect();
        let samples = records
            .iter()
            .map(|r| {
                let s = by_id[r.image_id.as_str()];
                let tag = r.image_id.rsplit_once('-').map_or("", |(t, _)| t);
                VqaSample::build(&vocab, s.vis.clone(), r.label, &r.caption, tag, self.train.answer_format)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((vocab, samples))
    }

    /// Trains and also returns the per-step loss history.
    pub fn train_with_history(&self, data: &[SynthSample], seed: u64) -> Result<(SpoofVqaModel, Vec<f64>)> {
        self.train.validate()?;
        let (vocab, samples) = self.prepare(data, seed)?;
        let mut model = SpoofVqaModel::init(&self.model, vocab, self.train.ablate_gac, seed)?;
        let history = model.fit(&samples, &self.train, seed)?;
        Ok((model, history))
    }
}

impl LivenessTrainer for VqaTrainer {
    type Model = SpoofVqaModel;

    fn train(&self, data: &[SynthSample], seed: u64) -> Result<SpoofVqaModel> {
        self.train_with_history(data, seed).map(|(m, _)| m)
    }
}
