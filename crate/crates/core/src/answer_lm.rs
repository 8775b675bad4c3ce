//! Small causal decoder that reads connector tokens as a prefix and answers
//! the liveness question.
//!
//! Sequence layout: `[prefix tokens | question tokens | answer tokens]`.
//! Prefix rows get one learned segment vector; text rows get learned
//! absolute positions counted from the first question token. Attention is
//! causal over the whole sequence.

use crate::error::{config_err, Error, Result};
use crate::gac::VisualFeatures;
use crate::nn;
use crate::params::{Bound, ParamStore};
use crate::scf::Label;
use crate::tensor::{self, Tape, Tensor, Var};
use crate::vocab::Vocabulary;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

const PREFIX: &str = "lm";

/// The fixed instruction every sample is asked.
pub const QUESTION: &str = "Is this photo of a real person?";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    /// Maximum number of text tokens (question + answer).
    pub context: usize,
    pub mlp_hidden: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            d_model: 64,
            n_heads: 4,
            n_blocks: 2,
            context: 64,
            mlp_hidden: 256,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 5 {
            return Err(config_err("decoder.vocab_size must cover the reserved tokens"));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(config_err(format!(
                "decoder.d_model ({}) must be a positive multiple of decoder.n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.context == 0 || self.mlp_hidden == 0 {
            return Err(config_err("decoder.context and decoder.mlp_hidden must be >= 1"));
        }
        Ok(())
    }
}

/// One training/eval instance in question-answer form.
#[derive(Clone, Debug)]
pub struct VqaSample {
    pub vis: VisualFeatures,
    pub question_tokens: Vec<usize>,
    pub answer_tokens: Vec<usize>,
    pub judgment_span: Range<usize>,
    pub interpretation_span: Range<usize>,
    pub label: Label,
    pub domain_tag: String,
}

/// What the interpretation part of the answer contains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    /// `Yes`/`No` followed by `This is <caption>`.
    #[default]
    Interpreted,
    /// `Yes`/`No` only; the interpretation span holds just the end token.
    JudgmentOnly,
}

impl VqaSample {
    /// Builds `[judgment, "this is <caption>", <eos>]` for the fixed question.
    pub fn build(
        vocab: &Vocabulary,
        vis: VisualFeatures,
        label: Label,
        caption: &str,
        domain_tag: &str,
        format: AnswerFormat,
    ) -> Result<Self> {
        let mut question_tokens = vec![vocab.bos()];
        question_tokens.extend(vocab.encode(QUESTION)?);
        let judgment = match label {
            Label::Real => vocab.yes(),
            Label::Fake => vocab.no(),
        };
        let mut answer_tokens = vec![judgment];
        if format == AnswerFormat::Interpreted {
            answer_tokens.extend(vocab.encode(&format!("This is {caption}"))?);
        }
        answer_tokens.push(vocab.eos());
        let n = answer_tokens.len();
        let sample = Self {
            vis,
            question_tokens,
            answer_tokens,
            judgment_span: 0..1,
            interpretation_span: 1..n,
            label,
            domain_tag: domain_tag.to_string(),
        };
        sample.validate(vocab)?;
        Ok(sample)
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        validate_spans(&self.judgment_span, &self.interpretation_span, self.answer_tokens.len())?;
        let first = self.answer_tokens[self.judgment_span.start];
        if first != vocab.yes() && first != vocab.no() {
            return Err(Error::Contract("judgment span must start with Yes or No".into()));
        }
        Ok(())
    }
}

/// Spans must be disjoint, ordered, and exactly cover the answer; the
/// judgment span is non-empty.
pub fn validate_spans(judgment: &Range<usize>, interpretation: &Range<usize>, answer_len: usize) -> Result<()> {
    let ok = judgment.start == 0
        && judgment.end > judgment.start
        && interpretation.start == judgment.end
        && interpretation.end >= interpretation.start
        && interpretation.end == answer_len;
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "spans {judgment:?} and {interpretation:?} do not tile an answer of length {answer_len}"
        )))
    }
}

#[derive(Clone, Debug)]
pub struct AnswerLm {
    pub config: DecoderConfig,
}

impl AnswerLm {
    pub fn new(config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Adds `lm.*` parameters. The output head starts at zero, so a fresh
    /// decoder assigns the uniform distribution to every position.
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let c = &self.config;
        let d = c.d_model;
        store.init_normal(&format!("{PREFIX}.tok_emb"), &[c.vocab_size, d], rng);
        store.init_normal(&format!("{PREFIX}.pos_emb"), &[c.context, d], rng);
        store.init_normal(&format!("{PREFIX}.prefix_seg"), &[d], rng);
        for i in 0..c.n_blocks {
            let blk = format!("{PREFIX}.block{i}");
            store.init_layernorm(&format!("{blk}.ln1"), d);
            nn::init_attention(store, &format!("{blk}.attn"), d, rng);
            store.init_layernorm(&format!("{blk}.ln2"), d);
            nn::init_mlp(store, &format!("{blk}.mlp"), d, c.mlp_hidden, rng);
        }
        store.init_layernorm(&format!("{PREFIX}.ln_f"), d);
        store.insert(format!("{PREFIX}.head.weight"), Tensor::zeros(&[d, c.vocab_size]));
        store.insert(format!("{PREFIX}.head.bias"), Tensor::zeros(&[c.vocab_size]));
    }

    fn check_text(&self, text: &[usize]) -> Result<()> {
        if let Some(bad) = text.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Vocabulary(format!("unknown token id {bad}")));
        }
        if text.len() > self.config.context {
            return Err(Error::Contract(format!(
                "{} text tokens exceed decoder context {}",
                text.len(),
                self.config.context
            )));
        }
        Ok(())
    }

    /// Final hidden states for `[prefix | text]`, `[(P+T)×D]`.
    pub fn hidden(&self, tape: &mut Tape, b: &Bound, prefix: Var, text: &[usize]) -> Result<Var> {
        self.check_text(text)?;
        if tape.shape(prefix).len() != 2 || tape.shape(prefix)[1] != self.config.d_model {
            return Err(Error::Shape {
                op: "decoder prefix",
                lhs: tape.shape(prefix).to_vec(),
                rhs: vec![self.config.d_model],
            });
        }
        let seg = b.var(&format!("{PREFIX}.prefix_seg"))?;
        let mut x = tape.add(prefix, seg)?;
        if !text.is_empty() {
            let tok = b.var(&format!("{PREFIX}.tok_emb"))?;
            let pos = b.var(&format!("{PREFIX}.pos_emb"))?;
            let te = tape.embedding(tok, text)?;
            let positions: Vec<usize> = (0..text.len()).collect();
            let pe = tape.embedding(pos, &positions)?;
            let xt = tape.add(te, pe)?;
            x = tape.concat(&[x, xt], 0)?;
        }
        for i in 0..self.config.n_blocks {
            let blk = format!("{PREFIX}.block{i}");
            let h = nn::layernorm(tape, b, &format!("{blk}.ln1"), x)?;
            let h = nn::attention(tape, b, &format!("{blk}.attn"), h, h, self.config.n_heads, true)?;
            x = tape.add(x, h)?;
            let h = nn::layernorm(tape, b, &format!("{blk}.ln2"), x)?;
            let h = nn::mlp(tape, b, &format!("{blk}.mlp"), h)?;
            x = tape.add(x, h)?;
        }
        nn::layernorm(tape, b, &format!("{PREFIX}.ln_f"), x)
    }

    /// Vocabulary logits for sequence rows `rows`.
    pub fn logits_for_rows(&self, tape: &mut Tape, b: &Bound, hidden: Var, rows: Range<usize>) -> Result<Var> {
        let h = tape.slice(hidden, 0, rows.start, rows.end)?;
        nn::linear(tape, b, &format!("{PREFIX}.head"), h)
    }

    /// Teacher-forced logits predicting each answer token, `[|answer|×V]`.
    pub fn answer_logits(
        &self,
        tape: &mut Tape,
        b: &Bound,
        prefix: Var,
        question: &[usize],
        answer: &[usize],
    ) -> Result<Var> {
        if answer.is_empty() {
            return Err(Error::Contract("answer must be non-empty".into()));
        }
        let p = tape.shape(prefix)[0];
        let q = question.len();
        let text: Vec<usize> = question.iter().chain(answer).copied().collect();
        let hidden = self.hidden(tape, b, prefix, &text)?;
        // row s predicts sequence position s + 1
        let first = p + q - 1;
        self.logits_for_rows(tape, b, hidden, first..first + answer.len())
    }

    fn strip_pad<'a>(&self, vocab: &Vocabulary, question: &'a [usize]) -> &'a [usize] {
        let pad = vocab.pad();
        let end = question.iter().rposition(|&t| t != pad).map_or(0, |i| i + 1);
        &question[..end]
    }

    /// `log p(answer_i | prefix, question, answer_<i)` for every `i`.
    ///
    /// Trailing padding on the question is ignored.
    pub fn sequence_logprob(
        &self,
        store: &ParamStore,
        vocab: &Vocabulary,
        prefix: &Tensor,
        question: &[usize],
        answer: &[usize],
    ) -> Result<Vec<f64>> {
        vocab.check_ids(question)?;
        vocab.check_ids(answer)?;
        let question = self.strip_pad(vocab, question);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let pv = tape.constant(prefix.clone());
        let logits = self.answer_logits(&mut tape, &b, pv, question, answer)?;
        let lv = tape.value(logits);
        Ok(answer
            .iter()
            .enumerate()
            .map(|(i, &tok)| tensor::log_softmax(lv.row(i))[tok])
            .collect())
    }

    /// Distribution over the token following `[prefix | text]`.
    pub fn next_token_distribution(
        &self,
        store: &ParamStore,
        prefix: &Tensor,
        text: &[usize],
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let pv = tape.constant(prefix.clone());
        let hidden = self.hidden(&mut tape, &b, pv, text)?;
        let last = tape.shape(hidden)[0] - 1;
        let logits = self.logits_for_rows(&mut tape, &b, hidden, last..last + 1)?;
        Ok(tensor::softmax(tape.value(logits).data()))
    }

    /// Liveness score: probability that the first answer token is `Yes`.
    pub fn predict_score(
        &self,
        store: &ParamStore,
        vocab: &Vocabulary,
        prefix: &Tensor,
        question: &[usize],
    ) -> Result<f64> {
        vocab.check_ids(question)?;
        let question = self.strip_pad(vocab, question);
        let dist = self.next_token_distribution(store, prefix, question)?;
        Ok(dist[vocab.yes()])
    }

    /// Greedy decoding until `<eos>` or `max_len` tokens.
    ///
    /// Argmax ties go to the lowest id, except a `Yes`/`No` tie, which goes
    /// to `No`.
    pub fn generate(
        &self,
        store: &ParamStore,
        vocab: &Vocabulary,
        prefix: &Tensor,
        question: &[usize],
        max_len: usize,
    ) -> Result<Vec<usize>> {
        if max_len == 0 {
            return Err(Error::Contract("max_len must be >= 1".into()));
        }
        vocab.check_ids(question)?;
        let mut text = self.strip_pad(vocab, question).to_vec();
        let mut out = Vec::new();
        while out.len() < max_len && text.len() < self.config.context {
            let dist = self.next_token_distribution(store, prefix, &text)?;
            let tok = argmax_no_on_tie(&dist, vocab);
            out.push(tok);
            text.push(tok);
            if tok == vocab.eos() {
                break;
            }
        }
        Ok(out)
    }
}

fn argmax_no_on_tie(dist: &[f64], vocab: &Vocabulary) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    if best == vocab.yes() && dist[vocab.no()] == dist[best] {
        vocab.no()
    } else {
        best
    }
}

/// Hard judgment from a pair of probabilities; ties reject.
pub fn judge(p_yes: f64, p_no: f64) -> Label {
    if p_yes > p_no {
        Label::Real
    } else {
        Label::Fake
    }
}
