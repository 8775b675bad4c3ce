//! Step-by-step decoding oracle.

use spoofvqa::answer_lm::AnswerLm;
use spoofvqa::params::ParamStore;
use spoofvqa::tensor::{self, Tape, Tensor};

/// Log-probabilities of `answer` computed one step at a time: every step
/// re-runs the decoder on the tokens seen so far and reads only the last row.
pub fn incremental_logprobs(
    lm: &AnswerLm,
    store: &ParamStore,
    prefix: &Tensor,
    question: &[usize],
    answer: &[usize],
) -> Vec<f64> {
    let mut text = question.to_vec();
    let mut out = Vec::with_capacity(answer.len());
    for &tok in answer {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let p = tape.constant(prefix.clone());
        let h = lm.hidden(&mut tape, &b, p, &text).unwrap();
        let last = tape.shape(h)[0] - 1;
        let logits = lm.logits_for_rows(&mut tape, &b, h, last..last + 1).unwrap();
        out.push(tensor::log_softmax(tape.value(logits).data())[tok]);
        text.push(tok);
    }
    out
}
