//! Lopsided language-model loss.
//!
//! The answer is split into a judgment span and an interpretation span. Each
//! span contributes its own token-mean cross-entropy and the two are mixed:
//!
//! `total = alpha * judgment + (1 - alpha) * interpretation`
//!
//! Span means keep `alpha` independent of caption length. Logit rows outside
//! both spans (padding) are ignored.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const DEFAULT_ALPHA: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub judgment_loss: f64,
    pub interpretation_loss: f64,
    pub total: f64,
    pub alpha: f64,
}

/// Tape handles of a lopsided loss.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub judgment: Var,
    pub interpretation: Option<Var>,
    pub total: Var,
}

fn check_spans(judgment: &Range<usize>, interpretation: &Range<usize>, rows: usize) -> Result<()> {
    let ok = judgment.start < judgment.end
        && interpretation.start >= judgment.end
        && interpretation.end >= interpretation.start
        && interpretation.end <= rows;
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "invalid spans {judgment:?} / {interpretation:?} for {rows} logit rows"
        )))
    }
}

fn span_weights(rows: usize, span: &Range<usize>) -> Vec<f64> {
    let w = 1.0 / span.len() as f64;
    (0..rows).map(|r| if span.contains(&r) { w } else { 0.0 }).collect()
}

/// Records the lopsided loss on `tape` over `logits` (`[T×V]`).
pub fn lopsided_loss_on_tape(
    tape: &mut Tape,
    logits: Var,
    targets: &[usize],
    judgment_span: Range<usize>,
    interpretation_span: Range<usize>,
    alpha: f64,
) -> Result<(LossVars, LossBreakdown)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha {alpha} outside [0, 1]")));
    }
    let rows = tape.shape(logits)[0];
    check_spans(&judgment_span, &interpretation_span, rows)?;
    if interpretation_span.is_empty() && alpha < 1.0 {
        return Err(Error::Contract(
            "empty interpretation span requires alpha = 1".into(),
        ));
    }
    let judgment = tape.cross_entropy(logits, targets, &span_weights(rows, &judgment_span))?;
    let weighted_j = tape.scale(judgment, alpha)?;
    let (interpretation, total) = if interpretation_span.is_empty() {
        (None, weighted_j)
    } else {
        let i = tape.cross_entropy(logits, targets, &span_weights(rows, &interpretation_span))?;
        let weighted_i = tape.scale(i, 1.0 - alpha)?;
        (Some(i), tape.add(weighted_j, weighted_i)?)
    };
    let breakdown = LossBreakdown {
        judgment_loss: tape.value(judgment).item(),
        interpretation_loss: interpretation.map_or(0.0, |v| tape.value(v).item()),
        total: tape.value(total).item(),
        alpha,
    };
    Ok((
        LossVars {
            judgment,
            interpretation,
            total,
        },
        breakdown,
    ))
}

/// Lopsided loss of a fixed logits tensor.
pub fn lopsided_loss(
    logits: &Tensor,
    targets: &[usize],
    judgment_span: Range<usize>,
    interpretation_span: Range<usize>,
    alpha: f64,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    lopsided_loss_on_tape(&mut tape, l, targets, judgment_span, interpretation_span, alpha).map(|(_, b)| b)
}

/// Uniform token-mean cross-entropy over every answer row.
pub fn standard_lm_loss_on_tape(tape: &mut Tape, logits: Var, targets: &[usize]) -> Result<Var> {
    let rows = tape.shape(logits)[0];
    if targets.is_empty() {
        return Err(Error::Contract("standard LM loss needs targets".into()));
    }
    tape.cross_entropy(logits, targets, &vec![1.0 / rows as f64; rows])
}

pub fn standard_lm_loss(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let v = standard_lm_loss_on_tape(&mut tape, l, targets)?;
    Ok(tape.value(v).item())
}
