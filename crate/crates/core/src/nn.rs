//! Layers shared by the connector and the answer decoder, expressed as
//! tape ops over parameters bound from a [`ParamStore`].

use crate::error::Result;
use crate::params::{Bound, ParamStore};
use crate::tensor::{Tape, Tensor, Var, LN_EPS};
use rand::Rng;

/// Additive score for masked attention positions. `exp` of it underflows to
/// exactly zero, keeping every value finite.
pub const MASKED: f64 = -1e9;

pub fn linear(tape: &mut Tape, b: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = b.var(&format!("{name}.weight"))?;
    let bias = b.var(&format!("{name}.bias"))?;
    let h = tape.matmul(x, w)?;
    tape.add(h, bias)
}

pub fn layernorm(tape: &mut Tape, b: &Bound, name: &str, x: Var) -> Result<Var> {
    let g = b.var(&format!("{name}.gain"))?;
    let bias = b.var(&format!("{name}.bias"))?;
    tape.layernorm(x, g, bias, LN_EPS)
}

/// Two-layer GELU feed-forward block.
pub fn mlp(tape: &mut Tape, b: &Bound, name: &str, x: Var) -> Result<Var> {
    let h = linear(tape, b, &format!("{name}.fc1"), x)?;
    let h = tape.gelu(h)?;
    linear(tape, b, &format!("{name}.fc2"), h)
}

pub fn init_attention<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_model: usize, rng: &mut R) {
    for proj in ["wq", "wk", "wv", "wo"] {
        store.init_linear(&format!("{name}.{proj}"), d_model, d_model, rng);
    }
}

pub fn init_mlp<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_model: usize, hidden: usize, rng: &mut R) {
    store.init_linear(&format!("{name}.fc1"), d_model, hidden, rng);
    store.init_linear(&format!("{name}.fc2"), hidden, d_model, rng);
}

/// Multi-head scaled dot-product attention of `queries` over `context`.
///
/// With `causal`, query row `i` sees context rows `0..=i` only; queries and
/// context must then be the same sequence.
pub fn attention(
    tape: &mut Tape,
    b: &Bound,
    name: &str,
    queries: Var,
    context: Var,
    n_heads: usize,
    causal: bool,
) -> Result<Var> {
    let q = linear(tape, b, &format!("{name}.wq"), queries)?;
    let k = linear(tape, b, &format!("{name}.wk"), context)?;
    let v = linear(tape, b, &format!("{name}.wv"), context)?;
    let d = tape.shape(q)[1];
    let tq = tape.shape(q)[0];
    let tk = tape.shape(k)[0];
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mask = if causal {
        let mut m = Tensor::zeros(&[tq, tk]);
        for i in 0..tq {
            for j in (i + 1)..tk {
                m.data_mut()[i * tk + j] = MASKED;
            }
        }
        Some(tape.constant(m))
    } else {
        None
    };
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            (tape.slice(q, 1, lo, hi)?, tape.slice(k, 1, lo, hi)?, tape.slice(v, 1, lo, hi)?)
        };
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let mut scores = tape.scale(scores, scale)?;
        if let Some(m) = mask {
            scores = tape.add(scores, m)?;
        }
        let weights = tape.softmax(scores)?;
        heads.push(tape.matmul(weights, vh)?);
    }
    let merged = if n_heads == 1 { heads[0] } else { tape.concat(&heads, 1)? };
    linear(tape, b, &format!("{name}.wo"), merged)
}
