//! Globally aware connector.
//!
//! Turns frozen-encoder output into language-model prefix tokens:
//!
//! ```text
//! Q_V = project(g_1..g_L)
//! Q   = concat(Q_P, Q_V)
//! Q'  = Q  + MSA(LN(Q))
//! Q'' = Q' + MCA(LN(Q'), LN(X_V))
//! X_T = Q'' + MLP(LN(Q''))
//! ```
//!
//! All `M + L` rows of `X_T` are handed to the decoder. There are no
//! positional terms, so the cross-attention is invariant to the order of
//! the local patch features. Attention is unmasked in both directions.

use crate::error::{config_err, Error, Result};
use crate::nn;
use crate::params::{Bound, ParamStore};
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

const PREFIX: &str = "gac";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GacConfig {
    /// Output width, shared with the decoder.
    pub d_model: usize,
    pub n_heads: usize,
    /// Number of learnable queries.
    pub n_learnable: usize,
    /// Number of encoder layers that contribute a global token.
    pub n_layers_vision: usize,
    pub mlp_hidden: usize,
    /// Width of the encoder features.
    pub d_enc: usize,
}

impl Default for GacConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_learnable: 8,
            n_layers_vision: 6,
            mlp_hidden: 256,
            d_enc: 32,
        }
    }
}

impl GacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(config_err(format!(
                "gac.d_model ({}) must be a positive multiple of gac.n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.n_learnable == 0 {
            return Err(config_err("gac.n_learnable must be >= 1"));
        }
        if self.n_layers_vision == 0 {
            return Err(config_err("gac.n_layers_vision must be >= 1"));
        }
        if self.mlp_hidden == 0 || self.d_enc == 0 {
            return Err(config_err("gac.mlp_hidden and gac.d_enc must be >= 1"));
        }
        Ok(())
    }

    pub fn n_tokens(&self) -> usize {
        self.n_learnable + self.n_layers_vision
    }
}

/// Encoder output for one image: patch features and per-layer cls tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualFeatures {
    /// `[N×D_enc]`
    pub local: Tensor,
    /// `[L×D_enc]`, row `i` is the cls token of layer `i + 1`.
    pub globals: Tensor,
}

impl VisualFeatures {
    /// Concatenated mean-pooled local features and all global tokens.
    pub fn pooled(&self) -> Vec<f64> {
        let d = self.local.cols();
        let n = self.local.rows() as f64;
        let mut out = vec![0.0; d];
        for r in 0..self.local.rows() {
            for (o, v) in out.iter_mut().zip(self.local.row(r)) {
                *o += v / n;
            }
        }
        out.extend_from_slice(self.globals.data());
        out
    }
}

#[derive(Clone, Debug)]
pub struct Gac {
    pub config: GacConfig,
}

impl Gac {
    pub fn new(config: GacConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Adds the connector's parameters (`gac.*`) to `store`.
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let c = &self.config;
        let d = c.d_model;
        store.init_normal(&format!("{PREFIX}.queries"), &[c.n_learnable, d], rng);
        store.init_linear(&format!("{PREFIX}.global_proj"), c.d_enc, d, rng);
        store.init_linear(&format!("{PREFIX}.local_proj"), c.d_enc, d, rng);
        for ln in ["ln_q", "ln_q1", "ln_kv", "ln_q2"] {
            store.init_layernorm(&format!("{PREFIX}.{ln}"), d);
        }
        nn::init_attention(store, &format!("{PREFIX}.msa"), d, rng);
        nn::init_attention(store, &format!("{PREFIX}.mca"), d, rng);
        nn::init_mlp(store, &format!("{PREFIX}.mlp"), d, c.mlp_hidden, rng);
    }

    /// Adds the `L` learnable rows that stand in for the projected global
    /// tokens in the ablated connector.
    pub fn init_ablation_queries<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        store.init_normal(
            &format!("{PREFIX}.ablation_queries"),
            &[self.config.n_layers_vision, self.config.d_model],
            rng,
        );
    }

    pub fn check_features(&self, vis: &VisualFeatures) -> Result<()> {
        let c = &self.config;
        let ok_local = vis.local.shape().len() == 2 && vis.local.cols() == c.d_enc;
        let ok_global = vis.globals.shape() == [c.n_layers_vision, c.d_enc];
        if !ok_local || !ok_global {
            return Err(Error::Config(format!(
                "visual features local {:?} / globals {:?} do not fit d_enc={} n_layers_vision={}",
                vis.local.shape(),
                vis.globals.shape(),
                c.d_enc,
                c.n_layers_vision
            )));
        }
        Ok(())
    }

    /// Projected global tokens `Q_V`, `[L×D]`.
    pub fn project_globals(&self, tape: &mut Tape, b: &Bound, vis: &VisualFeatures) -> Result<Var> {
        self.check_features(vis)?;
        let g = tape.constant(vis.globals.clone());
        nn::linear(tape, b, &format!("{PREFIX}.global_proj"), g)
    }

    /// Full connector, `[(M+L)×D]`.
    pub fn forward(&self, tape: &mut Tape, b: &Bound, vis: &VisualFeatures) -> Result<Var> {
        let q_v = self.project_globals(tape, b, vis)?;
        self.stack(tape, b, q_v, vis)
    }

    /// Connector with the projected global tokens replaced by learnable rows.
    /// Token count is unchanged.
    pub fn ablated_forward(&self, tape: &mut Tape, b: &Bound, vis: &VisualFeatures) -> Result<Var> {
        self.check_features(vis)?;
        let q_v = b.var(&format!("{PREFIX}.ablation_queries"))?;
        self.stack(tape, b, q_v, vis)
    }

    fn stack(&self, tape: &mut Tape, b: &Bound, q_v: Var, vis: &VisualFeatures) -> Result<Var> {
        let heads = self.config.n_heads;
        let q_p = b.var(&format!("{PREFIX}.queries"))?;
        let q = tape.concat(&[q_p, q_v], 0)?;

        let ln = nn::layernorm(tape, b, &format!("{PREFIX}.ln_q"), q)?;
        let msa = nn::attention(tape, b, &format!("{PREFIX}.msa"), ln, ln, heads, false)?;
        let q1 = tape.add(q, msa)?;

        let x = tape.constant(vis.local.clone());
        let x = nn::linear(tape, b, &format!("{PREFIX}.local_proj"), x)?;
        let kv = nn::layernorm(tape, b, &format!("{PREFIX}.ln_kv"), x)?;
        let ln1 = nn::layernorm(tape, b, &format!("{PREFIX}.ln_q1"), q1)?;
        let mca = nn::attention(tape, b, &format!("{PREFIX}.mca"), ln1, kv, heads, false)?;
        let q2 = tape.add(q1, mca)?;

        let ln2 = nn::layernorm(tape, b, &format!("{PREFIX}.ln_q2"), q2)?;
        let m = nn::mlp(tape, b, &format!("{PREFIX}.mlp"), ln2)?;
        tape.add(q2, m)
    }

    /// Convenience: run the connector on a fresh tape and return `X_T`.
    pub fn forward_value(&self, store: &ParamStore, vis: &VisualFeatures, ablated: bool) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let out = if ablated {
            self.ablated_forward(&mut tape, &b, vis)?
        } else {
            self.forward(&mut tape, &b, vis)?
        };
        Ok(tape.value(out).clone())
    }
}
