//! Named parameter storage, tape binding, AdamW and checkpoints.

use crate::container::{read_container, write_container};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

/// Standard deviation used for every randomly initialised weight.
pub const INIT_STD: f64 = 0.02;

/// Parameters keyed by dotted name (`gac.msa.wq`, `lm.block0.ln1.gain`, ...).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// `[rows×cols]` weight drawn from `N(0, INIT_STD²)`.
    pub fn init_normal<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], rng: &mut R) {
        self.insert(name, Tensor::randn(shape, INIT_STD, rng));
    }

    pub fn init_linear<R: Rng + ?Sized>(&mut self, name: &str, d_in: usize, d_out: usize, rng: &mut R) {
        self.init_normal(&format!("{name}.weight"), &[d_in, d_out], rng);
        self.insert(format!("{name}.bias"), Tensor::zeros(&[d_out]));
    }

    pub fn init_layernorm(&mut self, name: &str, d: usize) {
        self.insert(format!("{name}.gain"), Tensor::full(&[d], 1.0));
        self.insert(format!("{name}.bias"), Tensor::zeros(&[d]));
    }

    /// Records every parameter as a gradient-carrying leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| (k.clone(), tape.param(t.clone())))
            .collect();
        Bound { vars }
    }

    pub fn save<W: Write>(&self, w: W, config: serde_json::Value) -> Result<()> {
        let header = CheckpointHeader {
            config,
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let payload: Vec<f64> = self.tensors.values().flat_map(|t| t.data().iter().copied()).collect();
        write_container(w, &header, &payload)
    }

    pub fn load<R: Read>(r: R) -> Result<(Self, serde_json::Value)> {
        let (header, payload): (CheckpointHeader, Vec<f64>) = read_container(r)?;
        let mut store = Self::new();
        let mut offset = 0;
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let end = offset + n;
            if end > payload.len() {
                return Err(Error::Data(format!("checkpoint payload too short for `{}`", entry.name)));
            }
            store.insert(entry.name, Tensor::new(entry.shape, payload[offset..end].to_vec())?);
            offset = end;
        }
        if offset != payload.len() {
            return Err(Error::Data("checkpoint payload has trailing values".into()));
        }
        Ok((store, header.config))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// Tape handles for one bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter `{name}` not bound")))
    }

    /// Gradients of every bound parameter; untouched ones come back as zeros.
    pub fn grads(&self, tape: &Tape) -> HashMap<String, Vec<f64>> {
        self.vars
            .iter()
            .map(|(k, &v)| {
                let g = tape
                    .grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; tape.value(v).len()]);
                (k.clone(), g)
            })
            .collect()
    }
}

/// Adam with decoupled weight decay, applied to matrices only.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &HashMap<String, Vec<f64>>) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, t) in store.tensors.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.len() != t.len() {
                return Err(Error::Shape {
                    op: "adamw",
                    lhs: t.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let decay = if t.shape().len() == 2 { self.weight_decay } else { 0.0 };
            for (i, p) in t.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *p -= self.lr * (mhat / (vhat.sqrt() + self.eps) + decay * *p);
            }
        }
        Ok(())
    }
}
