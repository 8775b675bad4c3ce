//! Central finite-difference gradient checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spoofvqa::params::{Bound, ParamStore};
use spoofvqa::tensor::{Tape, Tensor, Var};
use spoofvqa::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, zero when both vanish.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    // central differences carry ~1e-10 roundoff, so a gradient that is
    // exactly zero (e.g. attention key biases) is compared on an absolute floor
    diff / (norm(analytic) + norm(numeric)).max(1e-4)
}

/// Relative error per input tensor of `f` at `inputs`.
pub fn check_inputs<F>(inputs: &[Tensor], f: F) -> Vec<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.backward(out).unwrap();
    let eval = |ins: &[Tensor]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = ins.iter().map(|x| t.constant(x.clone())).collect();
        let o = f(&mut t, &vs).unwrap();
        t.value(o).item()
    };
    let mut ins = inputs.to_vec();
    let mut errs = Vec::new();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = tape.grad(v).map_or_else(|| vec![0.0; inputs[i].len()], <[f64]>::to_vec);
        let mut numeric = Vec::with_capacity(inputs[i].len());
        for j in 0..inputs[i].len() {
            let x0 = inputs[i].data()[j];
            ins[i].data_mut()[j] = x0 + STEP;
            let p = eval(&ins);
            ins[i].data_mut()[j] = x0 - STEP;
            let m = eval(&ins);
            ins[i].data_mut()[j] = x0;
            numeric.push((p - m) / (2.0 * STEP));
        }
        errs.push(rel_err(&analytic, &numeric));
    }
    errs
}

/// Relative error per parameter tensor of `f` over `store`, probing at most
/// `max_coords` evenly spaced coordinates of each tensor.
pub fn check_store<F>(store: &ParamStore, max_coords: usize, f: F) -> Vec<(String, f64)>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let out = f(&mut tape, &b).unwrap();
    tape.backward(out).unwrap();
    let grads = b.grads(&tape);
    let eval = |s: &ParamStore| {
        let mut t = Tape::new();
        let b = s.bind(&mut t);
        let o = f(&mut t, &b).unwrap();
        t.value(o).item()
    };
    let mut work = store.clone();
    let mut out = Vec::new();
    for name in store.names() {
        let n = store.get(name).unwrap().len();
        let stride = n.div_ceil(max_coords).max(1);
        let coords: Vec<usize> = (0..n).step_by(stride).collect();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &j in &coords {
            let x0 = store.get(name).unwrap().data()[j];
            work.get_mut(name).unwrap().data_mut()[j] = x0 + STEP;
            let p = eval(&work);
            work.get_mut(name).unwrap().data_mut()[j] = x0 - STEP;
            let m = eval(&work);
            work.get_mut(name).unwrap().data_mut()[j] = x0;
            numeric.push((p - m) / (2.0 * STEP));
            analytic.push(grads[name][j]);
        }
        out.push((name.clone(), rel_err(&analytic, &numeric)));
    }
    out
}

/// Re-draws every parameter at a scale where gradients are well above
/// finite-difference noise. Layernorm gains stay near one.
pub fn rescale_params(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = store.names().cloned().collect();
    for name in names {
        let t = store.get_mut(&name).unwrap();
        let gain = name.ends_with(".gain");
        for x in t.data_mut() {
            let u: f64 = rng.random_range(-1.0..1.0);
            *x = if gain { 1.0 + 0.3 * u } else { 0.5 * u };
        }
    }
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// One step of a random graph acting on a `[3×4]` running value.
#[derive(Clone, Copy, Debug)]
enum Step {
    MatMul,
    Add,
    AddRow,
    Mul,
    Scale(f64),
    Softmax,
    LayerNorm,
    Gelu,
    TransposeMatMul,
    ConcatSliceCols,
    ConcatSliceRows,
    Embed,
}

/// A seeded random composition of `depth` ops ending in a scalar, with its
/// leaf tensors. Input 0 is the running value.
pub struct RandomGraph {
    steps: Vec<(Step, usize)>,
    pub inputs: Vec<Tensor>,
    ce_targets: Option<Vec<usize>>,
}

impl RandomGraph {
    pub fn new(seed: u64, depth: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = vec![rand_tensor(&mut rng, &[3, 4])];
        let mut steps = Vec::new();
        for _ in 0..depth {
            let step = match rng.random_range(0..12) {
                0 => Step::MatMul,
                1 => Step::Add,
                2 => Step::AddRow,
                3 => Step::Mul,
                4 => Step::Scale(rng.random_range(-2.0..2.0)),
                5 => Step::Softmax,
                6 => Step::LayerNorm,
                7 => Step::Gelu,
                8 => Step::TransposeMatMul,
                9 => Step::ConcatSliceCols,
                10 => Step::ConcatSliceRows,
                _ => Step::Embed,
            };
            let first = inputs.len();
            let shapes: &[&[usize]] = match step {
                Step::MatMul => &[&[4, 4]],
                Step::Add | Step::Mul => &[&[3, 4]],
                Step::AddRow => &[&[4]],
                Step::LayerNorm => &[&[4], &[4]],
                Step::TransposeMatMul => &[&[3, 3]],
                Step::ConcatSliceCols => &[&[3, 2]],
                Step::ConcatSliceRows => &[&[2, 4]],
                Step::Embed => &[&[5, 4]],
                Step::Scale(_) | Step::Softmax | Step::Gelu => &[],
            };
            for s in shapes {
                inputs.push(rand_tensor(&mut rng, s));
            }
            steps.push((step, first));
        }
        let ce_targets = rng.random_bool(0.5).then(|| (0..3).map(|_| rng.random_range(0..4)).collect());
        if ce_targets.is_none() {
            inputs.push(rand_tensor(&mut rng, &[3, 4]));
        }
        Self {
            steps,
            inputs,
            ce_targets,
        }
    }

    pub fn eval(&self, tape: &mut Tape, v: &[Var]) -> Result<Var> {
        let mut x = v[0];
        for &(step, i) in &self.steps {
            x = match step {
                Step::MatMul => tape.matmul(x, v[i])?,
                Step::Add | Step::AddRow => tape.add(x, v[i])?,
                Step::Mul => tape.mul(x, v[i])?,
                Step::Scale(c) => tape.scale(x, c)?,
                Step::Softmax => tape.softmax(x)?,
                Step::LayerNorm => tape.layernorm(x, v[i], v[i + 1], 1e-5)?,
                Step::Gelu => tape.gelu(x)?,
                Step::TransposeMatMul => {
                    let t = tape.transpose(x)?;
                    let m = tape.matmul(t, v[i])?;
                    tape.transpose(m)?
                }
                Step::ConcatSliceCols => {
                    let c = tape.concat(&[x, v[i]], 1)?;
                    tape.slice(c, 1, 1, 5)?
                }
                Step::ConcatSliceRows => {
                    let c = tape.concat(&[v[i], x], 0)?;
                    tape.slice(c, 0, 1, 4)?
                }
                Step::Embed => {
                    let e = tape.embedding(v[i], &[4, 0, 4])?;
                    tape.add(x, e)?
                }
            };
        }
        match &self.ce_targets {
            Some(t) => tape.cross_entropy(x, t, &[0.5, 0.3, 0.2]),
            None => {
                let w = tape.mul(x, *v.last().unwrap())?;
                tape.sum(w)
            }
        }
    }

    pub fn max_rel_err(&self) -> f64 {
        check_inputs(&self.inputs, |t, v| self.eval(t, v)).into_iter().fold(0.0, f64::max)
    }
}

/// Reduces any tensor op output to a scalar with fixed random weights, so
/// ops whose plain sum is constant (softmax, layernorm) still get checked.
pub fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rand_tensor(&mut rng, tape.shape(x));
    let r = tape.constant(r);
    let m = tape.mul(x, r)?;
    tape.sum(m)
}

/// Per-op checks at small shapes: `(op name, relative error)`.
pub fn op_checks() -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a34 = rand_tensor(&mut rng, &[3, 4]);
    let b34 = rand_tensor(&mut rng, &[3, 4]);
    let b45 = rand_tensor(&mut rng, &[4, 5]);
    let b24 = rand_tensor(&mut rng, &[2, 4]);
    let b32 = rand_tensor(&mut rng, &[3, 2]);
    let v4 = rand_tensor(&mut rng, &[4]);
    let g4 = rand_tensor(&mut rng, &[4]);
    let table = rand_tensor(&mut rng, &[6, 4]);
    type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
    let cases: Vec<(&str, Vec<Tensor>, OpFn)> = vec![
        ("matmul", vec![a34.clone(), b45], Box::new(|t, v| t.matmul(v[0], v[1]))),
        ("add", vec![a34.clone(), b34.clone()], Box::new(|t, v| t.add(v[0], v[1]))),
        ("add_row", vec![a34.clone(), v4.clone()], Box::new(|t, v| t.add(v[0], v[1]))),
        ("mul", vec![a34.clone(), b34.clone()], Box::new(|t, v| t.mul(v[0], v[1]))),
        ("scale", vec![a34.clone()], Box::new(|t, v| t.scale(v[0], -1.7))),
        ("concat_rows", vec![a34.clone(), b24], Box::new(|t, v| t.concat(&[v[0], v[1]], 0))),
        ("concat_cols", vec![a34.clone(), b32], Box::new(|t, v| t.concat(&[v[0], v[1]], 1))),
        ("slice_rows", vec![a34.clone()], Box::new(|t, v| t.slice(v[0], 0, 1, 3))),
        ("slice_cols", vec![a34.clone()], Box::new(|t, v| t.slice(v[0], 1, 1, 3))),
        ("transpose", vec![a34.clone()], Box::new(|t, v| t.transpose(v[0]))),
        ("softmax", vec![a34.clone()], Box::new(|t, v| t.softmax(v[0]))),
        (
            "layernorm",
            vec![a34.clone(), g4, v4],
            Box::new(|t, v| t.layernorm(v[0], v[1], v[2], 1e-5)),
        ),
        ("gelu", vec![a34.clone()], Box::new(|t, v| t.gelu(v[0]))),
        ("embedding", vec![table], Box::new(|t, v| t.embedding(v[0], &[2, 5, 2, 0]))),
    ];
    let mut out: Vec<(String, f64)> = cases
        .into_iter()
        .enumerate()
        .map(|(k, (name, ins, f))| {
            let err = check_inputs(&ins, |t, v| {
                let y = f(t, v)?;
                weighted_sum(t, y, 100 + k as u64)
            });
            (name.to_string(), err.into_iter().fold(0.0, f64::max))
        })
        .collect();
    let ce = check_inputs(&[a34.clone()], |t, v| t.cross_entropy(v[0], &[1, 3, 0], &[0.2, 0.0, 0.8]));
    out.push(("cross_entropy".into(), ce[0]));
    let s = check_inputs(&[a34], |t, v| t.sum(v[0]));
    out.push(("sum".into(), s[0]));
    out
}

/// Every connector parameter group under a weighted-sum loss.
pub fn gac_param_checks(ablated: bool) -> Vec<(String, f64)> {
    use super::fixtures::{random_vis, small_gac};
    let gac = small_gac();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut store = ParamStore::new();
    gac.init_params(&mut store, &mut rng);
    if ablated {
        gac.init_ablation_queries(&mut store, &mut rng);
    }
    rescale_params(&mut store, 32);
    let vis = random_vis(&mut rng, 5, 3, 6);
    check_store(&store, usize::MAX, |t, b| {
        let x = if ablated {
            gac.ablated_forward(t, b, &vis)?
        } else {
            gac.forward(t, b, &vis)?
        };
        weighted_sum(t, x, 33)
    })
}

/// Connector, decoder and lopsided loss as one graph.
pub fn full_graph_checks(ablated: bool, max_coords: usize) -> Vec<(String, f64)> {
    use super::fixtures::{random_vis, small_model, toy_sample};
    use spoofvqa::loss::lopsided_loss_on_tape;
    let (gac, lm, vocab, mut store) = small_model(41, ablated);
    rescale_params(&mut store, 42);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let sample = toy_sample(&vocab, random_vis(&mut rng, 5, 3, 6), 0);
    check_store(&store, max_coords, |t, b| {
        let prefix = if ablated {
            gac.ablated_forward(t, b, &sample.vis)?
        } else {
            gac.forward(t, b, &sample.vis)?
        };
        let logits = lm.answer_logits(t, b, prefix, &sample.question_tokens, &sample.answer_tokens)?;
        let (vars, _) = lopsided_loss_on_tape(
            t,
            logits,
            &sample.answer_tokens,
            sample.judgment_span.clone(),
            sample.interpretation_span.clone(),
            0.7,
        )?;
        Ok(vars.total)
    })
}
