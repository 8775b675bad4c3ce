use super::{gelu_grad_scalar, gelu_scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Concat { parts: Vec<usize>, axis: usize },
    Slice { src: usize, axis: usize, start: usize },
    Transpose(usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(usize),
    Embedding { table: usize, ids: Vec<usize> },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Vec<f64>,
    },
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Records operations in execution order and replays them in reverse.
///
/// One tape belongs to one forward/backward pass. Leaves marked with
/// `requires_grad` receive gradients; every node downstream of such a leaf
/// also keeps its gradient so intermediate values can be inspected.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        other => Err(Error::Shape {
            op,
            lhs: other.to_vec(),
            rhs: vec![],
        }),
    }
}

fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], sizes: &[usize], idx: usize) -> &'a mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; sizes[idx]])
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn matmul_into(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a), "matmul")?;
        let (k2, n) = dims2(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        self.push(t, Op::MatMul(a.0, b.0), &[a.0, b.0], "matmul")
    }

    /// Elementwise sum. `b` may also be a vector matching the last axis of
    /// `a`, in which case it is added to every slice.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa == sb {
            let data = self
                .value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x + y)
                .collect();
            let t = Tensor::new(sa, data)?;
            return self.push(t, Op::Add(a.0, b.0), &[a.0, b.0], "add");
        }
        if sb.len() == 1 && sb[0] == *sa.last().unwrap() {
            let n = sb[0];
            let bias = self.value(b).data();
            let data = self
                .value(a)
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + bias[i % n])
                .collect();
            let t = Tensor::new(sa, data)?;
            return self.push(t, Op::AddRow(a.0, b.0), &[a.0, b.0], "add");
        }
        Err(Error::Shape {
            op: "add",
            lhs: sa,
            rhs: sb,
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::Shape {
                op: "mul",
                lhs: sa,
                rhs: sb.to_vec(),
            });
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(sa, data)?;
        self.push(t, Op::Mul(a.0, b.0), &[a.0, b.0], "mul")
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let v = self.value(a);
        let t = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x * s).collect())?;
        self.push(t, Op::Scale(a.0, s), &[a.0], "scale")
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(Error::Contract("concat needs parts and axis 0 or 1".into()));
        }
        let (r0, c0) = dims2(self.value(parts[0]), "concat")?;
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat")?;
            let ok = if axis == 0 { c == c0 } else { r == r0 };
            if !ok {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: vec![r0, c0],
                    rhs: vec![r, c],
                });
            }
            rows += r;
            cols += c;
        }
        let (out_r, out_c) = if axis == 0 { (rows, c0) } else { (r0, cols) };
        let mut data = Vec::with_capacity(out_r * out_c);
        if axis == 0 {
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
        } else {
            for i in 0..r0 {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row(i));
                }
            }
        }
        let t = Tensor::new(vec![out_r, out_c], data)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(t, Op::Concat { parts: idx.clone(), axis }, &idx, "concat")
    }

    /// Takes `[start, end)` along `axis` of a 2-D tensor.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let (r, c) = dims2(self.value(a), "slice")?;
        let lim = if axis == 0 { r } else { c };
        if axis > 1 || start >= end || end > lim {
            return Err(Error::Shape {
                op: "slice",
                lhs: vec![r, c],
                rhs: vec![axis, start, end],
            });
        }
        let src = self.value(a);
        let t = if axis == 0 {
            Tensor::new(vec![end - start, c], src.data()[start * c..end * c].to_vec())?
        } else {
            let mut data = Vec::with_capacity(r * (end - start));
            for i in 0..r {
                data.extend_from_slice(&src.row(i)[start..end]);
            }
            Tensor::new(vec![r, end - start], data)?
        };
        self.push(t, Op::Slice { src: a.0, axis, start }, &[a.0], "slice")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(a), "transpose")?;
        let src = self.value(a).data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], data)?;
        self.push(t, Op::Transpose(a.0), &[a.0], "transpose")
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if !v.is_finite() {
            return Err(Error::NonFinite("softmax input"));
        }
        let n = v.last_dim();
        let mut data = Vec::with_capacity(v.len());
        for row in v.data().chunks(n) {
            data.extend(super::softmax(row));
        }
        let t = Tensor::new(v.shape().to_vec(), data)?;
        self.push(t, Op::Softmax(a.0), &[a.0], "softmax")
    }

    /// Layer normalisation over the last axis with biased variance.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Contract("layernorm eps must be positive".into()));
        }
        let v = self.value(x);
        let d = v.last_dim();
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(Error::Shape {
                    op: "layernorm",
                    lhs: v.shape().to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = Vec::with_capacity(v.len());
        let mut xhat = Vec::with_capacity(v.len());
        let mut inv_std = Vec::with_capacity(v.outer());
        for row in v.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, r) in row.iter().enumerate() {
                let h = (r - mean) * inv;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let t = Tensor::new(v.shape().to_vec(), out)?;
        self.push(
            t,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                inv_std,
            },
            &[x.0, gain.0, bias.0],
            "layernorm",
        )
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let t = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| gelu_scalar(x)).collect())?;
        self.push(t, Op::Gelu(a.0), &[a.0], "gelu")
    }

    /// Gathers rows of a `[V×D]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, d) = dims2(self.value(table), "embedding")?;
        if ids.is_empty() {
            return Err(Error::Contract("embedding lookup with no ids".into()));
        }
        let tab = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Contract(format!("embedding id {id} out of range {vocab}")));
            }
            data.extend_from_slice(tab.row(id));
        }
        let t = Tensor::new(vec![ids.len(), d], data)?;
        self.push(
            t,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
            &[table.0],
            "embedding",
        )
    }

    /// Weighted token cross-entropy: `Σ_t w_t · (−log softmax(logits_t)[target_t])`.
    ///
    /// Rows with zero weight are skipped entirely, so they neither contribute
    /// to the value nor receive gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let (t_len, vocab) = dims2(self.value(logits), "cross_entropy")?;
        if targets.len() != t_len || weights.len() != t_len {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: vec![t_len, vocab],
                rhs: vec![targets.len(), weights.len()],
            });
        }
        if let Some(bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(Error::Contract(format!("target id {bad} out of range {vocab}")));
        }
        let lv = self.value(logits);
        let mut total = 0.0;
        let mut probs = vec![0.0; t_len * vocab];
        for t in 0..t_len {
            if weights[t] == 0.0 {
                continue;
            }
            let row = lv.row(t);
            let p = super::softmax(row);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += weights[t] * (lse - row[targets[t]]);
            probs[t * vocab..(t + 1) * vocab].copy_from_slice(&p);
        }
        let out = Tensor::scalar(total);
        self.push(
            out,
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            &[logits.0],
            "cross_entropy",
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0), &[a.0], "sum")
    }

    /// Reverse-mode sweep from a scalar root.
    ///
    /// Clears gradients from any previous sweep first, so calling this twice
    /// yields identical results.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        let sizes: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let needs: Vec<bool> = self.nodes.iter().map(|n| n.requires_grad).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !needs[i] {
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = dims2(&self.nodes[*a].value, "matmul")?;
                    let n = self.nodes[*b].value.cols();
                    let av = self.nodes[*a].value.data();
                    let bv = self.nodes[*b].value.data();
                    if needs[*a] {
                        // dA = dC · Bᵀ
                        let da = acc(&mut grads, &sizes, *a);
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let brow = &bv[p * n..(p + 1) * n];
                                da[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    if needs[*b] {
                        // dB = Aᵀ · dC
                        let db = acc(&mut grads, &sizes, *b);
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let a_rp = av[r * k + p];
                                if a_rp == 0.0 {
                                    continue;
                                }
                                for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *d += a_rp * gv;
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for &x in [a, b] {
                        if needs[x] {
                            for (d, gv) in acc(&mut grads, &sizes, x).iter_mut().zip(&g) {
                                *d += gv;
                            }
                        }
                    }
                }
                Op::AddRow(a, b) => {
                    if needs[*a] {
                        for (d, gv) in acc(&mut grads, &sizes, *a).iter_mut().zip(&g) {
                            *d += gv;
                        }
                    }
                    if needs[*b] {
                        let n = sizes[*b];
                        let db = acc(&mut grads, &sizes, *b);
                        for row in g.chunks(n) {
                            for (d, gv) in db.iter_mut().zip(row) {
                                *d += gv;
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if needs[a] {
                        let bv = self.nodes[b].value.data();
                        for ((d, gv), y) in acc(&mut grads, &sizes, a).iter_mut().zip(&g).zip(bv) {
                            *d += gv * y;
                        }
                    }
                    if needs[b] {
                        let av = self.nodes[a].value.data();
                        for ((d, gv), x) in acc(&mut grads, &sizes, b).iter_mut().zip(&g).zip(av) {
                            *d += gv * x;
                        }
                    }
                }
                Op::Scale(a, s) => {
                    if needs[*a] {
                        for (d, gv) in acc(&mut grads, &sizes, *a).iter_mut().zip(&g) {
                            *d += gv * s;
                        }
                    }
                }
                Op::Concat { parts, axis } => {
                    let out_cols = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = dims2(&self.nodes[p].value, "concat")?;
                        if needs[p] {
                            let dp = acc(&mut grads, &sizes, p);
                            if *axis == 0 {
                                for (d, gv) in dp.iter_mut().zip(&g[offset * out_cols..(offset + r) * out_cols]) {
                                    *d += gv;
                                }
                            } else {
                                for row in 0..r {
                                    let src = &g[row * out_cols + offset..row * out_cols + offset + c];
                                    for (d, gv) in dp[row * c..(row + 1) * c].iter_mut().zip(src) {
                                        *d += gv;
                                    }
                                }
                            }
                        }
                        offset += if *axis == 0 { r } else { c };
                    }
                }
                Op::Slice { src, axis, start } => {
                    if needs[*src] {
                        let src_cols = self.nodes[*src].value.cols();
                        let (r, c) = dims2(&node.value, "slice")?;
                        let ds = acc(&mut grads, &sizes, *src);
                        if *axis == 0 {
                            for (d, gv) in ds[start * src_cols..(start + r) * src_cols].iter_mut().zip(&g) {
                                *d += gv;
                            }
                        } else {
                            for row in 0..r {
                                let dst = &mut ds[row * src_cols + start..row * src_cols + start + c];
                                for (d, gv) in dst.iter_mut().zip(&g[row * c..(row + 1) * c]) {
                                    *d += gv;
                                }
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    if needs[*a] {
                        let (r, c) = dims2(&self.nodes[*a].value, "transpose")?;
                        let da = acc(&mut grads, &sizes, *a);
                        for i in 0..r {
                            for j in 0..c {
                                da[i * c + j] += g[j * r + i];
                            }
                        }
                    }
                }
                Op::Softmax(a) => {
                    if needs[*a] {
                        let n = node.value.last_dim();
                        let y = node.value.data();
                        let da = acc(&mut grads, &sizes, *a);
                        for ((yr, gr), dr) in y.chunks(n).zip(g.chunks(n)).zip(da.chunks_mut(n)) {
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for j in 0..n {
                                dr[j] += yr[j] * (gr[j] - dot);
                            }
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let d = node.value.last_dim();
                    let gv = self.nodes[*gain].value.data().to_vec();
                    if needs[*x] {
                        let dx = acc(&mut grads, &sizes, *x);
                        for (r, inv) in inv_std.iter().enumerate() {
                            let gr = &g[r * d..(r + 1) * d];
                            let hr = &xhat[r * d..(r + 1) * d];
                            let gh: Vec<f64> = gr.iter().zip(&gv).map(|(a, b)| a * b).collect();
                            let mean_gh = gh.iter().sum::<f64>() / d as f64;
                            let mean_ghh = gh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                            for j in 0..d {
                                dx[r * d + j] += inv * (gh[j] - mean_gh - hr[j] * mean_ghh);
                            }
                        }
                    }
                    if needs[*gain] {
                        let dg = acc(&mut grads, &sizes, *gain);
                        for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                            for j in 0..d {
                                dg[j] += gr[j] * hr[j];
                            }
                        }
                    }
                    if needs[*bias] {
                        let db = acc(&mut grads, &sizes, *bias);
                        for gr in g.chunks(d) {
                            for j in 0..d {
                                db[j] += gr[j];
                            }
                        }
                    }
                }
                Op::Gelu(a) => {
                    if needs[*a] {
                        let xv = self.nodes[*a].value.data();
                        for ((d, gv), x) in acc(&mut grads, &sizes, *a).iter_mut().zip(&g).zip(xv) {
                            *d += gv * gelu_grad_scalar(*x);
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    if needs[*table] {
                        let d = node.value.cols();
                        let dt = acc(&mut grads, &sizes, *table);
                        for (r, &id) in ids.iter().enumerate() {
                            for j in 0..d {
                                dt[id * d + j] += g[r * d + j];
                            }
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    weights,
                    probs,
                } => {
                    if needs[*logits] {
                        let vocab = self.nodes[*logits].value.cols();
                        let dl = acc(&mut grads, &sizes, *logits);
                        for (t, (&target, &w)) in targets.iter().zip(weights).enumerate() {
                            if w == 0.0 {
                                continue;
                            }
                            let scale = g[0] * w;
                            for j in 0..vocab {
                                let onehot = if j == target { 1.0 } else { 0.0 };
                                dl[t * vocab + j] += scale * (probs[t * vocab + j] - onehot);
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    if needs[*a] {
                        for d in acc(&mut grads, &sizes, *a).iter_mut() {
                            *d += g[0];
                        }
                    }
                }
            }
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }
}
