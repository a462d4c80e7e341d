use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{gemm_acc, swap_axes, transpose2d};
use super::{axis_split, ParamId, ParamStore, Result, Tensor, TensorError};
use crate::Scalar;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    /// `[.., m, k] x [k, n]`
    MatMul { a: Var, b: Var },
    /// `[B, m, k] x [B, k, n]`
    BatchMatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Relu(Var),
    Exp(Var),
    Log(Var),
    Powf { a: Var, p: T },
    Scale { a: Var, c: T },
    AddScalar(Var),
    Softmax { a: Var, axis: usize },
    LayerNorm { a: Var, axis: usize, inv_std: Vec<T> },
    Embedding { table: Var, idx: Vec<usize> },
    Reshape(Var),
    Transpose { a: Var, d0: usize, d1: usize },
    Sum { a: Var, axis: usize },
    Mean { a: Var, axis: usize },
    SumAll(Var),
    MeanAll(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { a: Var, axis: usize, start: usize },
    Dropout { a: Var, mask: Vec<T> },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<T>,
        count: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Tape of recorded operations. One graph per forward/backward pass.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<ParamId, Var>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new(0)
    }
}

fn broadcast_ok(a: &[usize], b: &[usize]) -> bool {
    let bn: usize = b.iter().product();
    bn == 1 || (b.len() <= a.len() && a[a.len() - b.len()..] == *b)
}

impl<T: Scalar> Graph<T> {
    /// `seed` drives dropout masks only.
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf holding data that gradients may flow into.
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that never receives gradients (noise, masks, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copy of `v`'s value cut off from the gradient tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// Bring a stored parameter onto the tape. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.param_tracked(store, id, true)
    }

    pub fn param_tracked(&mut self, store: &ParamStore<T>, id: ParamId, track: bool) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, track);
        self.nodes[v.0].param = Some(id);
        self.params.insert(id, v);
        v
    }

    // ---------------------------------------------------------------- linear algebra

    /// `a: [.., m, k]` times a shared `b: [k, n]`, or batched `[B, m, k] x [B, k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let k = sa[sa.len() - 1];
        if sb.len() == 2 {
            if sb[0] != k {
                return Err(mismatch());
            }
            let n = sb[1];
            let rows = self.value(a).numel() / k;
            let mut out = vec![T::zero(); rows * n];
            gemm_acc(rows, k, n, self.value(a).data(), self.value(b).data(), &mut out);
            let mut shape = sa.clone();
            *shape.last_mut().unwrap() = n;
            let rg = self.rg(a) || self.rg(b);
            return Ok(self.push(Tensor { shape, data: out }, Op::MatMul { a, b }, rg));
        }
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sb[1] != k {
            return Err(mismatch());
        }
        let (bsz, m, n) = (sa[0], sa[1], sb[2]);
        let mut out = vec![T::zero(); bsz * m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            for i in 0..bsz {
                gemm_acc(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    &bv[i * k * n..(i + 1) * k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor {
                shape: vec![bsz, m, n],
                data: out,
            },
            Op::BatchMatMul { a, b },
            rg,
        ))
    }

    // ---------------------------------------------------------------- elementwise

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if !broadcast_ok(sa, sb) {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let av = self.value(a);
        let bv = self.value(b).data();
        let bn = bv.len();
        let data = if bn == 1 {
            let y = bv[0];
            av.data().iter().map(|&x| f(x, y)).collect()
        } else {
            av.data()
                .chunks(bn)
                .flat_map(|ch| ch.iter().zip(bv).map(|(&x, &y)| f(x, y)))
                .collect()
        };
        Ok(Tensor {
            shape: av.shape().to_vec(),
            data,
        })
    }

    /// `a + b`, `b` broadcast over leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul { a, b }, rg))
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let t = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), |x| x.ln())
    }

    pub fn powf(&mut self, a: Var, p: T) -> Var {
        self.unary(a, Op::Powf { a, p }, |x| x.powf(p))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::Scale { a, c }, |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    // ---------------------------------------------------------------- normalisation

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Invalid {
                op: "softmax",
                msg: format!("axis {axis} out of range for shape {shape:?}"),
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = self.value(a).data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for j in 0..inner {
                let base = o * n * inner + j;
                let mut mx = T::neg_infinity();
                for i in 0..n {
                    mx = mx.max(x[base + i * inner]);
                }
                if mx == T::neg_infinity() {
                    // fully masked lane: no valid position to attend to
                    continue;
                }
                let mut s = T::zero();
                for i in 0..n {
                    let e = (x[base + i * inner] - mx).exp();
                    out[base + i * inner] = e;
                    s = s + e;
                }
                for i in 0..n {
                    out[base + i * inner] = out[base + i * inner] / s;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data: out }, Op::Softmax { a, axis }, rg))
    }

    /// Normalise to zero mean and unit (biased) variance along `axis`; no affine part.
    pub fn layer_norm(&mut self, a: Var, axis: usize, eps: T) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Invalid {
                op: "layer_norm",
                msg: format!("axis {axis} out of range for shape {shape:?}"),
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = self.value(a).data();
        let nf = T::lit(n as f64);
        let mut out = vec![T::zero(); x.len()];
        let mut inv_std = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for j in 0..inner {
                let base = o * n * inner + j;
                let mean = (0..n).map(|i| x[base + i * inner]).sum::<T>() / nf;
                let var = (0..n)
                    .map(|i| {
                        let d = x[base + i * inner] - mean;
                        d * d
                    })
                    .sum::<T>()
                    / nf;
                let is = T::one() / (var + eps).sqrt();
                for i in 0..n {
                    out[base + i * inner] = (x[base + i * inner] - mean) * is;
                }
                inv_std.push(is);
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data: out }, Op::LayerNorm { a, axis, inv_std }, rg))
    }

    // ---------------------------------------------------------------- indexing and shape

    /// Rows of `table: [R, D]` selected by `idx`; output shape `prefix ++ [D]`.
    pub fn embedding(&mut self, table: Var, idx: &[usize], prefix: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 {
            return Err(TensorError::Invalid {
                op: "embedding",
                msg: format!("table must be rank 2, got {ts:?}"),
            });
        }
        if prefix.iter().product::<usize>() != idx.len() {
            return Err(TensorError::ShapeMismatch {
                op: "embedding",
                lhs: prefix.to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let (rows, d) = (ts[0], ts[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(TensorError::Invalid {
                op: "embedding",
                msg: format!("index {bad} out of range for {rows} rows"),
            });
        }
        let tv = self.value(table).data();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let mut shape = prefix.to_vec();
        shape.push(d);
        let rg = self.rg(table);
        Ok(self.push(
            Tensor { shape, data },
            Op::Embedding {
                table,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    pub fn transpose(&mut self, a: Var, d0: usize, d1: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if d0 >= shape.len() || d1 >= shape.len() {
            return Err(TensorError::Invalid {
                op: "transpose",
                msg: format!("axes ({d0}, {d1}) out of range for shape {shape:?}"),
            });
        }
        let (s, data) = swap_axes(&shape, d0, d1, self.value(a).data());
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape: s, data }, Op::Transpose { a, d0, d1 }, rg))
    }

    fn reduce_axis(&self, a: Var, axis: usize, op: &'static str) -> Result<(Vec<usize>, Vec<T>)> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Invalid {
                op,
                msg: format!("axis {axis} out of range for shape {shape:?}"),
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = self.value(a).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..n {
                let src = &x[(o * n + i) * inner..(o * n + i + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d = *d + *s;
                }
            }
        }
        let mut s = shape;
        s.remove(axis);
        if s.is_empty() {
            s.push(1);
        }
        Ok((s, out))
    }

    /// Sum along `axis`, removing it.
    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (shape, data) = self.reduce_axis(a, axis, "sum")?;
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::Sum { a, axis }, rg))
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (shape, mut data) = self.reduce_axis(a, axis, "mean")?;
        let n = T::lit(self.shape(a)[axis] as f64);
        data.iter_mut().for_each(|x| *x = *x / n);
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::Mean { a, axis }, rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<T>();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().copied().sum::<T>() / T::lit(v.numel() as f64);
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::MeanAll(a), rg)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or(TensorError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: format!("axis {axis} out of range for shape {base:?}"),
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !ok {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let n = self.shape(v)[axis];
                let src = self.value(v).data();
                data.extend_from_slice(&src[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::Invalid {
                op: "narrow",
                msg: format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * n + start) * inner;
            data.extend_from_slice(&x[off..off + len * inner]);
        }
        let mut s = shape;
        s[axis] = len;
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape: s, data }, Op::Narrow { a, axis, start }, rg))
    }

    // ---------------------------------------------------------------- stochastic and losses

    /// Inverted dropout. Identity when `rate == 0` or `train == false`.
    pub fn dropout(&mut self, a: Var, rate: f64, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Invalid {
                op: "dropout",
                msg: format!("rate must lie in [0, 1), got {rate}"),
            });
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let n = self.value(a).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if self.rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let v = self.value(a);
        let t = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect(),
        };
        let rg = self.rg(a);
        Ok(self.push(t, Op::Dropout { a, mask }, rg))
    }

    /// Mean over unmasked rows of `-log softmax(logits)[target]`.
    /// `logits: [N, V]`. Returns `(loss, counted_rows)`; an empty mask yields 0.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<(Var, usize)> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() || mask.len() != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: s,
                rhs: vec![targets.len()],
            });
        }
        let (rows, v) = (s[0], s[1]);
        if let Some(&bad) = targets.iter().zip(mask).find(|(&t, &m)| m && t >= v).map(|(t, _)| t) {
            return Err(TensorError::Invalid {
                op: "cross_entropy",
                msg: format!("target {bad} out of range for {v} classes"),
            });
        }
        let x = self.value(logits).data();
        let mut probs = vec![T::zero(); rows * v];
        let mut total = T::zero();
        let mut count = 0;
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            count += 1;
            let row = &x[r * v..(r + 1) * v];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (p, &l) in probs[r * v..(r + 1) * v].iter_mut().zip(row) {
                *p = (l - mx).exp();
                z = z + *p;
            }
            for p in probs[r * v..(r + 1) * v].iter_mut() {
                *p = *p / z;
            }
            total = total + (z.ln() + mx - row[targets[r]]);
        }
        let loss = if count > 0 {
            total / T::lit(count as f64)
        } else {
            T::zero()
        };
        let rg = self.rg(logits);
        let var = self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            rg,
        );
        Ok((var, count))
    }

    // ---------------------------------------------------------------- backward

    /// Populate gradients of the scalar `loss` for every node that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(ls.to_vec()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn grad_buf<'a>(grads: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> Option<&'a mut Vec<T>> {
        if !nodes[v.0].requires_grad {
            return None;
        }
        let n = nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn backprop_node(&mut self, i: usize, g: &[T]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                let (k, n) = (bv.shape()[0], bv.shape()[1]);
                let rows = av.numel() / k;
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    let bt = transpose2d(k, n, bv.data());
                    gemm_acc(rows, n, k, g, &bt, da);
                }
                if let Some(db) = Self::grad_buf(grads, nodes, *b) {
                    let at = transpose2d(rows, k, av.data());
                    gemm_acc(k, rows, n, &at, g, db);
                }
            }
            Op::BatchMatMul { a, b } => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                let (bsz, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = bv.shape()[2];
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for t in 0..bsz {
                        let bt = transpose2d(k, n, &bv.data()[t * k * n..(t + 1) * k * n]);
                        gemm_acc(m, n, k, &g[t * m * n..(t + 1) * m * n], &bt, &mut da[t * m * k..(t + 1) * m * k]);
                    }
                }
                if let Some(db) = Self::grad_buf(grads, nodes, *b) {
                    for t in 0..bsz {
                        let at = transpose2d(m, k, &av.data()[t * m * k..(t + 1) * m * k]);
                        gemm_acc(k, m, n, &at, &g[t * m * n..(t + 1) * m * n], &mut db[t * k * n..(t + 1) * k * n]);
                    }
                }
            }
            Op::Add { a, b } | Op::Sub { a, b } => {
                let sign = if matches!(nodes[i].op, Op::Sub { .. }) {
                    -T::one()
                } else {
                    T::one()
                };
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for (d, &x) in da.iter_mut().zip(g) {
                        *d = *d + x;
                    }
                }
                if let Some(db) = Self::grad_buf(grads, nodes, *b) {
                    let bn = db.len();
                    for ch in g.chunks(bn) {
                        for (d, &x) in db.iter_mut().zip(ch) {
                            *d = *d + sign * x;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                let bn = bv.len();
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for (idx, (d, &x)) in da.iter_mut().zip(g).enumerate() {
                        *d = *d + x * bv[idx % bn];
                    }
                }
                if let Some(db) = Self::grad_buf(grads, nodes, *b) {
                    for (idx, (&x, &y)) in g.iter().zip(av).enumerate() {
                        db[idx % bn] = db[idx % bn] + x * y;
                    }
                }
            }
            Op::Relu(a) => {
                let x = nodes[a.0].value.data();
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for ((d, &gg), &xx) in da.iter_mut().zip(g).zip(x) {
                        if xx > T::zero() {
                            *d = *d + gg;
                        }
                    }
                }
            }
            Op::Exp(a) => {
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for ((d, &gg), &y) in da.iter_mut().zip(g).zip(out.data()) {
                        *d = *d + gg * y;
                    }
                }
            }
            Op::Log(a) => {
                let x = nodes[a.0].value.data();
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for ((d, &gg), &xx) in da.iter_mut().zip(g).zip(x) {
                        *d = *d + gg / xx;
                    }
                }
            }
            Op::Powf { a, p } => {
                let x = nodes[a.0].value.data();
                let pm1 = *p - T::one();
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for ((d, &gg), &xx) in da.iter_mut().zip(g).zip(x) {
                        *d = *d + gg * *p * xx.powf(pm1);
                    }
                }
            }
            Op::Scale { a, c } => {
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for (d, &gg) in da.iter_mut().zip(g) {
                        *d = *d + gg * *c;
                    }
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for (d, &gg) in da.iter_mut().zip(g) {
                        *d = *d + gg;
                    }
                }
            }
            Op::Softmax { a, axis } => {
                let (outer, n, inner) = axis_split(out.shape(), *axis);
                let y = out.data();
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for o in 0..outer {
                        for j in 0..inner {
                            let base = o * n * inner + j;
                            let dot: T = (0..n).map(|t| g[base + t * inner] * y[base + t * inner]).sum();
                            for t in 0..n {
                                let k = base + t * inner;
                                da[k] = da[k] + y[k] * (g[k] - dot);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm { a, axis, inv_std } => {
                let (outer, n, inner) = axis_split(out.shape(), *axis);
                let xhat = out.data();
                let nf = T::lit(n as f64);
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for o in 0..outer {
                        for j in 0..inner {
                            let base = o * n * inner + j;
                            let is = inv_std[o * inner + j];
                            let mut mg = T::zero();
                            let mut mgx = T::zero();
                            for t in 0..n {
                                let k = base + t * inner;
                                mg = mg + g[k];
                                mgx = mgx + g[k] * xhat[k];
                            }
                            mg = mg / nf;
                            mgx = mgx / nf;
                            for t in 0..n {
                                let k = base + t * inner;
                                da[k] = da[k] + is * (g[k] - mg - xhat[k] * mgx);
                            }
                        }
                    }
                }
            }
            Op::Embedding { table, idx } => {
                let d = nodes[table.0].value.shape()[1];
                if let Some(dt) = Self::grad_buf(grads, nodes, *table) {
                    for (r, &row) in idx.iter().enumerate() {
                        for (x, &gg) in dt[row * d..(row + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *x = *x + gg;
                        }
                    }
                }
            }
            Op::Transpose { a, d0, d1 } => {
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    let (_, back) = swap_axes(out.shape(), *d0, *d1, g);
                    for (d, x) in da.iter_mut().zip(back) {
                        *d = *d + x;
                    }
                }
            }
            Op::Sum { a, axis } | Op::Mean { a, axis } => {
                let in_shape = nodes[a.0].value.shape();
                let (outer, n, inner) = axis_split(in_shape, *axis);
                let scale = if matches!(nodes[i].op, Op::Mean { .. }) {
                    T::one() / T::lit(n as f64)
                } else {
                    T::one()
                };
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for t in 0..n {
                            let dst = &mut da[(o * n + t) * inner..(o * n + t + 1) * inner];
                            for (d, &x) in dst.iter_mut().zip(src) {
                                *d = *d + x * scale;
                            }
                        }
                    }
                }
            }
            Op::SumAll(a) | Op::MeanAll(a) => {
                let n = nodes[a.0].value.numel();
                let gg = if matches!(nodes[i].op, Op::MeanAll(_)) {
                    g[0] / T::lit(n as f64)
                } else {
                    g[0]
                };
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    da.iter_mut().for_each(|d| *d = *d + gg);
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = axis_split(out.shape(), *axis);
                let mut offset = 0;
                for v in inputs {
                    let n = nodes[v.0].value.shape()[*axis];
                    if let Some(dv) = Self::grad_buf(grads, nodes, *v) {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + n) * inner];
                            for (d, &x) in dv[o * n * inner..(o + 1) * n * inner].iter_mut().zip(src) {
                                *d = *d + x;
                            }
                        }
                    }
                    offset += n;
                }
            }
            Op::Narrow { a, axis, start } => {
                let (outer, n, inner) = axis_split(nodes[a.0].value.shape(), *axis);
                let len = out.shape()[*axis];
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for o in 0..outer {
                        let off = (o * n + start) * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        for (d, &x) in da[off..off + len * inner].iter_mut().zip(src) {
                            *d = *d + x;
                        }
                    }
                }
            }
            Op::Dropout { a, mask } => {
                if let Some(da) = Self::grad_buf(grads, nodes, *a) {
                    for ((d, &gg), &m) in da.iter_mut().zip(g).zip(mask) {
                        *d = *d + gg * m;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let v = nodes[logits.0].value.shape()[1];
                let scale = g[0] / T::lit(*count as f64);
                if let Some(dl) = Self::grad_buf(grads, nodes, *logits) {
                    for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                        if !m {
                            continue;
                        }
                        let row = &mut dl[r * v..(r + 1) * v];
                        for (d, &p) in row.iter_mut().zip(&probs[r * v..(r + 1) * v]) {
                            *d = *d + scale * p;
                        }
                        row[t] = row[t] - scale;
                    }
                }
            }
        }
    }

    /// Gradient of the last `backward` call with respect to `v`, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every parameter brought onto the tape that received one.
    pub fn param_grads(&self) -> Vec<(ParamId, &[T])> {
        let mut out: Vec<(ParamId, &[T])> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| self.grad(v).map(|g| (id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}
