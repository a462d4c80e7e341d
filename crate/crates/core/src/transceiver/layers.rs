//! Dense, attention and Transformer blocks built from graph ops.

use std::collections::BTreeSet;

use rand::Rng;

use crate::tensor::{Graph, ParamGroup, ParamId, ParamStore, Result, Tensor, Var};
use crate::Scalar;

pub(crate) const LN_EPS: f64 = 1e-6;

/// Forward-pass context: the tape, the parameters, frozen groups and train/eval mode.
pub struct Fwd<'a, T: Scalar> {
    pub g: &'a mut Graph<T>,
    pub store: &'a ParamStore<T>,
    pub frozen: &'a BTreeSet<ParamGroup>,
    pub train: bool,
    pub dropout: f64,
}

impl<T: Scalar> Fwd<'_, T> {
    /// Parameter node. Frozen parameters enter as plain constants, so several
    /// stores may share one graph as long as at most one of them is trainable.
    pub fn p(&mut self, id: ParamId) -> Var {
        let p = self.store.get(id);
        if self.frozen.contains(&p.group) {
            self.g.constant(p.value.clone())
        } else {
            self.g.param(self.store, id)
        }
    }

    pub fn drop(&mut self, x: Var) -> Result<Var> {
        self.g.dropout(x, self.dropout, self.train)
    }
}

/// Uniform init in `±1/√fan_in`.
pub(crate) fn uniform<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let a = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-a..a)))
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        group: ParamGroup,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let w = store.add(format!("{name}.w"), group, uniform(&[fan_in, fan_out], fan_in, rng));
        let b = store.add(format!("{name}.b"), group, uniform(&[fan_out], fan_in, rng));
        Self { w, b }
    }

    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, x: Var) -> Result<Var> {
        let w = f.p(self.w);
        let b = f.p(self.b);
        let y = f.g.matmul(x, w)?;
        f.g.add(y, b)
    }

    pub fn forward_relu<T: Scalar>(&self, f: &mut Fwd<T>, x: Var) -> Result<Var> {
        let y = self.forward(f, x)?;
        Ok(f.g.relu(y))
    }
}

/// Sinusoidal position table `[len, dim]`.
pub fn positional_encoding<T: Scalar>(len: usize, dim: usize) -> Tensor<T> {
    Tensor::from_fn(&[len, dim], |i| {
        let (pos, j) = (i / dim, i % dim);
        let rate = 10000f64.powf((2 * (j / 2)) as f64 / dim as f64);
        let a = pos as f64 / rate;
        T::lit(if j % 2 == 0 { a.sin() } else { a.cos() })
    })
}

/// Additive attention mask `[B·H, Lq, Lk]` with `-inf` where a key is hidden.
pub fn attention_mask<T: Scalar>(
    batch: usize,
    heads: usize,
    lq: usize,
    lk: usize,
    key_valid: Option<&[bool]>,
    causal: bool,
) -> Tensor<T> {
    let mut data = Vec::with_capacity(batch * heads * lq * lk);
    for b in 0..batch {
        let mut plane = vec![T::zero(); lq * lk];
        for i in 0..lq {
            for j in 0..lk {
                let hidden = (causal && j > i) || key_valid.is_some_and(|m| !m[b * lk + j]);
                if hidden {
                    plane[i * lk + j] = T::neg_infinity();
                }
            }
        }
        for _ in 0..heads {
            data.extend_from_slice(&plane);
        }
    }
    Tensor::new(vec![batch * heads, lq, lk], data).expect("mask shape")
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        group: ParamGroup,
        dim: usize,
        heads: usize,
    ) -> Self {
        Self {
            q: Linear::new(store, rng, &format!("{name}.q"), group, dim, dim),
            k: Linear::new(store, rng, &format!("{name}.k"), group, dim, dim),
            v: Linear::new(store, rng, &format!("{name}.v"), group, dim, dim),
            o: Linear::new(store, rng, &format!("{name}.o"), group, dim, dim),
            heads,
        }
    }

    fn split<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (b, l, d) = (s[0], s[1], s[2]);
        let h = self.heads;
        let x = g.reshape(x, &[b, l, h, d / h])?;
        let x = g.transpose(x, 1, 2)?;
        g.reshape(x, &[b * h, l, d / h])
    }

    /// `query: [B, Lq, D]`, `kv: [B, Lk, D]`, `mask: [B·H, Lq, Lk]` additive.
    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, query: Var, kv: Var, mask: Option<Var>) -> Result<Var> {
        let s = f.g.shape(query).to_vec();
        let (b, lq, d) = (s[0], s[1], s[2]);
        let h = self.heads;
        let q = self.q.forward(f, query)?;
        let k = self.k.forward(f, kv)?;
        let v = self.v.forward(f, kv)?;
        let q = self.split(f.g, q)?;
        let k = self.split(f.g, k)?;
        let v = self.split(f.g, v)?;
        let kt = f.g.transpose(k, 1, 2)?;
        let scores = f.g.matmul(q, kt)?;
        let mut scores = f.g.scale(scores, T::lit(1.0 / ((d / h) as f64).sqrt()));
        if let Some(m) = mask {
            scores = f.g.add(scores, m)?;
        }
        let att = f.g.softmax(scores, 2)?;
        let ctx = f.g.matmul(att, v)?;
        let ctx = f.g.reshape(ctx, &[b, h, lq, d / h])?;
        let ctx = f.g.transpose(ctx, 1, 2)?;
        let ctx = f.g.reshape(ctx, &[b, lq, d])?;
        self.o.forward(f, ctx)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        group: ParamGroup,
        dim: usize,
        hidden: usize,
    ) -> Self {
        Self {
            inner: Linear::new(store, rng, &format!("{name}.ffn1"), group, dim, hidden),
            outer: Linear::new(store, rng, &format!("{name}.ffn2"), group, hidden, dim),
        }
    }

    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, x: Var) -> Result<Var> {
        let h = self.inner.forward_relu(f, x)?;
        self.outer.forward(f, h)
    }
}

/// `LN(x + dropout(sub))`
fn residual<T: Scalar>(f: &mut Fwd<T>, x: Var, sub: Var) -> Result<Var> {
    let sub = f.drop(sub)?;
    let y = f.g.add(x, sub)?;
    f.g.layer_norm(y, 2, T::lit(LN_EPS))
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        group: ParamGroup,
        dim: usize,
        heads: usize,
        ffn: usize,
    ) -> Self {
        Self {
            attn: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), group, dim, heads),
            ffn: FeedForward::new(store, rng, name, group, dim, ffn),
        }
    }

    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, x: Var, mask: Var) -> Result<Var> {
        let a = self.attn.forward(f, x, x, Some(mask))?;
        let x = residual(f, x, a)?;
        let h = self.ffn.forward(f, x)?;
        residual(f, x, h)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub cross_attn: MultiHeadAttention,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        group: ParamGroup,
        dim: usize,
        heads: usize,
        ffn: usize,
    ) -> Self {
        Self {
            self_attn: MultiHeadAttention::new(store, rng, &format!("{name}.self"), group, dim, heads),
            cross_attn: MultiHeadAttention::new(store, rng, &format!("{name}.cross"), group, dim, heads),
            ffn: FeedForward::new(store, rng, name, group, dim, ffn),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        f: &mut Fwd<T>,
        x: Var,
        memory: Var,
        self_mask: Var,
        cross_mask: Var,
    ) -> Result<Var> {
        let a = self.self_attn.forward(f, x, x, Some(self_mask))?;
        let x = residual(f, x, a)?;
        let c = self.cross_attn.forward(f, x, memory, Some(cross_mask))?;
        let x = residual(f, x, c)?;
        let h = self.ffn.forward(f, x)?;
        residual(f, x, h)
    }
}
