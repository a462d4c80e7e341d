//! Central finite differences against reverse-mode gradients on random
//! attention-style graphs that touch every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semcom_core::tensor::{Graph, Tensor, Var};

const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct Spec {
    b: usize,
    l: usize,
    d: usize,
    h: usize,
    v: usize,
    f: usize,
    tokens: Vec<usize>,
    targets: Vec<usize>,
    target_mask: Vec<bool>,
    causal: bool,
    dropout: f64,
    softmax_axis: usize,
    concat_axis: usize,
    reduce_axis: usize,
    reduce_mean: bool,
    power: f64,
    seed: u64,
}

impl Spec {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let b = rng.random_range(1..=2);
        let l = rng.random_range(2..=4);
        let h = 2;
        let d = 2 * rng.random_range(2..=4);
        let v = rng.random_range(5..=7);
        let n = b * l;
        let mut target_mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        target_mask[0] = true;
        Self {
            b,
            l,
            d,
            h,
            v,
            f: rng.random_range(4..=8),
            tokens: (0..n).map(|_| rng.random_range(0..v)).collect(),
            targets: (0..n).map(|_| rng.random_range(0..v)).collect(),
            target_mask,
            causal: rng.random_bool(0.5),
            dropout: if rng.random_bool(0.5) { 0.3 } else { 0.0 },
            softmax_axis: rng.random_range(0..3),
            concat_axis: rng.random_range(0..3),
            reduce_axis: rng.random_range(0..3),
            reduce_mean: rng.random_bool(0.5),
            power: if rng.random_bool(0.5) { -0.5 } else { 1.5 },
            seed: rng.random(),
        }
    }

    /// Shapes of the differentiable inputs, in the order [`Spec::loss`] takes them.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let (b, l, d, v, f) = (self.b, self.l, self.d, self.v, self.f);
        vec![
            vec![v, d],
            vec![l, d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, f],
            vec![f],
            vec![f, d],
            vec![b, l, d],
            vec![b, l, d],
            vec![d, v],
        ]
    }

    pub fn inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        self.shapes()
            .iter()
            .map(|s| Tensor::from_fn(s, |_| rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn heads(&self, g: &mut Graph<f64>, t: Var) -> Var {
        let (b, l, h, dh) = (self.b, self.l, self.h, self.d / self.h);
        let t = g.reshape(t, &[b, l, h, dh]).unwrap();
        let t = g.transpose(t, 1, 2).unwrap();
        g.reshape(t, &[b * h, l, dh]).unwrap()
    }

    /// Build the graph on `values` and return it with the loss and input handles.
    pub fn loss(&self, values: &[Tensor<f64>]) -> (Graph<f64>, Var, Vec<Var>) {
        let (b, l, d, h) = (self.b, self.l, self.d, self.h);
        let mut g = Graph::new(self.seed);
        let x: Vec<Var> = values.iter().map(|t| g.input(t.clone(), true)).collect();
        let [table, pos, wq, wk, wv, w1, b1, w2, gate, pos_in, wout] = x[..] else {
            unreachable!()
        };

        let e = g.embedding(table, &self.tokens, &[b, l]).unwrap();
        let x0 = g.add(e, pos).unwrap();
        let q = g.matmul(x0, wq).unwrap();
        let k = g.matmul(x0, wk).unwrap();
        let v = g.matmul(x0, wv).unwrap();
        let (q, k, v) = (self.heads(&mut g, q), self.heads(&mut g, k), self.heads(&mut g, v));
        let kt = g.transpose(k, 1, 2).unwrap();
        let scores = g.matmul(q, kt).unwrap();
        let mut scores = g.scale(scores, 1.0 / ((d / h) as f64).sqrt());
        if self.causal {
            let mask = Tensor::from_fn(&[l, l], |i| if i % l > i / l { -1e9 } else { 0.0 });
            let m = g.constant(mask);
            scores = g.add(scores, m).unwrap();
        }
        let att = g.softmax(scores, 2).unwrap();
        let ctx = g.matmul(att, v).unwrap();
        let ctx = g.reshape(ctx, &[b, h, l, d / h]).unwrap();
        let ctx = g.transpose(ctx, 1, 2).unwrap();
        let ctx = g.reshape(ctx, &[b, l, d]).unwrap();
        let r = g.add(x0, ctx).unwrap();
        let n1 = g.layer_norm(r, 2, 1e-5).unwrap();

        let hidden = g.matmul(n1, w1).unwrap();
        let hidden = g.add(hidden, b1).unwrap();
        let hidden = g.relu(hidden);
        let hidden = g.dropout(hidden, self.dropout, true).unwrap();
        let ff = g.matmul(hidden, w2).unwrap();
        let r2 = g.add(n1, ff).unwrap();
        let n2 = g.layer_norm(r2, 2, 1e-5).unwrap();

        let gt = g.scale(gate, 0.5);
        let gt = g.exp(gt);
        let gated = g.mul(n2, gt).unwrap();
        let sq = g.mul(pos_in, pos_in).unwrap();
        let pp = g.add_scalar(sq, 0.5);
        let lg = g.log(pp);
        let pw = g.powf(pp, self.power);
        let y = g.add(gated, lg).unwrap();
        let y = g.sub(y, pw).unwrap();

        let sm = g.softmax(y, self.softmax_axis).unwrap();
        let width = g.shape(y)[self.concat_axis];
        let cat = g.concat(&[y, sm], self.concat_axis).unwrap();
        let nar = g.narrow(cat, self.concat_axis, width / 2, width).unwrap();
        let red = if self.reduce_mean {
            g.mean(nar, self.reduce_axis).unwrap()
        } else {
            g.sum(nar, self.reduce_axis).unwrap()
        };
        let side = g.mean_all(red);
        let red_sq = g.mul(red, red).unwrap();
        let energy = g.sum_all(red_sq);

        let flat = g.reshape(y, &[b * l, d]).unwrap();
        let logits = g.matmul(flat, wout).unwrap();
        let (ce, _) = g.cross_entropy(logits, &self.targets, &self.target_mask).unwrap();
        let side = g.scale(side, 0.3);
        let energy = g.scale(energy, 0.01);
        let loss = g.add(ce, side).unwrap();
        let loss = g.add(loss, energy).unwrap();
        (g, loss, x)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Comparison {
    pub max_rel: f64,
    pub entries: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compare every input entry of one random graph.
pub fn check_graph(seed: u64) -> Comparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = Spec::random(&mut rng);
    let values = spec.inputs(&mut rng);
    let (mut g, loss, vars) = spec.loss(&values);
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect();
    let eval = |vals: &[Tensor<f64>]| {
        let (g, loss, _) = spec.loss(vals);
        g.value(loss).data()[0]
    };
    let mut out = Comparison::default();
    let mut work = values.clone();
    for (t, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + STEP;
            let up = eval(&work);
            work[t].data_mut()[i] = orig - STEP;
            let down = eval(&work);
            work[t].data_mut()[i] = orig;
            let n = (up - down) / (2.0 * STEP);
            out.max_rel = out.max_rel.max(relative_error(a, n));
            out.entries += 1;
        }
    }
    out
}
