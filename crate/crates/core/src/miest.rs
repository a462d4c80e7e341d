//! Mutual-information lower bound via the Donsker–Varadhan dual:
//!
//! `L_MI = E_p(x,y)[f_T(x,y)] − log E_p(x)p(y)[exp f_T(x,y)]`
//!
//! Joint samples are aligned `(xᵢ, yᵢ)` pairs; marginal samples pair `xᵢ`
//! with `y_π(i)` for a seeded cyclic permutation `π` without fixed points.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Adam, AdamConfig, Graph, Optimizer, ParamGroup, ParamStore, Tensor, TensorError, Var};
use crate::transceiver::layers::Linear;
use crate::transceiver::Fwd;
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum MiError {
    #[error("mutual-information bound needs at least 2 sample pairs, got {0}")]
    TooFewSamples(usize),
    #[error("x and y hold different sample counts: {0} vs {1}")]
    Misaligned(usize, usize),
    #[error("mutual-information training diverged at step {step}: bound = {value}")]
    Diverged { step: usize, value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, MiError>;

static NOTHING_FROZEN: BTreeSet<ParamGroup> = BTreeSet::new();

/// Statistics network `f_T`: Dense(h, relu) → Dense(h, relu) → Dense(1).
#[derive(Clone, Debug)]
pub struct MiNetwork<T: Scalar> {
    pub params: ParamStore<T>,
    layers: [Linear; 3],
    pub x_dim: usize,
    pub y_dim: usize,
    /// Apply ReLU to the scalar output as well.
    pub final_relu: bool,
}

impl<T: Scalar> MiNetwork<T> {
    pub fn new(x_dim: usize, y_dim: usize, hidden: usize, final_relu: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let g = ParamGroup::MiNetwork;
        let layers = [
            Linear::new(&mut store, &mut rng, "mi.0", g, x_dim + y_dim, hidden),
            Linear::new(&mut store, &mut rng, "mi.1", g, hidden, hidden),
            Linear::new(&mut store, &mut rng, "mi.2", g, hidden, 1),
        ];
        Self {
            params: store,
            layers,
            x_dim,
            y_dim,
            final_relu,
        }
    }

    /// `f_T` of rows `[S, x_dim + y_dim]`, shape `[S, 1]`. `track` keeps gradients for the net's own parameters.
    pub fn statistic(&self, g: &mut Graph<T>, xy: Var, track: bool) -> std::result::Result<Var, TensorError> {
        let frozen_all: BTreeSet<ParamGroup>;
        let frozen = if track {
            &NOTHING_FROZEN
        } else {
            frozen_all = [ParamGroup::MiNetwork].into();
            &frozen_all
        };
        let mut f = Fwd {
            g,
            store: &self.params,
            frozen,
            train: false,
            dropout: 0.0,
        };
        let h = self.layers[0].forward_relu(&mut f, xy)?;
        let h = self.layers[1].forward_relu(&mut f, h)?;
        let out = self.layers[2].forward(&mut f, h)?;
        Ok(if self.final_relu { f.g.relu(out) } else { out })
    }
}

/// Uniformly random cyclic permutation (Sattolo), hence no fixed points.
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

/// The DV bound as a graph scalar. `x: [S, dx]`, `y: [S, dy]`; `perm` realigns
/// `y` for the marginal term and may stack several realignments (`K·S`
/// entries, the `k`-th block pairing row `i` of `x` with row `perm[k·S + i]`).
pub fn mi_lower_bound<T: Scalar>(
    g: &mut Graph<T>,
    net: &MiNetwork<T>,
    x: Var,
    y: Var,
    perm: &[usize],
    track_net: bool,
) -> Result<Var> {
    let (sx, sy) = (g.shape(x)[0], g.shape(y)[0]);
    if sx != sy {
        return Err(MiError::Misaligned(sx, sy));
    }
    if sx < 2 {
        return Err(MiError::TooFewSamples(sx));
    }
    let joint_in = g.concat(&[x, y], 1)?;
    let joint = net.statistic(g, joint_in, track_net)?;
    let joint = g.mean_all(joint);
    if perm.is_empty() || !perm.len().is_multiple_of(sx) {
        return Err(MiError::Misaligned(sx, perm.len()));
    }
    let y_shuf = g.embedding(y, perm, &[perm.len()])?;
    let x_rep = if perm.len() == sx {
        x
    } else {
        let tiled: Vec<usize> = (0..perm.len()).map(|i| i % sx).collect();
        g.embedding(x, &tiled, &[perm.len()])?
    };
    let marg_in = g.concat(&[x_rep, y_shuf], 1)?;
    let t = net.statistic(g, marg_in, track_net)?;
    let mx = g.value(t).data().iter().copied().fold(T::neg_infinity(), T::max);
    let shifted = g.add_scalar(t, -mx);
    let e = g.exp(shifted);
    let m = g.mean_all(e);
    let lse = g.log(m);
    let lse = g.add_scalar(lse, mx);
    Ok(g.sub(joint, lse)?)
}

/// Gather the non-PAD symbol positions of `[B, L, 2N]` blocks into `[S, 2N]` rows.
pub fn symbol_pairs<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    y: Var,
    valid: &[bool],
) -> std::result::Result<(Var, Var), TensorError> {
    let s = g.shape(x).to_vec();
    let rows = s[0] * s[1];
    let idx: Vec<usize> = (0..rows).filter(|&i| valid[i]).collect();
    let xr = g.reshape(x, &[rows, s[2]])?;
    let yr = g.reshape(y, &[rows, s[2]])?;
    let xs = g.embedding(xr, &idx, &[idx.len()])?;
    let ys = g.embedding(yr, &idx, &[idx.len()])?;
    Ok((xs, ys))
}

fn rows<T: Scalar>(t: &Tensor<T>, idx: &[usize]) -> Tensor<T> {
    let d = t.shape()[1];
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
    }
    Tensor::new(vec![idx.len(), d], data).expect("row gather")
}

/// Hyperparameters of [`train_mi`].
#[derive(Clone, Debug, PartialEq)]
pub struct MiTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Derangements stacked in the marginal term of each step.
    pub shuffles: usize,
    pub seed: u64,
}

impl Default for MiTrainConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            lr: 1e-3,
            batch_size: 256,
            shuffles: 1,
            seed: 0,
        }
    }
}

/// One ascent step on the bound of a minibatch; returns the bound before the step.
fn ascent_step<T: Scalar, R: Rng + ?Sized>(
    net: &mut MiNetwork<T>,
    x: Tensor<T>,
    y: Tensor<T>,
    shuffles: usize,
    step: usize,
    rng: &mut R,
    opt: &mut Adam<T>,
) -> Result<f64> {
    let n = x.shape()[0];
    let perm: Vec<usize> = (0..shuffles.max(1)).flat_map(|_| derangement(n, rng)).collect();
    let mut g = Graph::new(0);
    let xv = g.constant(x);
    let yv = g.constant(y);
    let bound = mi_lower_bound(&mut g, net, xv, yv, &perm, true)?;
    let value = g.value(bound).data()[0].as_f64();
    if !value.is_finite() {
        return Err(MiError::Diverged { step, value });
    }
    let neg = g.scale(bound, -T::one());
    g.backward(neg)?;
    opt.step(&mut net.params, &g.param_grads())
        .map_err(|_| MiError::Diverged { step, value })?;
    Ok(value)
}

/// Gradient ascent on the bound over random minibatches of the fixed samples
/// `x: [S, dx]`, `y: [S, dy]`. Returns the per-step bound values.
pub fn train_mi<T: Scalar>(
    net: &mut MiNetwork<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    config: &MiTrainConfig,
    opt: &mut Adam<T>,
) -> Result<Vec<f64>> {
    let n = x.shape()[0];
    if y.shape()[0] != n {
        return Err(MiError::Misaligned(n, y.shape()[0]));
    }
    if n < 2 {
        return Err(MiError::TooFewSamples(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bs = config.batch_size.clamp(2, n);
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let idx = sample(&mut rng, n, bs).into_vec();
        match ascent_step(net, rows(x, &idx), rows(y, &idx), config.shuffles, step, &mut rng, opt) {
            Ok(v) => trace.push(v),
            Err(e) => {
                log::error!("mi training diverged at step {step}: last bounds {:?}", &trace[trace.len().saturating_sub(5)..]);
                return Err(e);
            }
        }
    }
    Ok(trace)
}

/// Fresh Adam state for an MI network.
pub fn mi_optimizer<T: Scalar>(lr: f64) -> Adam<T> {
    Adam::new(AdamConfig {
        lr,
        ..AdamConfig::default()
    })
}

/// Bound on a full sample set with a delta-method standard error, `(estimate, se)`.
pub fn estimate<T: Scalar>(net: &MiNetwork<T>, x: &Tensor<T>, y: &Tensor<T>, seed: u64) -> Result<(f64, f64)> {
    estimate_shuffled(net, x, y, 1, seed)
}

/// [`estimate`] with the marginal term averaged over `shuffles` independent
/// derangements, i.e. over `shuffles · S` mismatched pairs.
pub fn estimate_shuffled<T: Scalar>(
    net: &MiNetwork<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    shuffles: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = x.shape()[0];
    if y.shape()[0] != n {
        return Err(MiError::Misaligned(n, y.shape()[0]));
    }
    if n < 2 {
        return Err(MiError::TooFewSamples(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let statistic = |y_rows: Option<&[usize]>| -> Result<Vec<f64>> {
        let mut g = Graph::new(0);
        let xv = g.constant(x.clone());
        let mut yv = g.constant(y.clone());
        if let Some(p) = y_rows {
            yv = g.embedding(yv, p, &[n])?;
        }
        let joint_in = g.concat(&[xv, yv], 1)?;
        let t = net.statistic(&mut g, joint_in, false)?;
        Ok(g.value(t).data().iter().map(|v| v.as_f64()).collect())
    };
    let fj = statistic(None)?;
    let mut fm = Vec::with_capacity(n * shuffles.max(1));
    for _ in 0..shuffles.max(1) {
        fm.extend(statistic(Some(&derangement(n, &mut rng)))?);
    }
    let (nj, nm) = (fj.len() as f64, fm.len() as f64);
    let mj = fj.iter().sum::<f64>() / nj;
    let vj = fj.iter().map(|v| (v - mj).powi(2)).sum::<f64>() / (nj - 1.0);
    let mx = fm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let em: Vec<f64> = fm.iter().map(|v| (v - mx).exp()).collect();
    let me = em.iter().sum::<f64>() / nm;
    let ve = em.iter().map(|v| (v - me).powi(2)).sum::<f64>() / (nm - 1.0);
    let est = mj - (me.ln() + mx);
    if !est.is_finite() {
        return Err(MiError::Diverged { step: 0, value: est });
    }
    let se = (vj / nj + ve / (nm * me * me)).sqrt();
    Ok((est, se))
}

/// Settings of [`fit_held_out`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeldOut {
    /// Fraction of the pairs scored instead of trained on.
    pub fraction: f64,
    /// Training steps between scorings.
    pub eval_every: usize,
    /// Derangements averaged in the marginal term of each score.
    pub shuffles: usize,
}

impl Default for HeldOut {
    fn default() -> Self {
        Self {
            fraction: 0.2,
            eval_every: 100,
            shuffles: 8,
        }
    }
}

/// Fit the network to a channel and score the bound on held-out inputs.
///
/// `x: [S, dx]` holds the channel inputs; `channel` draws outputs for a set of
/// input rows, so every training minibatch sees fresh outputs. The held-out
/// inputs get one draw that all scorings share. The network is scored every
/// `eval_every` steps and left at its best checkpoint; a divergence ends
/// training at the last good one. Returns `(estimate, se)` of that checkpoint.
pub fn fit_held_out<T, C>(
    net: &mut MiNetwork<T>,
    x: &Tensor<T>,
    mut channel: C,
    held_out: &HeldOut,
    config: &MiTrainConfig,
    opt: &mut Adam<T>,
) -> Result<(f64, f64)>
where
    T: Scalar,
    C: FnMut(&Tensor<T>, &mut ChaCha8Rng) -> Tensor<T>,
{
    let n = x.shape()[0];
    if n < 4 {
        return Err(MiError::TooFewSamples(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let h = ((n as f64 * held_out.fraction).round() as usize).clamp(2, n - 2);
    let (held, fit) = idx.split_at(h);
    let xf = rows(x, fit);
    let xh = rows(x, held);
    let yh = channel(&xh, &mut rng);
    if yh.shape()[0] != h {
        return Err(MiError::Misaligned(h, yh.shape()[0]));
    }
    let score = |net: &MiNetwork<T>, seed| estimate_shuffled(net, &xh, &yh, held_out.shuffles, seed);
    let mut best = score(net, rng.random())?;
    let mut best_params = net.params.clone();
    let bs = config.batch_size.clamp(2, fit.len());
    let mut step = 0;
    'fit: while step < config.steps {
        let k = held_out.eval_every.clamp(1, config.steps - step);
        for _ in 0..k {
            let pick = sample(&mut rng, fit.len(), bs).into_vec();
            let xb = rows(&xf, &pick);
            let yb = channel(&xb, &mut rng);
            match ascent_step(net, xb, yb, config.shuffles, step, &mut rng, opt) {
                Ok(_) => {}
                Err(e @ MiError::Diverged { .. }) => {
                    log::warn!("mi fit stopped ({e}); keeping the best checkpoint");
                    break 'fit;
                }
                Err(e) => return Err(e),
            }
            step += 1;
        }
        let scored = score(net, rng.random());
        log::debug!("mi fit step {step}: held-out {scored:?}");
        match scored {
            Ok(e) if e.0 > best.0 => {
                best = e;
                best_params = net.params.clone();
            }
            Ok(_) => {}
            Err(MiError::Diverged { .. }) => {
                log::warn!("mi fit score diverged at step {step}; keeping the best checkpoint");
                break;
            }
            Err(e) => return Err(e),
        }
    }
    net.params = best_params;
    Ok(best)
}
