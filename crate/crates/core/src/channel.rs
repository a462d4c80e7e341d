//! Physical channel models `Y = hX + N` acting on complex symbol blocks.
//!
//! Symbols travel as `[B, L, 2N]` real arrays with the real parts of the
//! `N` complex symbols first and the imaginary parts after them. The same
//! random realization can be applied to plain data ([`apply`]) or inside a
//! gradient graph ([`apply_graph`]); in the graph, noise, erasure masks and
//! fading gains are constants so gradients flow through `X` only.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::tensor::{Graph, Tensor, TensorError, Var};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    Erasure,
    Rician,
}

/// Channel selection. Only the fields of the selected kind are consulted:
/// `snr_db` for AWGN and Rician, `erasure_p` for erasure, `rician_k` for Rician.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// `f64::INFINITY` switches the noise off.
    pub snr_db: f64,
    pub erasure_p: f64,
    /// `f64::INFINITY` gives a pure line-of-sight gain of modulus 1.
    pub rician_k: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Awgn,
            snr_db: 12.0,
            erasure_p: 0.0,
            rician_k: 2.0,
        }
    }
}

impl ChannelConfig {
    pub fn awgn(snr_db: f64) -> Self {
        Self {
            kind: ChannelKind::Awgn,
            snr_db,
            ..Self::default()
        }
    }

    pub fn erasure(p: f64) -> Self {
        Self {
            kind: ChannelKind::Erasure,
            erasure_p: p,
            ..Self::default()
        }
    }

    pub fn rician(k: f64, snr_db: f64) -> Self {
        Self {
            kind: ChannelKind::Rician,
            rician_k: k,
            snr_db,
            ..Self::default()
        }
    }

    pub fn noiseless() -> Self {
        Self::awgn(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            ChannelKind::Erasure if !(0.0..=1.0).contains(&self.erasure_p) => {
                Err(format!("erasure_p must lie in [0, 1], got {}", self.erasure_p))
            }
            ChannelKind::Rician if !(self.rician_k >= 0.0) => {
                Err(format!("rician_k must be non-negative, got {}", self.rician_k))
            }
            ChannelKind::Awgn | ChannelKind::Rician if self.snr_db.is_nan() => Err("snr_db is NaN".into()),
            _ => Ok(()),
        }
    }
}

/// Noise variance per complex symbol at unit signal power: `10^(-snr/10)`.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Complex symbols `X` or `Y` as paired real arrays of shape `B × L × N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSymbolBlock<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
    pub batch: usize,
    pub len: usize,
    pub symbols: usize,
}

impl<T: Scalar> ComplexSymbolBlock<T> {
    pub fn zeros(batch: usize, len: usize, symbols: usize) -> Self {
        let n = batch * len * symbols;
        Self {
            re: vec![T::zero(); n],
            im: vec![T::zero(); n],
            batch,
            len,
            symbols,
        }
    }

    /// Split a `[B, L, 2N]` tensor laid out as `[re | im]` on the last axis.
    pub fn from_tensor(t: &Tensor<T>) -> Result<Self, TensorError> {
        let s = t.shape();
        if s.len() != 3 || !s[2].is_multiple_of(2) {
            return Err(TensorError::Invalid {
                op: "symbol_block",
                msg: format!("expected [B, L, 2N], got {s:?}"),
            });
        }
        let n = s[2] / 2;
        let mut b = Self::zeros(s[0], s[1], n);
        for (row, chunk) in t.data().chunks(2 * n).enumerate() {
            b.re[row * n..(row + 1) * n].copy_from_slice(&chunk[..n]);
            b.im[row * n..(row + 1) * n].copy_from_slice(&chunk[n..]);
        }
        Ok(b)
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        let n = self.symbols;
        let mut data = Vec::with_capacity(2 * self.re.len());
        for (r, i) in self.re.chunks(n).zip(self.im.chunks(n)) {
            data.extend_from_slice(r);
            data.extend_from_slice(i);
        }
        Tensor::new(vec![self.batch, self.len, 2 * n], data).expect("consistent block shape")
    }

    pub fn num_symbols(&self) -> usize {
        self.re.len()
    }

    /// Mean of `re² + im²`.
    pub fn power(&self) -> f64 {
        if self.re.is_empty() {
            return 0.0;
        }
        let s: f64 = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r.as_f64() * r.as_f64() + i.as_f64() * i.as_f64())
            .sum();
        s / self.re.len() as f64
    }

    /// Scale to unit average power. Returns `false` (and leaves zeros) for an all-zero block.
    pub fn normalize(&mut self) -> bool {
        let p = self.power();
        if p <= 0.0 || !p.is_finite() {
            self.re.iter_mut().chain(self.im.iter_mut()).for_each(|x| *x = T::zero());
            return false;
        }
        let s = T::lit(p.sqrt().recip());
        self.re.iter_mut().chain(self.im.iter_mut()).for_each(|x| *x = *x * s);
        true
    }
}

/// One random draw of the channel for a block of a given shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization<T> {
    /// Per-row complex gain `(re, im)`.
    pub gain: Option<Vec<(T, T)>>,
    /// Per-complex-symbol keep flag, `B·L·N` entries.
    pub keep: Option<Vec<bool>>,
    /// Noise in `[B, L, 2N]` layout.
    pub noise: Option<Vec<T>>,
}

fn gaussian_noise<T: Scalar, R: Rng + ?Sized>(n: usize, var_per_complex: f64, rng: &mut R) -> Option<Vec<T>> {
    if var_per_complex == 0.0 {
        return None;
    }
    let sd = (var_per_complex / 2.0).sqrt();
    Some(
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z * sd)
            })
            .collect(),
    )
}

/// Rician gain with K-factor `k`: LoS mean `√(K/(K+1))` plus circular scatter of variance `1/(K+1)`.
pub fn rician_gain<R: Rng + ?Sized>(k: f64, rng: &mut R) -> (f64, f64) {
    if k == f64::INFINITY {
        return (1.0, 0.0);
    }
    let los = (k / (k + 1.0)).sqrt();
    let sd = (1.0 / (2.0 * (k + 1.0))).sqrt();
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    (los + sd * a, sd * b)
}

impl<T: Scalar> Realization<T> {
    /// Draw noise, erasures or gains for a `[batch, len, 2·symbols]` block.
    pub fn sample<R: Rng + ?Sized>(
        config: &ChannelConfig,
        batch: usize,
        len: usize,
        symbols: usize,
        rng: &mut R,
    ) -> Self {
        let n_real = batch * len * 2 * symbols;
        match config.kind {
            ChannelKind::Awgn => Self {
                gain: None,
                keep: None,
                noise: gaussian_noise(n_real, noise_variance(config.snr_db), rng),
            },
            ChannelKind::Erasure => {
                let p = config.erasure_p.clamp(0.0, 1.0);
                let d = Bernoulli::new(p).expect("probability in [0, 1]");
                Self {
                    gain: None,
                    keep: Some((0..batch * len * symbols).map(|_| !d.sample(rng)).collect()),
                    noise: None,
                }
            }
            ChannelKind::Rician => {
                let gain = (0..batch)
                    .map(|_| {
                        let (a, b) = rician_gain(config.rician_k, rng);
                        (T::lit(a), T::lit(b))
                    })
                    .collect();
                Self {
                    gain: Some(gain),
                    keep: None,
                    noise: gaussian_noise(n_real, noise_variance(config.snr_db), rng),
                }
            }
        }
    }

    /// Full-size multiplier tensors for the gain: `(h_re, h_im)` each `[B, L, N]` broadcast per row.
    fn gain_planes(&self, batch: usize, len: usize, symbols: usize) -> Option<(Vec<T>, Vec<T>)> {
        self.gain.as_ref().map(|g| {
            let per_row = len * symbols;
            let hr = (0..batch * per_row).map(|i| g[i / per_row].0).collect();
            let hi = (0..batch * per_row).map(|i| g[i / per_row].1).collect();
            (hr, hi)
        })
    }
}

/// Pass a block through a realization.
pub fn apply<T: Scalar>(x: &ComplexSymbolBlock<T>, r: &Realization<T>) -> ComplexSymbolBlock<T> {
    let mut y = x.clone();
    let n = x.symbols;
    if let Some(g) = &r.gain {
        let per_row = x.len * n;
        for i in 0..y.re.len() {
            let (hr, hi) = g[i / per_row];
            let (a, b) = (x.re[i], x.im[i]);
            y.re[i] = hr * a - hi * b;
            y.im[i] = hr * b + hi * a;
        }
    }
    if let Some(keep) = &r.keep {
        for (i, &k) in keep.iter().enumerate() {
            if !k {
                y.re[i] = T::zero();
                y.im[i] = T::zero();
            }
        }
    }
    if let Some(noise) = &r.noise {
        for (pos, ch) in noise.chunks(2 * n).enumerate() {
            for s in 0..n {
                y.re[pos * n + s] = y.re[pos * n + s] + ch[s];
                y.im[pos * n + s] = y.im[pos * n + s] + ch[n + s];
            }
        }
    }
    y
}

/// Same as [`apply`] on a graph node of shape `[B, L, 2N]`.
pub fn apply_graph<T: Scalar>(g: &mut Graph<T>, x: Var, r: &Realization<T>) -> Result<Var, TensorError> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 || !shape[2].is_multiple_of(2) {
        return Err(TensorError::Invalid {
            op: "channel",
            msg: format!("expected [B, L, 2N], got {shape:?}"),
        });
    }
    let (b, l, n) = (shape[0], shape[1], shape[2] / 2);
    let mut y = x;
    if let Some((hr, hi)) = r.gain_planes(b, l, n) {
        let half = vec![b, l, n];
        let xr = g.narrow(y, 2, 0, n)?;
        let xi = g.narrow(y, 2, n, n)?;
        let hr = g.constant(Tensor::new(half.clone(), hr)?);
        let hi = g.constant(Tensor::new(half, hi)?);
        let a = g.mul(xr, hr)?;
        let c = g.mul(xi, hi)?;
        let re = g.sub(a, c)?;
        let a = g.mul(xi, hr)?;
        let c = g.mul(xr, hi)?;
        let im = g.add(a, c)?;
        y = g.concat(&[re, im], 2)?;
    }
    if let Some(keep) = &r.keep {
        let mut m = Vec::with_capacity(b * l * 2 * n);
        for pos in keep.chunks(n) {
            for _ in 0..2 {
                m.extend(pos.iter().map(|&k| if k { T::one() } else { T::zero() }));
            }
        }
        let m = g.constant(Tensor::new(shape.clone(), m)?);
        y = g.mul(y, m)?;
    }
    if let Some(noise) = &r.noise {
        let nz = g.constant(Tensor::new(shape, noise.clone())?);
        y = g.add(y, nz)?;
    }
    Ok(y)
}

/// `Y = X + N` with per-complex-symbol noise variance `10^(-snr/10)`.
pub fn awgn<T: Scalar, R: Rng + ?Sized>(x: &ComplexSymbolBlock<T>, snr_db: f64, rng: &mut R) -> ComplexSymbolBlock<T> {
    let r = Realization::sample(&ChannelConfig::awgn(snr_db), x.batch, x.len, x.symbols, rng);
    apply(x, &r)
}

/// Zero each complex symbol independently with probability `p`.
pub fn erasure<T: Scalar, R: Rng + ?Sized>(x: &ComplexSymbolBlock<T>, p: f64, rng: &mut R) -> ComplexSymbolBlock<T> {
    let r = Realization::sample(&ChannelConfig::erasure(p), x.batch, x.len, x.symbols, rng);
    apply(x, &r)
}

/// `Y = hX + N` with one Rician gain per row; the gains are returned for diagnostics.
pub fn rician<T: Scalar, R: Rng + ?Sized>(
    x: &ComplexSymbolBlock<T>,
    k_factor: f64,
    snr_db: f64,
    rng: &mut R,
) -> (ComplexSymbolBlock<T>, Vec<(T, T)>) {
    let r = Realization::sample(&ChannelConfig::rician(k_factor, snr_db), x.batch, x.len, x.symbols, rng);
    let y = apply(x, &r);
    (y, r.gain.unwrap_or_default())
}

/// Data-level dispatch on the configured kind.
pub fn transmit<T: Scalar, R: Rng + ?Sized>(
    x: &ComplexSymbolBlock<T>,
    config: &ChannelConfig,
    rng: &mut R,
) -> ComplexSymbolBlock<T> {
    let r = Realization::sample(config, x.batch, x.len, x.symbols, rng);
    apply(x, &r)
}
