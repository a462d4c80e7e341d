//! Systematic Reed–Solomon codes over GF(2^m), shortened lengths allowed.
//!
//! Codewords are `[message (k) | parity (n−k)]`, read as a polynomial with the
//! first symbol at the highest degree. The generator has roots `α¹ … α^(n−k)`.
//! Decoding: syndromes → Berlekamp–Massey → Chien search → Forney, followed by
//! a syndrome re-check.

use super::gf::Gf;
use super::ClassicError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RsOutcome {
    /// Codeword accepted after fixing this many symbols.
    Corrected(usize),
    /// Too many errors detected; the message part is returned as received.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RsDecoded {
    pub codeword: Vec<u8>,
    pub outcome: RsOutcome,
}

impl RsDecoded {
    pub fn is_ok(&self) -> bool {
        matches!(self.outcome, RsOutcome::Corrected(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RsCode {
    pub gf: Gf,
    pub n: usize,
    pub k: usize,
    /// Generator coefficients, highest degree first (monic).
    pub generator: Vec<u8>,
}

impl RsCode {
    pub fn new(gf: Gf, n: usize, k: usize) -> Result<Self, ClassicError> {
        if k == 0 || k >= n || n > gf.order() {
            return Err(ClassicError::RsParams { n, k, m: gf.m });
        }
        let mut g = vec![1u8];
        for j in 1..=(n - k) {
            let a = gf.alpha_pow(j as i64);
            let mut next = vec![0u8; g.len() + 1];
            for (i, &c) in g.iter().enumerate() {
                next[i] ^= c;
                next[i + 1] ^= gf.mul(c, a);
            }
            g = next;
        }
        Ok(Self { gf, n, k, generator: g })
    }

    /// RS(7,5) over GF(8).
    pub fn rs_7_5() -> Self {
        Self::new(Gf::gf8(), 7, 5).expect("valid parameters")
    }

    /// RS(9,7) shortened over GF(16).
    pub fn rs_9_7() -> Self {
        Self::new(Gf::gf16(), 9, 7).expect("valid parameters")
    }

    /// Correctable symbol errors `⌊(n−k)/2⌋`.
    pub fn t(&self) -> usize {
        (self.n - self.k) / 2
    }

    pub fn encode(&self, msg: &[u8]) -> Vec<u8> {
        assert_eq!(msg.len(), self.k, "message must hold k symbols");
        let nk = self.n - self.k;
        let mut buf = msg.to_vec();
        buf.resize(self.n, 0);
        for i in 0..self.k {
            let c = buf[i];
            if c != 0 {
                for j in 1..=nk {
                    buf[i + j] ^= self.gf.mul(self.generator[j], c);
                }
            }
        }
        let mut cw = msg.to_vec();
        cw.extend_from_slice(&buf[self.k..]);
        cw
    }

    pub fn syndromes(&self, r: &[u8]) -> Vec<u8> {
        (1..=(self.n - self.k))
            .map(|j| self.gf.eval_be(r, self.gf.alpha_pow(j as i64)))
            .collect()
    }

    pub fn decode(&self, received: &[u8]) -> RsDecoded {
        assert_eq!(received.len(), self.n, "received word must hold n symbols");
        let f = &self.gf;
        let s = self.syndromes(received);
        if s.iter().all(|&x| x == 0) {
            return RsDecoded {
                codeword: received.to_vec(),
                outcome: RsOutcome::Corrected(0),
            };
        }
        let failed = || RsDecoded {
            codeword: received.to_vec(),
            outcome: RsOutcome::Failed,
        };

        // Berlekamp–Massey, connection polynomial lowest degree first
        let mut c = vec![1u8];
        let mut b = vec![1u8];
        let (mut l, mut m, mut bd) = (0usize, 1usize, 1u8);
        for r in 0..s.len() {
            let mut d = s[r];
            for i in 1..=l.min(c.len() - 1) {
                d ^= f.mul(c[i], s[r - i]);
            }
            if d == 0 {
                m += 1;
                continue;
            }
            let coef = f.div(d, bd);
            let mut next = c.clone();
            if next.len() < b.len() + m {
                next.resize(b.len() + m, 0);
            }
            for (i, &bv) in b.iter().enumerate() {
                next[i + m] ^= f.mul(coef, bv);
            }
            if 2 * l <= r {
                b = c;
                l = r + 1 - l;
                bd = d;
                m = 1;
            } else {
                m += 1;
            }
            c = next;
        }
        while c.len() > 1 && *c.last().unwrap() == 0 {
            c.pop();
        }
        if l > self.t() || c.len() - 1 != l {
            return failed();
        }

        // Chien search over the (possibly shortened) positions
        let mut positions = Vec::new();
        for i in 0..self.n {
            let p = (self.n - 1 - i) as i64;
            if f.eval_le(&c, f.alpha_pow(-p)) == 0 {
                positions.push(i);
            }
        }
        if positions.len() != l {
            return failed();
        }

        // Forney with first consecutive root α¹
        let two_t = s.len();
        let mut omega = vec![0u8; two_t];
        for (i, &sv) in s.iter().enumerate() {
            for (j, &cv) in c.iter().enumerate() {
                if i + j < two_t {
                    omega[i + j] ^= f.mul(sv, cv);
                }
            }
        }
        let deriv: Vec<u8> = (1..c.len()).map(|i| if i % 2 == 1 { c[i] } else { 0 }).collect();
        let mut cw = received.to_vec();
        for &i in &positions {
            let xinv = f.alpha_pow(-((self.n - 1 - i) as i64));
            let den = f.eval_le(&deriv, xinv);
            if den == 0 {
                return failed();
            }
            cw[i] ^= f.div(f.eval_le(&omega, xinv), den);
        }
        if self.syndromes(&cw).iter().any(|&x| x != 0) {
            return failed();
        }
        RsDecoded {
            codeword: cw,
            outcome: RsOutcome::Corrected(l),
        }
    }

    /// Encode a symbol stream block by block; the last block is zero-padded to `k`.
    pub fn encode_stream(&self, symbols: &[u8]) -> Vec<u8> {
        symbols
            .chunks(self.k)
            .flat_map(|ch| {
                let mut m = ch.to_vec();
                m.resize(self.k, 0);
                self.encode(&m)
            })
            .collect()
    }

    /// Decode a stream of whole codewords. Returns the message symbols and the number of failed blocks.
    pub fn decode_stream(&self, coded: &[u8]) -> (Vec<u8>, usize) {
        let mut out = Vec::with_capacity(coded.len() / self.n * self.k);
        let mut failures = 0;
        for ch in coded.chunks(self.n) {
            let mut r = ch.to_vec();
            r.resize(self.n, 0);
            let d = self.decode(&r);
            if !d.is_ok() {
                failures += 1;
            }
            out.extend_from_slice(&d.codeword[..self.k]);
        }
        (out, failures)
    }
}

/// Pack bits (MSB first) into `m`-bit symbols, zero-padding the tail.
pub fn bits_to_symbols(bits: &[bool], m: u32) -> Vec<u8> {
    bits.chunks(m as usize)
        .map(|ch| {
            let mut v = 0u8;
            for i in 0..m as usize {
                v = (v << 1) | u8::from(ch.get(i).copied().unwrap_or(false));
            }
            v
        })
        .collect()
}

pub fn symbols_to_bits(symbols: &[u8], m: u32) -> Vec<bool> {
    symbols
        .iter()
        .flat_map(|&s| (0..m).rev().map(move |i| (s >> i) & 1 == 1))
        .collect()
}
