//! Arithmetic in GF(2^m) via exp/log tables.

/// x³+x+1
pub const PRIM_GF8: u16 = 0b1011;
/// x⁴+x+1
pub const PRIM_GF16: u16 = 0b1_0011;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf {
    pub m: u32,
    pub prim: u16,
    exp: Vec<u8>,
    log: Vec<u8>,
}

impl Gf {
    /// Field defined by a primitive polynomial of degree `m` (2 ≤ m ≤ 8).
    pub fn new(m: u32, prim: u16) -> Self {
        assert!((2..=8).contains(&m), "GF(2^{m}) unsupported");
        let q = 1usize << m;
        let mut exp = vec![0u8; 2 * (q - 1)];
        let mut log = vec![0u8; q];
        let mut x: u16 = 1;
        for (i, e) in exp.iter_mut().enumerate().take(q - 1) {
            *e = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & (1 << m) != 0 {
                x ^= prim;
            }
            assert!(x != 1 || i == q - 2, "polynomial {prim:#b} is not primitive for m = {m}");
        }
        assert_eq!(x, 1, "polynomial {prim:#b} is not primitive for m = {m}");
        for i in q - 1..2 * (q - 1) {
            exp[i] = exp[i - (q - 1)];
        }
        Self { m, prim, exp, log }
    }

    pub fn gf8() -> Self {
        Self::new(3, PRIM_GF8)
    }

    pub fn gf16() -> Self {
        Self::new(4, PRIM_GF16)
    }

    /// Field size `2^m`.
    pub fn size(&self) -> usize {
        1 << self.m
    }

    /// Multiplicative group order `2^m − 1`.
    pub fn order(&self) -> usize {
        self.size() - 1
    }

    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
        }
    }

    pub fn inv(&self, a: u8) -> u8 {
        assert!(a != 0, "zero has no inverse");
        self.exp[self.order() - self.log[a as usize] as usize]
    }

    pub fn div(&self, a: u8, b: u8) -> u8 {
        self.mul(a, self.inv(b))
    }

    /// `α^i` for any integer `i`.
    pub fn alpha_pow(&self, i: i64) -> u8 {
        let o = self.order() as i64;
        self.exp[i.rem_euclid(o) as usize]
    }

    pub fn log(&self, a: u8) -> usize {
        assert!(a != 0, "log of zero");
        self.log[a as usize] as usize
    }

    /// Evaluate a polynomial with coefficients highest degree first.
    pub fn eval_be(&self, poly: &[u8], x: u8) -> u8 {
        poly.iter().fold(0, |acc, &c| self.mul(acc, x) ^ c)
    }

    /// Evaluate a polynomial with coefficients lowest degree first.
    pub fn eval_le(&self, poly: &[u8], x: u8) -> u8 {
        poly.iter().rev().fold(0, |acc, &c| self.mul(acc, x) ^ c)
    }
}
