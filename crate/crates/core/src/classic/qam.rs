//! Gray-mapped 64-QAM with hard minimum-distance demodulation.
//!
//! Each symbol carries 6 bits: the first 3 select the in-phase level, the last
//! 3 the quadrature level, both through the same per-axis Gray table and scaled
//! by `1/√42` for unit average power.
//!
//! | bits | 000 | 001 | 011 | 010 | 110 | 111 | 101 | 100 |
//! |------|-----|-----|-----|-----|-----|-----|-----|-----|
//! | level | −7 | −5 | −3 | −1 | +1 | +3 | +5 | +7 |

pub const BITS_PER_SYMBOL: usize = 6;

fn scale() -> f64 {
    42f64.sqrt().recip()
}

/// Amplitude (before scaling) of a 3-bit Gray label.
pub fn level_of(label: u8) -> f64 {
    // inverse Gray code
    let mut i = label;
    let mut s = label >> 1;
    while s != 0 {
        i ^= s;
        s >>= 1;
    }
    (2 * i as i32 - 7) as f64
}

fn label_of(amplitude: f64) -> u8 {
    let i = ((amplitude + 7.0) / 2.0).round().clamp(0.0, 7.0) as u8;
    i ^ (i >> 1)
}

fn take3(bits: &[bool]) -> u8 {
    bits.iter().fold(0u8, |a, &b| (a << 1) | u8::from(b))
}

/// Complex points `(re, im)`; the bit string is zero-padded to a multiple of 6.
pub fn modulate(bits: &[bool]) -> Vec<(f64, f64)> {
    let s = scale();
    bits.chunks(BITS_PER_SYMBOL)
        .map(|ch| {
            let mut b = [false; 6];
            b[..ch.len()].copy_from_slice(ch);
            (level_of(take3(&b[..3])) * s, level_of(take3(&b[3..])) * s)
        })
        .collect()
}

pub fn demodulate(points: &[(f64, f64)]) -> Vec<bool> {
    let inv = 42f64.sqrt();
    points
        .iter()
        .flat_map(|&(re, im)| {
            let (a, b) = (label_of(re * inv), label_of(im * inv));
            (0..3).rev().map(move |i| (a >> i) & 1 == 1).chain((0..3).rev().map(move |i| (b >> i) & 1 == 1))
        })
        .collect()
}

/// Gaussian tail `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Symbol error rate of square 64-QAM on AWGN at `Es/N0 = snr_db`.
pub fn ser_theory(snr_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db / 10.0);
    let m = 64f64;
    let p = 2.0 * (1.0 - 1.0 / m.sqrt()) * q_function((3.0 * snr / (m - 1.0)).sqrt());
    1.0 - (1.0 - p) * (1.0 - p)
}
