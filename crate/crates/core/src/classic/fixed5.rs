//! Fixed-length 5-bit character code.
//!
//! | chars | values |
//! |-------|--------|
//! | `a`–`z` | 0–25 |
//! | space | 26 |
//! | `.` `,` `'` `-` | 27–30 |
//! | ESC | 31 |

pub const ESC: u8 = 31;
const PUNCT: [char; 4] = ['.', ',', '\'', '-'];

fn value(c: char) -> Option<u8> {
    match c {
        'a'..='z' => Some(c as u8 - b'a'),
        ' ' => Some(26),
        _ => PUNCT.iter().position(|&p| p == c).map(|i| 27 + i as u8),
    }
}

fn char_of(v: u8) -> char {
    match v {
        0..=25 => (b'a' + v) as char,
        26 => ' ',
        27..=30 => PUNCT[(v - 27) as usize],
        _ => char::REPLACEMENT_CHARACTER,
    }
}

/// 5 bits per character (MSB first) and the number of ESC substitutions.
pub fn encode(text: &str) -> (Vec<bool>, usize) {
    let mut bits = Vec::with_capacity(5 * text.len());
    let mut esc = 0;
    for c in text.chars() {
        let v = value(c).unwrap_or_else(|| {
            esc += 1;
            ESC
        });
        bits.extend((0..5).rev().map(|i| (v >> i) & 1 == 1));
    }
    (bits, esc)
}

/// Inverse of [`encode`]; trailing bits short of a full character are ignored. ESC decodes to U+FFFD.
pub fn decode(bits: &[bool]) -> String {
    bits.chunks_exact(5)
        .map(|ch| char_of(ch.iter().fold(0u8, |a, &b| (a << 1) | u8::from(b))))
        .collect()
}
