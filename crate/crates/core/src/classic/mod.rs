//! Conventional separate source/channel coding chain:
//! text → Huffman or 5-bit code → Reed–Solomon → Gray 64-QAM → channel →
//! hard demodulation → RS decoding → source decoding.
//!
//! The receiver is told the source bit count, so padding is stripped exactly.

pub mod fixed5;
pub mod gf;
pub mod huffman;
pub mod qam;
pub mod rs;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelConfig, ComplexSymbolBlock, Realization};
pub use gf::Gf;
pub use huffman::{char_frequencies, HuffmanCode, Symbol};
pub use rs::{bits_to_symbols, symbols_to_bits, RsCode, RsDecoded, RsOutcome};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ClassicError {
    #[error("RS({n},{k}) is not a valid code over GF(2^{m})")]
    RsParams { n: usize, k: usize, m: u32 },
    #[error("Huffman code needs at least one symbol with positive frequency")]
    EmptyAlphabet,
    #[error("character {0:?} is outside the code alphabet and the code has no escape")]
    Unencodable(char),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Huffman,
    Fixed5,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceCoder {
    Huffman(HuffmanCode),
    Fixed5,
}

impl SourceCoder {
    pub fn encode(&self, text: &str) -> Result<(Vec<bool>, usize), ClassicError> {
        match self {
            SourceCoder::Huffman(h) => h.encode(text),
            SourceCoder::Fixed5 => Ok(fixed5::encode(text)),
        }
    }

    pub fn decode(&self, bits: &[bool]) -> String {
        match self {
            SourceCoder::Huffman(h) => h.decode(bits),
            SourceCoder::Fixed5 => fixed5::decode(bits),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOutcome {
    pub text: String,
    /// Complex channel symbols used.
    pub symbols: usize,
    pub source_bits: usize,
    pub coded_bits: usize,
    pub failed_blocks: usize,
    /// 64-QAM symbols demodulated to a different label.
    pub symbol_errors: usize,
    pub escapes: usize,
}

/// Send one sentence through the whole conventional chain.
pub fn baseline_transmit<R: Rng + ?Sized>(
    text: &str,
    source: &SourceCoder,
    code: &RsCode,
    channel_cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<BaselineOutcome, ClassicError> {
    let m = code.gf.m;
    let (bits, escapes) = source.encode(text)?;
    let coded = code.encode_stream(&bits_to_symbols(&bits, m));
    let coded_bits = symbols_to_bits(&coded, m);
    let points = qam::modulate(&coded_bits);
    let mut block = ComplexSymbolBlock::<f64>::zeros(1, points.len().max(1), 1);
    for (i, &(re, im)) in points.iter().enumerate() {
        block.re[i] = re;
        block.im[i] = im;
    }
    let r = Realization::sample(channel_cfg, 1, block.len, 1, rng);
    let rx = channel::apply(&block, &r);
    let rx_points: Vec<(f64, f64)> = rx.re.iter().zip(&rx.im).take(points.len()).map(|(&a, &b)| (a, b)).collect();
    let rx_bits = qam::demodulate(&rx_points);
    let tx_padded = qam::demodulate(&points);
    let symbol_errors = tx_padded
        .chunks(qam::BITS_PER_SYMBOL)
        .zip(rx_bits.chunks(qam::BITS_PER_SYMBOL))
        .filter(|(a, b)| a != b)
        .count();
    let rx_symbols = bits_to_symbols(&rx_bits[..coded_bits.len()], m);
    let (msg, failed_blocks) = code.decode_stream(&rx_symbols);
    let msg_bits = symbols_to_bits(&msg, m);
    let text_out = source.decode(&msg_bits[..bits.len()]);
    Ok(BaselineOutcome {
        text: text_out,
        symbols: points.len(),
        source_bits: bits.len(),
        coded_bits: coded_bits.len(),
        failed_blocks,
        symbol_errors,
        escapes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_chain_is_exact() {
        let text = "the commission must support the proposal";
        let h = HuffmanCode::build_with_escape(&char_frequencies([text])).unwrap();
        for src in [SourceCoder::Huffman(h), SourceCoder::Fixed5] {
            for code in [RsCode::rs_7_5(), RsCode::rs_9_7()] {
                let out =
                    baseline_transmit(text, &src, &code, &ChannelConfig::noiseless(), &mut ChaCha8Rng::seed_from_u64(0))
                        .unwrap();
                assert_eq!(out.text, text);
                assert_eq!(out.failed_blocks, 0);
                assert_eq!(out.symbol_errors, 0);
            }
        }
    }

    #[test]
    fn symbol_count_arithmetic() {
        let text = "abcdefg";
        let out = baseline_transmit(
            text,
            &SourceCoder::Fixed5,
            &RsCode::rs_7_5(),
            &ChannelConfig::noiseless(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        // 35 bits → 12 GF(8) symbols → 3 blocks of 7 → 63 bits → 11 QAM symbols
        assert_eq!(out.source_bits, 35);
        assert_eq!(out.coded_bits, 63);
        assert_eq!(out.symbols, 11);
    }
}
