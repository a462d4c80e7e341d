use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semcom_core::channel::ChannelConfig;
use semcom_core::classic::{
    baseline_transmit, bits_to_symbols, fixed5, symbols_to_bits, HuffmanCode, RsCode, RsOutcome, SourceCoder, Symbol,
};

fn entropy_and_length(code: &HuffmanCode, freqs: &BTreeMap<char, u64>) -> (f64, f64) {
    let total: u64 = freqs.values().sum();
    freqs.iter().fold((0.0, 0.0), |(h, l), (&c, &f)| {
        let p = f as f64 / total as f64;
        (h - p * p.log2(), l + p * code.codeword(Symbol::Char(c)).unwrap().len() as f64)
    })
}

fn freq_table() -> impl Strategy<Value = BTreeMap<char, u64>> {
    prop::collection::btree_map(prop::char::range('a', 'z'), 1u64..500, 2..26)
}

proptest! {
    #[test]
    fn huffman_length_within_one_bit_of_entropy(freqs in freq_table()) {
        let code = HuffmanCode::build(&freqs).unwrap();
        let (h, l) = entropy_and_length(&code, &freqs);
        prop_assert!(h <= l + 1e-12 && l < h + 1.0, "H {h} L {l}");
        prop_assert!((code.mean_length(&freqs) - l).abs() < 1e-9);
    }

    #[test]
    fn huffman_kraft_equality(freqs in freq_table()) {
        let code = HuffmanCode::build(&freqs).unwrap();
        let kraft: f64 = code.lengths().values().map(|&n| 0.5f64.powi(n as i32)).sum();
        prop_assert!((kraft - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huffman_roundtrip(freqs in freq_table(), picks in prop::collection::vec(any::<prop::sample::Index>(), 0..200)) {
        let code = HuffmanCode::build(&freqs).unwrap();
        let alphabet: Vec<char> = freqs.keys().copied().collect();
        let text: String = picks.iter().map(|i| alphabet[i.index(alphabet.len())]).collect();
        let (bits, esc) = code.encode(&text).unwrap();
        prop_assert_eq!(esc, 0);
        prop_assert_eq!(code.decode(&bits), text);
    }

    #[test]
    fn rs_corrects_any_single_error_gf16(msg in prop::collection::vec(0u8..16, 7), pos in 0usize..9, e in 1u8..16) {
        let code = RsCode::rs_9_7();
        let cw = code.encode(&msg);
        prop_assert_eq!(&cw[..7], &msg[..]);
        let mut r = cw.clone();
        r[pos] ^= e;
        let d = code.decode(&r);
        prop_assert_eq!(d.outcome, RsOutcome::Corrected(1));
        prop_assert_eq!(d.codeword, cw);
    }

    #[test]
    fn rs_never_accepts_two_errors_as_clean(msg in prop::collection::vec(0u8..16, 7), p0 in 0usize..9, gap in 1usize..9, e0 in 1u8..16, e1 in 1u8..16) {
        let code = RsCode::rs_9_7();
        let mut r = code.encode(&msg);
        r[p0] ^= e0;
        r[(p0 + gap) % 9] ^= e1;
        prop_assert_ne!(code.decode(&r).outcome, RsOutcome::Corrected(0));
    }

    #[test]
    fn rs_stream_roundtrip(symbols in prop::collection::vec(0u8..8, 0..60)) {
        let code = RsCode::rs_7_5();
        let coded = code.encode_stream(&symbols);
        prop_assert_eq!(coded.len() % 7, 0);
        let (back, failed) = code.decode_stream(&coded);
        prop_assert_eq!(failed, 0);
        prop_assert_eq!(&back[..symbols.len()], &symbols[..]);
    }

    #[test]
    fn bit_packing_roundtrip(bits in prop::collection::vec(any::<bool>(), 0..100), m in 3u32..=4) {
        let s = bits_to_symbols(&bits, m);
        let back = symbols_to_bits(&s, m);
        prop_assert_eq!(&back[..bits.len()], &bits[..]);
        prop_assert!(back[bits.len()..].iter().all(|&b| !b));
    }

    #[test]
    fn fixed5_roundtrip(text in "[a-z ]{0,40}") {
        let (bits, esc) = fixed5::encode(&text);
        prop_assert_eq!(esc, 0);
        prop_assert_eq!(bits.len(), 5 * text.chars().count());
        prop_assert_eq!(fixed5::decode(&bits), text);
    }

    #[test]
    fn noiseless_chain_is_lossless(text in "[a-z]{1,8}( [a-z]{1,8}){0,10}") {
        let mut freqs = BTreeMap::new();
        for c in "abcdefghijklmnopqrstuvwxyz ".chars() {
            freqs.insert(c, 1 + c as u64 % 7);
        }
        let coder = SourceCoder::Huffman(HuffmanCode::build_with_escape(&freqs).unwrap());
        for code in [RsCode::rs_7_5(), RsCode::rs_9_7()] {
            let out = baseline_transmit(&text, &coder, &code, &ChannelConfig::noiseless(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            prop_assert_eq!(&out.text, &text);
            prop_assert_eq!(out.symbol_errors, 0);
        }
    }
}

#[test]
fn rs_7_5_exhaustive_single_errors() {
    let code = RsCode::rs_7_5();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let msg: Vec<u8> = (0..5).map(|_| rand::Rng::random_range(&mut rng, 0..8)).collect();
        let cw = code.encode(&msg);
        for pos in 0..7 {
            for e in 1..8 {
                let mut r = cw.clone();
                r[pos] ^= e;
                let d = code.decode(&r);
                assert!(d.is_ok() && d.codeword == cw, "pos {pos} value {e}");
            }
        }
    }
}
