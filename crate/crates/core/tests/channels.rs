use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semcom_core::channel::{self, ChannelConfig, ComplexSymbolBlock, Realization};
use semcom_core::classic::qam;
use semcom_core::tensor::{Graph, Tensor};

fn unit_block(n: usize, rng: &mut ChaCha8Rng) -> ComplexSymbolBlock<f64> {
    let mut b = ComplexSymbolBlock::zeros(1, n, 1);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        b.re[i] = if rng.random() { a } else { -a };
        b.im[i] = if rng.random() { a } else { -a };
    }
    b
}

#[test]
fn awgn_noise_power_matches_snr() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = unit_block(200_000, &mut rng);
    for snr in [0.0, 10.0, 20.0] {
        let y = channel::awgn(&x, snr, &mut rng);
        let noise: f64 = x
            .re
            .iter()
            .zip(&y.re)
            .chain(x.im.iter().zip(&y.im))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 200_000.0;
        let emp = 10.0 * (1.0 / noise).log10();
        assert!((emp - snr).abs() < 0.1, "{snr} dB measured {emp}");
    }
}

#[test]
fn rician_gain_has_unit_mean_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in [0.5, 2.0, 10.0] {
        let n = 100_000;
        let p: f64 = (0..n)
            .map(|_| {
                let (a, b) = channel::rician_gain(k, &mut rng);
                a * a + b * b
            })
            .sum::<f64>()
            / n as f64;
        assert!((p - 1.0).abs() < 0.02, "K={k}: E|h|² = {p}");
    }
}

#[test]
fn uncoded_qam_ser_tracks_theory() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 50_000;
    let bits: Vec<bool> = (0..n * 6).map(|_| rng.random()).collect();
    let pts = qam::modulate(&bits);
    let mut x = ComplexSymbolBlock::<f64>::zeros(1, n, 1);
    for (i, &(a, b)) in pts.iter().enumerate() {
        x.re[i] = a;
        x.im[i] = b;
    }
    assert!((x.power() - 1.0).abs() < 0.02);
    let y = channel::awgn(&x, 16.0, &mut rng);
    let rx: Vec<(f64, f64)> = y.re.iter().zip(&y.im).map(|(&a, &b)| (a, b)).collect();
    let errs = qam::demodulate(&rx).chunks(6).zip(bits.chunks(6)).filter(|(a, b)| a != b).count();
    let ser = errs as f64 / n as f64;
    let th = qam::ser_theory(16.0);
    assert!((ser - th).abs() / th < 0.08, "{ser} vs {th}");
}

proptest! {
    #[test]
    fn graph_channel_matches_data_channel(seed in any::<u64>(), kind in 0usize..3, b in 1usize..3, l in 1usize..4, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = match kind {
            0 => ChannelConfig::awgn(6.0),
            1 => ChannelConfig::erasure(0.4),
            _ => ChannelConfig::rician(2.0, 6.0),
        };
        let x = Tensor::<f64>::from_fn(&[b, l, 2 * n], |_| rng.random_range(-1.0..1.0));
        let r = Realization::sample(&cfg, b, l, n, &mut rng);
        let plain = channel::apply(&ComplexSymbolBlock::from_tensor(&x).unwrap(), &r).to_tensor();
        let mut g = Graph::new(0);
        let xv = g.input(x, true);
        let yv = channel::apply_graph(&mut g, xv, &r).unwrap();
        for (a, c) in g.value(yv).data().iter().zip(plain.data()) {
            prop_assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn erasure_zeroes_whole_complex_symbols(seed in any::<u64>(), p in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = unit_block(64, &mut rng);
        let y = channel::erasure(&x, p, &mut rng);
        for i in 0..64 {
            let gone = y.re[i] == 0.0;
            prop_assert_eq!(gone, y.im[i] == 0.0);
            if !gone {
                prop_assert_eq!((y.re[i], y.im[i]), (x.re[i], x.im[i]));
            }
        }
    }
}
