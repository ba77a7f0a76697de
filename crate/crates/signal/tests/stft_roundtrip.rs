//! Analysis/synthesis fidelity and framing laws.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rasc_signal::{istft, stft, Spectrogram, StftConfig, WindowKind};

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-0.9..0.9)).collect()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    (num / den.max(1e-30)).sqrt()
}

#[test]
fn one_second_roundtrip_is_tight() {
    let cfg = StftConfig::default();
    let x = noise(16_000, 1);
    let back = istft(&stft(&x, &cfg).unwrap()).unwrap();
    assert_eq!(back.len(), x.len());
    let err = rel_l2(&x, &back);
    assert!(err < 1e-6, "relative L2 {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Round trip holds for ragged lengths, not only hop multiples.
    #[test]
    fn roundtrip_arbitrary_lengths(len in 2048usize..9000, seed in 0u64..u64::MAX) {
        let cfg = StftConfig::default();
        let x = noise(len, seed);
        let back = istft(&stft(&x, &cfg).unwrap()).unwrap();
        prop_assert_eq!(back.len(), len);
        prop_assert!(rel_l2(&x, &back) < 1e-6);
    }

    /// Centered framing always yields ceil(len / hop) frames.
    #[test]
    fn frame_count_law(len in 1usize..6000) {
        let cfg = StftConfig::default();
        let spec = stft(&noise(len, 3), &cfg).unwrap();
        prop_assert_eq!(spec.n_frames, len.div_ceil(cfg.hop));
    }
}

#[test]
fn zero_clip_gives_zero_spectrogram() {
    let cfg = StftConfig::default();
    let spec = stft(&vec![0.0; 4000], &cfg).unwrap();
    assert!(spec.re.iter().chain(&spec.im).all(|&v| v == 0.0));
}

#[test]
fn bin_centered_sine_concentrates_energy() {
    let cfg = StftConfig::default();
    let sr = 16_000.0;
    let k = 16; // 500 Hz: exactly bin k of a 512-point transform at 16 kHz
    let f = k as f64 * sr / cfg.n_fft as f64;
    let x: Vec<f64> = (0..16_000)
        .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / sr).sin())
        .collect();
    let spec = stft(&x, &cfg).unwrap();

    // interior frame, away from the reflected edges
    let t = spec.n_frames / 2;
    let energies: Vec<f64> = (0..spec.f_bins).map(|ff| spec.magnitude_sq(ff, t)).collect();
    let total: f64 = energies.iter().sum();
    let argmax = energies
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(argmax, k);
    // Hann main lobe: the center bin holds 2/3 of the frame energy
    assert!(energies[k] / total > 0.6, "share {}", energies[k] / total);
}

#[test]
fn bad_configs_are_rejected_at_construction() {
    // hop beyond the window leaves unreconstructable gaps
    assert!(StftConfig::new(512, 600, WindowKind::Hann, true).is_err());
    // Hann at hop = n_fft: envelope touches zero at frame boundaries
    assert!(StftConfig::new(512, 512, WindowKind::Hann, true).is_err());
    // odd transform sizes don't split into symmetric half-spectra
    assert!(StftConfig::new(511, 160, WindowKind::Hann, true).is_err());
    // centered padding needs an even n_fft - hop
    assert!(StftConfig::new(512, 161, WindowKind::Hann, true).is_err());
    assert!(StftConfig::new(512, 160, WindowKind::Hann, true).is_ok());
}

#[test]
fn tensor_roundtrip_preserves_spectrogram() {
    let cfg = StftConfig::default();
    let x = noise(3210, 9);
    let spec = stft(&x, &cfg).unwrap();
    let t = spec.to_tensor::<f64>();
    assert_eq!(t.dims(), &[2 * spec.f_bins, spec.n_frames]);
    let back = Spectrogram::from_tensor(&t, cfg, spec.orig_len).unwrap();
    assert_eq!(back.re, spec.re);
    assert_eq!(back.im, spec.im);

    // and the rebuilt spectrogram still inverts to the signal
    assert!(rel_l2(&x, &istft(&back).unwrap()) < 1e-6);
}

#[test]
fn shifting_by_one_hop_shifts_frames() {
    let cfg = StftConfig::new(256, 64, WindowKind::Hann, false).unwrap();
    let x = noise(2048, 17);
    let a = stft(&x, &cfg).unwrap();
    let b = stft(&x[64..], &cfg).unwrap();
    assert_eq!(b.n_frames, a.n_frames - 1);
    for f in 0..a.f_bins {
        for t in 0..b.n_frames {
            assert_eq!(b.re[f * b.n_frames + t], a.re[f * a.n_frames + t + 1]);
            assert_eq!(b.im[f * b.n_frames + t], a.im[f * a.n_frames + t + 1]);
        }
    }
}
