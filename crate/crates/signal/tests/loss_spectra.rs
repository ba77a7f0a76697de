//! The multi-scale loss spectra: windowing constants, filterbank coverage,
//! and the exact-zero property of the distortion on identical inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rasc_signal::{
    distortion, log_power_spec, mel_spec, AudioClip, MelFilterbank, SPECTRAL_SCALES,
};

fn noise_clip(len: usize, seed: u64, amp: f32) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioClip::new((0..len).map(|_| rng.gen_range(-amp..amp)).collect(), 16_000).unwrap()
}

fn sine_clip(hz: f64, len: usize) -> AudioClip {
    let samples: Vec<f32> = (0..len)
        .map(|n| (2.0 * std::f64::consts::PI * hz * n as f64 / 16_000.0).sin() as f32 * 0.7)
        .collect();
    AudioClip::new(samples, 16_000).unwrap()
}

#[test]
fn scale_5_uses_window_32_hop_8() {
    // 1 + (len - win) / hop frames: len 96, win 32, hop 8 -> 9
    let clip = noise_clip(96, 1, 0.5);
    let s = log_power_spec(&clip, 5).unwrap();
    assert_eq!(s.values.dims(), &[17, 9]);
    assert!(!s.padded);
}

#[test]
fn spectra_are_deterministic() {
    let clip = noise_clip(5000, 2, 0.5);
    for i in SPECTRAL_SCALES {
        let a = log_power_spec(&clip, i).unwrap();
        let b = log_power_spec(&clip, i).unwrap();
        assert_eq!(a.values.data(), b.values.data());
        let ma = mel_spec(&clip, i).unwrap();
        let mb = mel_spec(&clip, i).unwrap();
        assert_eq!(ma.values.data(), mb.values.data());
    }
}

#[test]
fn noise_outranks_silence_in_log_power() {
    let noise = noise_clip(4000, 3, 0.8);
    let silence = AudioClip::new(vec![0.0; 4000], 16_000).unwrap();
    for i in SPECTRAL_SCALES {
        let sn = log_power_spec(&noise, i).unwrap();
        let ss = log_power_spec(&silence, i).unwrap();
        let mean = |t: &rasc_tensor::Tensor<f64>| {
            t.data().iter().sum::<f64>() / t.numel() as f64
        };
        assert!(mean(&sn.values) > mean(&ss.values), "scale {i}");
    }
}

#[test]
fn tone_lands_in_its_mel_band() {
    let clip = sine_clip(1000.0, 8192);
    let i = 9; // 512-sample windows: 1 kHz sits exactly on bin 32
    let m = mel_spec(&clip, i).unwrap();
    let dims = m.values.dims().to_vec();
    let (rows, cols) = (dims[0], dims[1]);

    let mut row_energy = vec![0.0f64; rows];
    for r in 0..rows {
        for c in 0..cols {
            // undo the log so averaging weights frames by power
            row_energy[r] += m.values.data()[r * cols + c].exp();
        }
    }
    let argmax = row_energy
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;

    let bank = MelFilterbank::new(64, 257, 16_000, 0.0, 8_000.0);
    assert_eq!(argmax, bank.band_for(1000.0, 16_000));
}

#[test]
fn filterbank_rows_and_bins_are_covered_at_every_scale() {
    for i in SPECTRAL_SCALES {
        let f_bins = (1usize << (i - 1)) + 1;
        let n_mels = 64.min(1 << (i - 1));
        let bank = MelFilterbank::new(n_mels, f_bins, 16_000, 0.0, 8_000.0);

        assert!(bank.weights.iter().all(|&w| w >= 0.0), "scale {i}: negative weight");
        for m in 0..n_mels {
            let row = &bank.weights[m * f_bins..(m + 1) * f_bins];
            assert!(row.iter().sum::<f64>() > 0.0, "scale {i}: empty filter {m}");
        }
        for k in 0..f_bins {
            let covered = (0..n_mels).any(|m| bank.weights[m * f_bins + k] > 0.0);
            assert!(covered, "scale {i}: bin {k} uncovered");
        }
    }
}

#[test]
fn distortion_of_identical_clips_is_exactly_zero() {
    let clip = noise_clip(9000, 5, 0.6);
    let (lt, lf) = distortion(&clip, &clip).unwrap();
    assert_eq!(lt, 0.0);
    assert_eq!(lf, 0.0);
}

#[test]
fn polarity_flip_is_invisible_to_power_spectra_but_not_time_loss() {
    let clip = noise_clip(6000, 6, 0.5);
    let flipped =
        AudioClip::new(clip.samples.iter().map(|v| -v).collect(), clip.sample_rate).unwrap();
    let (lt, lf) = distortion(&clip, &flipped).unwrap();
    assert!(lt > 0.1, "time term should see the flip, got {lt}");
    assert!(lf < 1e-9, "power spectra should not, got {lf}");
}

#[test]
fn short_clips_are_padded_and_flagged() {
    let clip = noise_clip(20, 7, 0.5); // shorter than the 32-sample window
    let s = log_power_spec(&clip, 5).unwrap();
    assert!(s.padded);
    assert_eq!(s.values.dims()[1], 1);
    let m = mel_spec(&clip, 5).unwrap();
    assert!(m.padded);
}

#[test]
fn mismatched_clips_are_rejected() {
    let a = noise_clip(4000, 8, 0.5);
    let b = noise_clip(4001, 8, 0.5);
    assert!(distortion(&a, &b).is_err());
    let c = AudioClip::new(a.samples.clone(), 8_000).unwrap();
    assert!(distortion(&a, &c).is_err());
}

#[test]
fn translation_by_whole_hops_shifts_spectra() {
    let clip = noise_clip(4096, 9, 0.5);
    let i = 7; // window 128, hop 32
    let shifted = AudioClip::new(clip.samples[32..].to_vec(), 16_000).unwrap();
    let a = log_power_spec(&clip, i).unwrap();
    let b = log_power_spec(&shifted, i).unwrap();
    let (f, ta) = (a.values.dims()[0], a.values.dims()[1]);
    let tb = b.values.dims()[1];
    assert_eq!(tb, ta - 1);
    for ff in 0..f {
        for t in 0..tb {
            assert_eq!(
                b.values.data()[ff * tb + t],
                a.values.data()[ff * ta + t + 1],
                "bin {ff} frame {t}"
            );
        }
    }
}
