//! The graph-side spectral ops against the plain DSP they must reproduce.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rasc_signal::{distortion, istft, AudioClip, Spectrogram, StftConfig, WindowKind};
use rasc_tensor::{Graph, Tensor};
use rasc_train::{DistortionGraph, IstftGraph, TrainError};

fn noise_clip(len: usize, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f32> = (0..len).map(|_| rng.gen_range(-0.8f32..0.8)).collect();
    AudioClip::new(samples, 16_000).unwrap()
}

/// A spectrum with arbitrary values everywhere, including the imaginary
/// parts of the DC and Nyquist rows that synthesis is defined to ignore.
fn random_spectrum(f_bins: usize, frames: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..2 * f_bins * frames).map(|_| rng.gen_range(-3.0..3.0)).collect();
    Tensor::from_vec(&[2 * f_bins, frames], data).unwrap()
}

#[test]
fn graph_synthesis_matches_the_plain_inverse() {
    for (n_fft, hop, orig_len, seed) in
        [(256, 64, 4096, 1u64), (512, 160, 16_000, 2), (256, 64, 999, 3), (512, 160, 63, 4)]
    {
        let cfg = StftConfig::new(n_fft, hop, WindowKind::Hann, true).unwrap();
        let frames = cfg.frame_count(orig_len);
        let spec_t = random_spectrum(cfg.f_bins(), frames, seed);

        let plain = istft(
            &Spectrogram::from_tensor::<f64>(&spec_t, cfg, orig_len).unwrap(),
        )
        .unwrap();

        let g: Graph<f64> = Graph::new();
        let node = g.constant(spec_t).unwrap();
        let out = IstftGraph::new(cfg).apply(&g, node, orig_len).unwrap();
        let got = g.value(out);
        assert_eq!(got.dims(), [1, orig_len]);

        let mut worst = 0.0f64;
        for (a, b) in got.data().iter().zip(&plain) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-9, "n_fft {n_fft}: worst sample error {worst:.3e}");
    }
}

#[test]
fn graph_distortion_agrees_with_the_plain_reference() {
    for (len, pair) in [(6000, (10u64, 11u64)), (100, (12, 13)), (20, (14, 15))] {
        let x = noise_clip(len, pair.0);
        let xh = noise_clip(len, pair.1);
        let (lt_ref, lf_ref) = distortion(&x, &xh).unwrap();

        let g: Graph<f64> = Graph::new();
        let xh_node = g
            .constant(Tensor::from_vec(&[1, len], xh.samples_f64()).unwrap())
            .unwrap();
        let d = DistortionGraph::new(16_000).build(&g, xh_node, &x).unwrap();
        let lt = g.value(d.l_t).item().unwrap();
        let lf = g.value(d.l_f).item().unwrap();

        assert!((lt - lt_ref).abs() < 1e-12, "len {len}: l_t {lt} vs {lt_ref}");
        assert!(
            (lf - lf_ref).abs() < 1e-8,
            "len {len}: l_f {lf} vs {lf_ref} (diff {:.3e})",
            (lf - lf_ref).abs()
        );
    }
}

#[test]
fn identical_clips_cost_nothing() {
    let x = noise_clip(5000, 20);
    assert_eq!(distortion(&x, &x).unwrap(), (0.0, 0.0));

    let g: Graph<f64> = Graph::new();
    let node = g.constant(Tensor::from_vec(&[1, 5000], x.samples_f64()).unwrap()).unwrap();
    let d = DistortionGraph::new(16_000).build(&g, node, &x).unwrap();
    assert_eq!(g.value(d.l_t).item().unwrap(), 0.0);
    // the square-root guard and FFT-vs-kernel rounding leave a microscopic
    // residue on the graph side
    assert!(g.value(d.l_f).item().unwrap() < 1e-5);
}

#[test]
fn synthesis_rejects_malformed_spectra() {
    let cfg = StftConfig::new(256, 64, WindowKind::Hann, true).unwrap();
    let synth: IstftGraph<f64> = IstftGraph::new(cfg);
    let g: Graph<f64> = Graph::new();

    let bad_rows = g.constant(Tensor::zeros(&[100, 8])).unwrap();
    assert!(matches!(synth.apply(&g, bad_rows, 100), Err(TrainError::Config(_))));

    // 8 frames cover (8-1)*64 + 256 = 704 raw samples, 96 of which are
    // analysis padding
    let spec = g.constant(Tensor::zeros(&[258, 8])).unwrap();
    assert!(synth.apply(&g, spec, 608).is_ok());
    assert!(matches!(synth.apply(&g, spec, 609), Err(TrainError::Config(_))));
}

#[test]
fn distortion_rejects_mismatched_shapes_and_rates() {
    let x = noise_clip(1000, 30);
    let g: Graph<f64> = Graph::new();
    let dist = DistortionGraph::new(16_000);

    let short = g.constant(Tensor::zeros(&[1, 999])).unwrap();
    assert!(matches!(dist.build(&g, short, &x), Err(TrainError::Config(_))));

    let node = g.constant(Tensor::zeros(&[1, 1000])).unwrap();
    let wrong_rate = AudioClip::new(x.samples.clone(), 8_000).unwrap();
    assert!(matches!(dist.build(&g, node, &wrong_rate), Err(TrainError::Config(_))));
}
