//! Finite-difference verification of the full rate-distortion objective.
//!
//! Everything runs in f64 with the additive-noise surrogate so the loss is
//! smooth almost everywhere; the noise draw and the input clip are frozen so
//! analytic and numeric probes see the exact same function.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rasc_codec::{ModelConfig, QuantSurrogate, SpeechCodec, TrainNoise};
use rasc_signal::AudioClip;
use rasc_tensor::{finite_difference_check, FdSettings, ParamSet, Tensor, TensorError};
use rasc_tensor::Graph;
use rasc_train::{rd_loss_graph, sample_noise, DistortionGraph, IstftGraph};

const LAMBDA: f64 = 5.5;

/// Full-band noise whose samples keep a fixed distance from zero. The
/// fresh-initialized decoder reconstructs near-silence, so this keeps every
/// |x - x_hat| term away from the kink of the absolute value and the check
/// compares derivatives at a point where the loss is actually differentiable.
fn fixed_clip(len: usize, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f32> = (0..len)
        .map(|_| {
            let mag = rng.gen_range(0.2f32..0.7);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    AudioClip::new(samples, 16_000).unwrap()
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let cfg = ModelConfig::toy();
    let mut codec: SpeechCodec<f64> = SpeechCodec::new(cfg.clone(), 11).unwrap();
    let clip = fixed_clip(4096, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let noise: TrainNoise<f64> = sample_noise(&cfg, clip.len(), &mut rng).unwrap();

    // Probe at a generic point instead of the fresh initialization: with
    // uniform O(0.3) weights every path carries signal, so no gradient sits
    // at the noise floor and the reconstruction has enough energy to stay
    // off the log-power guard, where the curvature would wreck the
    // central-difference estimate.
    let mut wrng = ChaCha8Rng::seed_from_u64(15);
    let names: Vec<String> = codec.params().names().cloned().collect();
    for name in &names {
        let dims = codec.params().get(name).unwrap().value.dims().to_vec();
        let n: usize = dims.iter().product();
        let data: Vec<f64> = (0..n).map(|_| wrng.gen_range(-0.3..0.3)).collect();
        codec
            .params_mut()
            .set_value(name, Tensor::from_vec(&dims, data).unwrap())
            .unwrap();
    }

    let synth = IstftGraph::new(cfg.stft().unwrap());
    let dist = DistortionGraph::new(cfg.sample_rate);

    // Analytic gradients from a single reverse pass at the base point; the
    // same binder serves the forward build and the export so the gradients
    // come off exactly the leaves the loss consumed.
    let mut analytic: BTreeMap<String, Tensor<f64>> = BTreeMap::new();
    let base_total;
    {
        let g = Graph::new();
        let b = codec.binder(&g).unwrap();
        let nodes = rd_loss_graph(
            &codec,
            &b,
            &synth,
            &dist,
            &clip,
            LAMBDA,
            &noise,
            QuantSurrogate::Noise,
        )
        .unwrap();
        base_total = g.value(nodes.total).item().unwrap();
        let grads = g.backward(nodes.total).unwrap();
        let mut holder = codec.params().clone();
        b.export_grads(&grads, &mut holder).unwrap();
        for (name, p) in holder.iter() {
            analytic.insert(name.clone(), p.grad.clone());
        }
    }
    assert!(base_total.is_finite());
    assert_eq!(analytic.len(), codec.params().iter().count());

    // The synthesis keeps the output real by discarding the imaginary planes
    // at DC and Nyquist, so the head biases feeding those rows are off every
    // path and must come back exactly zero.
    let f_bins = cfg.n_fft / 2 + 1;
    let head_bias = &analytic["dec.head.b"];
    assert_eq!(head_bias.data()[f_bins], 0.0);
    assert_eq!(head_bias.data()[2 * f_bins - 1], 0.0);

    let base = codec.params().clone();
    let mut work = codec;
    // Epsilon sits in the window where the difference quotient resolves
    // every gradient above min_grad (noise ~1e-14/2eps stays two decades
    // under the bar) while piecewise-smooth ops (ELU, squared ReLU, the
    // absolute errors) contribute only a fraction of the tolerance.
    let settings = FdSettings {
        epsilon: 2.5e-5,
        coords_per_param: 3,
        seed: 14,
        min_grad: 1e-4,
    };
    let report = finite_difference_check(&base, &analytic, &settings, |p: &ParamSet<f64>| {
        *work.params_mut() = p.clone();
        let g = Graph::new();
        let b = work.binder(&g).map_err(|e| TensorError::FdHarness(e.to_string()))?;
        let nodes = rd_loss_graph(
            &work,
            &b,
            &synth,
            &dist,
            &clip,
            LAMBDA,
            &noise,
            QuantSurrogate::Noise,
        )
        .map_err(|e| TensorError::FdHarness(e.to_string()))?;
        g.value(nodes.total).item()
    })
    .unwrap();

    println!(
        "worst parameter {} coord {}: rel err {:.3e} over {} rel + {} abs coords",
        report.worst_param,
        report.worst_coord,
        report.max_rel_err,
        report.coords_checked,
        report.coords_absolute,
    );
    assert!(
        report.max_rel_err < 1e-4,
        "worst parameter {} coord {}: rel err {:.3e}",
        report.worst_param,
        report.worst_coord,
        report.max_rel_err
    );
    assert!(report.coords_checked > 500);
    assert!(report.coords_absolute > 0);
}
