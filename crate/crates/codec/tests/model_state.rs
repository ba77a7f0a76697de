//! Whole-model invariants: checkpoints restore the exact parameter values,
//! the training-time entropy pass is deterministic and well-behaved, and —
//! the property the whole format stands on — the decoder side can replay
//! the encoder side's distribution predictions bit for bit from coded
//! values alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rasc_codec::{
    quantize_round, ModelConfig, QuantSurrogate, SliceRunner, SpeechCodec, TrainNoise,
};
use rasc_tensor::{Checkpoint, Graph, Tensor, Vid};

fn rand_vals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn consts(g: &Graph<f64>, dims: &[usize], vals: Vec<f64>) -> Vid {
    g.constant(Tensor::from_vec(dims, vals).unwrap()).unwrap()
}

fn randomize(codec: &mut SpeechCodec<f64>, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = codec.params().names().cloned().collect();
    for name in names {
        let t = codec.params().value(&name).unwrap();
        let vals: Vec<f64> = (0..t.numel()).map(|_| rng.gen_range(-scale..scale)).collect();
        codec.params_mut().set_value(&name, Tensor::from_vec(t.dims(), vals).unwrap()).unwrap();
    }
}

#[test]
fn checkpoint_round_trip_restores_every_bit() {
    let mut codec = SpeechCodec::<f64>::new(ModelConfig::toy(), 77).unwrap();
    randomize(&mut codec, 0.5, 4242);

    let bytes = codec.to_checkpoint().to_bytes();
    let back = SpeechCodec::<f64>::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();

    assert_eq!(back.config(), codec.config());
    assert_eq!(back.params().len(), codec.params().len());
    for (name, p) in codec.params().iter() {
        let restored = back.params().value(name).unwrap();
        let same = p
            .value
            .data()
            .iter()
            .zip(restored.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "{name} changed across the round trip");
    }
}

#[test]
fn checkpoint_with_tampered_config_hash_is_rejected() {
    let codec = SpeechCodec::<f32>::new(ModelConfig::toy(), 78).unwrap();
    let mut ckpt = codec.to_checkpoint();
    ckpt.config_hash[0] ^= 0x01;
    assert!(SpeechCodec::<f32>::from_checkpoint(&ckpt).is_err());
}

#[test]
fn checkpoint_precision_must_match_loader() {
    let codec = SpeechCodec::<f32>::new(ModelConfig::toy(), 79).unwrap();
    let ckpt = codec.to_checkpoint();
    assert!(SpeechCodec::<f64>::from_checkpoint(&ckpt).is_err());
    assert!(SpeechCodec::<f32>::from_checkpoint(&ckpt).is_ok());
}

fn noise_for(cfg: &ModelConfig, t_y: usize, seed: u64) -> TrainNoise<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_z = cfg.hyper_frames(t_y);
    let ny = cfg.latent_channels * t_y;
    let nz = cfg.hyper_channels * t_z;
    TrainNoise {
        y: Tensor::from_vec(
            &[cfg.latent_channels, t_y],
            (0..ny).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        )
        .unwrap(),
        z: Tensor::from_vec(
            &[cfg.hyper_channels, t_z],
            (0..nz).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        )
        .unwrap(),
    }
}

#[test]
fn entropy_pass_produces_finite_positive_rates() {
    let cfg = ModelConfig::toy();
    let mut codec = SpeechCodec::<f64>::new(cfg.clone(), 80).unwrap();
    randomize(&mut codec, 0.2, 5050);

    let t_y = 16;
    let noise = noise_for(&cfg, t_y, 1);
    for mode in [QuantSurrogate::SteRound, QuantSurrogate::Noise] {
        let g = Graph::new();
        let b = codec.binder(&g).unwrap();
        let y = consts(&g, &[cfg.latent_channels, t_y], rand_vals(cfg.latent_channels * t_y, 2));
        let out = codec.entropy_forward_train(&b, y, &noise, mode).unwrap();

        assert_eq!(g.shape(out.y_bar).dims(), &[cfg.latent_channels, t_y]);
        let ry = g.value(out.rate_y_bits).item().unwrap();
        let rz = g.value(out.rate_z_bits).item().unwrap();
        assert!(ry.is_finite() && ry > 0.0, "{mode:?}: rate_y {ry}");
        assert!(rz.is_finite() && rz > 0.0, "{mode:?}: rate_z {rz}");
        // 16 bits/element is the cap the pmf floor imposes
        assert!(ry <= (cfg.latent_channels * t_y) as f64 * 16.0);
    }
}

#[test]
fn entropy_pass_is_deterministic_given_the_noise() {
    let cfg = ModelConfig::toy();
    let mut codec = SpeechCodec::<f64>::new(cfg.clone(), 81).unwrap();
    randomize(&mut codec, 0.2, 6060);

    let t_y = 12;
    let noise = noise_for(&cfg, t_y, 7);
    let y_vals = rand_vals(cfg.latent_channels * t_y, 8);

    let run = || {
        let g = Graph::new();
        let b = codec.binder(&g).unwrap();
        let y = consts(&g, &[cfg.latent_channels, t_y], y_vals.clone());
        let out = codec.entropy_forward_train(&b, y, &noise, QuantSurrogate::SteRound).unwrap();
        (
            g.value(out.rate_y_bits).item().unwrap(),
            g.value(out.rate_z_bits).item().unwrap(),
            g.value(out.y_bar).data().to_vec(),
        )
    };
    let (ry1, rz1, yb1) = run();
    let (ry2, rz2, yb2) = run();
    assert_eq!(ry1.to_bits(), ry2.to_bits());
    assert_eq!(rz1.to_bits(), rz2.to_bits());
    assert_eq!(yb1.len(), yb2.len());
    assert!(yb1.iter().zip(&yb2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn slice_order_guard_rejects_skips_and_repeats() {
    let mut runner = SliceRunner::new(3);
    assert!(runner.expect(1).is_err());
    assert!(runner.expect(0).is_ok());
    assert!(runner.expect(0).is_err());
    assert!(runner.expect(1).is_ok());
    assert!(runner.expect(2).is_ok());
    assert!(runner.finished());
    assert!(runner.expect(3).is_err());
}

/// The decoder-side replay: predictions for slice i must be recomputable
/// bit-for-bit from the coded side info and slices < i alone. This drives
/// one clip's latent through quantization twice — once "encoding", once
/// "decoding" with only the integer symbols carried across — and demands
/// identical distribution parameters and reconstructions.
#[test]
fn slice_predictions_replay_bit_exactly_from_coded_values() {
    let cfg = ModelConfig::toy();
    let mut codec = SpeechCodec::<f64>::new(cfg.clone(), 90).unwrap();
    randomize(&mut codec, 0.25, 7070);

    let t_y = 16;
    let t_z = cfg.hyper_frames(t_y);
    let y_vals = rand_vals(cfg.latent_channels * t_y, 11);

    // ---- encoder side ---------------------------------------------------
    let g1 = Graph::new();
    let b1 = codec.binder(&g1).unwrap();
    let y1 = consts(&g1, &[cfg.latent_channels, t_y], y_vals.clone());
    let z = codec.hyper_encode(&b1, y1).unwrap();
    let z_hat = quantize_round(&g1.value(z), &Tensor::zeros(&[cfg.hyper_channels, t_z]));
    let feats1 = codec
        .hyper_decode(&b1, g1.constant(z_hat.clone()).unwrap(), t_y)
        .unwrap();

    let mut symbols: Vec<Tensor<f64>> = Vec::new();
    let mut mu_enc = Vec::new();
    let mut sigma_enc = Vec::new();
    let mut bar_enc: Vec<Vid> = Vec::new();
    let mut runner = SliceRunner::new(cfg.n_slices);
    let y_slices = codec.split_slices(&b1, y1).unwrap();
    for i in 0..cfg.n_slices {
        runner.expect(i).unwrap();
        let st = codec.slice_phi(&b1, i, &feats1, &bar_enc).unwrap();
        // carried across the wire: integer offsets only
        let y_i = g1.value(y_slices[i]);
        let mu_i = g1.value(st.mu);
        let n = Tensor::from_vec(
            y_i.dims(),
            y_i.data().iter().zip(mu_i.data()).map(|(y, m)| (y - m).round()).collect::<Vec<f64>>(),
        )
        .unwrap();
        assert!(n.data().iter().all(|v| *v == v.round()), "symbols must be integers");

        let y_hat = g1.add(g1.constant(n.clone()).unwrap(), st.mu).unwrap();
        let r = codec.slice_lrp(&b1, i, &feats1, &bar_enc, y_hat).unwrap();
        bar_enc.push(g1.add(y_hat, r).unwrap());

        symbols.push(n);
        mu_enc.push(g1.value(st.mu));
        sigma_enc.push(g1.value(st.sigma));
    }
    assert!(runner.finished());
    let y_bar_enc = g1.value(g1.concat(&bar_enc, 0).unwrap());
    let spec_enc = g1.value(codec.synthesize(&b1, g1.concat(&bar_enc, 0).unwrap(), 64).unwrap());

    // ---- decoder side: only z_hat and the symbols come across -----------
    let g2 = Graph::new();
    let b2 = codec.binder(&g2).unwrap();
    let feats2 = codec
        .hyper_decode(&b2, g2.constant(z_hat).unwrap(), t_y)
        .unwrap();

    let mut bar_dec: Vec<Vid> = Vec::new();
    for i in 0..cfg.n_slices {
        let st = codec.slice_phi(&b2, i, &feats2, &bar_dec).unwrap();
        let mu = g2.value(st.mu);
        let sigma = g2.value(st.sigma);
        let bits_equal = |a: &Tensor<f64>, c: &Tensor<f64>| {
            a.data().iter().zip(c.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        assert!(bits_equal(&mu, &mu_enc[i]), "slice {i}: centers diverged");
        assert!(bits_equal(&sigma, &sigma_enc[i]), "slice {i}: spreads diverged");

        let y_hat = g2.add(g2.constant(symbols[i].clone()).unwrap(), st.mu).unwrap();
        let r = codec.slice_lrp(&b2, i, &feats2, &bar_dec, y_hat).unwrap();
        bar_dec.push(g2.add(y_hat, r).unwrap());
    }
    let y_bar_dec = g2.value(g2.concat(&bar_dec, 0).unwrap());
    assert!(
        y_bar_dec.data().iter().zip(y_bar_enc.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "reconstructed latents diverged"
    );

    let spec_dec = g2.value(codec.synthesize(&b2, g2.concat(&bar_dec, 0).unwrap(), 64).unwrap());
    assert!(
        spec_dec.data().iter().zip(spec_enc.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "synthesized spectrograms diverged"
    );
}

#[test]
fn predictions_do_not_depend_on_the_slice_being_coded() {
    // slice i's distribution must be a function of (side info, slices < i)
    // only — bump slice i's actual values and require identical mu/sigma
    let cfg = ModelConfig::toy();
    let mut codec = SpeechCodec::<f64>::new(cfg.clone(), 91).unwrap();
    randomize(&mut codec, 0.25, 8080);

    let t_y = 10;
    let c = cfg.latent_channels;
    let ws = cfg.slice_width();
    let base = rand_vals(c * t_y, 21);

    let predict = |vals: Vec<f64>| {
        let g = Graph::new();
        let b = codec.binder(&g).unwrap();
        let y = consts(&g, &[c, t_y], vals);
        // freeze the side info so it cannot smuggle slice-1 information in
        let z_hat = g.constant(Tensor::zeros(&[cfg.hyper_channels, cfg.hyper_frames(t_y)])).unwrap();
        let feats = codec.hyper_decode(&b, z_hat, t_y).unwrap();
        let slices = codec.split_slices(&b, y).unwrap();
        let s0 = codec.slice_phi(&b, 0, &feats, &[]).unwrap();
        let syms = quantize_round(&g.value(slices[0]), &g.value(s0.mu));
        let n0 = g.constant(syms).unwrap();
        let r0 = codec.slice_lrp(&b, 0, &feats, &[], n0).unwrap();
        let bar0 = g.add(n0, r0).unwrap();
        let s1 = codec.slice_phi(&b, 1, &feats, &[bar0]).unwrap();
        (g.value(s1.mu), g.value(s1.sigma))
    };

    let mut bumped = base.clone();
    // perturb only the last slice's rows
    for ch in c - ws..c {
        for t in 0..t_y {
            bumped[ch * t_y + t] += 1.7;
        }
    }
    let (mu_a, sg_a) = predict(base);
    let (mu_b, sg_b) = predict(bumped);
    assert_eq!(mu_a.data(), mu_b.data());
    assert_eq!(sg_a.data(), sg_b.data());
}
