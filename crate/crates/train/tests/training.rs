//! Optimizer behavior and the training loop: convergence on a toy problem,
//! clipping arithmetic, seed determinism, logging, and checkpoint output.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rasc_codec::{ModelConfig, SpeechCodec};
use rasc_signal::{save_wav, AudioClip};
use rasc_tensor::{load_checkpoint, Graph, Init, ParamSet, Tensor};
use rasc_train::{load_dataset, train, Adam, LossReport, TrainConfig, TrainError};

fn noise_clip(len: usize, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f32> = (0..len).map(|_| rng.gen_range(-0.8f32..0.8)).collect();
    AudioClip::new(samples, 16_000).unwrap()
}

fn quick_config(steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(9.0);
    cfg.steps = steps;
    cfg.crop_samples = 2048;
    cfg.seed = 17;
    cfg.log_every = 1;
    cfg.checkpoint_every = 0;
    cfg
}

fn parse_log(buf: &[u8]) -> Vec<LossReport> {
    String::from_utf8_lossy(buf)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn adam_converges_on_a_quadratic_bowl() {
    let mut params: ParamSet<f64> = ParamSet::new();
    params.register("w", &[6], Init::Const(4.0), 0).unwrap();
    let target = [1.0, -2.0, 0.5, 3.0, -0.25, 0.0];

    let mut adam = Adam::new(0.05);
    for _ in 0..600 {
        let g = Graph::new();
        let w = g.leaf(params.get("w").unwrap().value.clone()).unwrap();
        let t = g.constant(Tensor::from_vec(&[6], target.to_vec()).unwrap()).unwrap();
        let d = g.sub(w, t).unwrap();
        let loss = g.sum_all(g.mul(d, d).unwrap()).unwrap();
        let grads = g.backward(loss).unwrap();
        params.set_grad("w", grads.grad(w)).unwrap();
        adam.step(&mut params).unwrap();
    }
    assert_eq!(adam.steps_taken(), 600);
    for (got, want) in params.get("w").unwrap().value.data().iter().zip(target) {
        assert!((got - want).abs() < 1e-2, "{got} vs {want}");
    }
}

#[test]
fn gradient_clip_rescales_the_global_norm() {
    let mut params: ParamSet<f64> = ParamSet::new();
    params.register("a", &[3], Init::Zeros, 0).unwrap();
    params.register("b", &[1], Init::Zeros, 0).unwrap();
    params.set_grad("a", Tensor::from_vec(&[3], vec![3.0, 0.0, 4.0]).unwrap()).unwrap();
    params.set_grad("b", Tensor::from_vec(&[1], vec![12.0]).unwrap()).unwrap();

    let mut adam = Adam::new(1e-3);
    let step = adam.step(&mut params).unwrap();
    assert!((step.grad_norm - 13.0).abs() < 1e-12); // sqrt(9 + 16 + 144)
    assert!((step.clip_scale - 1.0 / 13.0).abs() < 1e-15);

    // under the clip nothing is scaled
    params.set_grad("a", Tensor::from_vec(&[3], vec![0.3, 0.0, 0.4]).unwrap()).unwrap();
    params.set_grad("b", Tensor::from_vec(&[1], vec![0.0]).unwrap()).unwrap();
    let step = adam.step(&mut params).unwrap();
    assert!((step.grad_norm - 0.5).abs() < 1e-12);
    assert_eq!(step.clip_scale, 1.0);

    params.set_grad("b", Tensor::from_vec(&[1], vec![f64::INFINITY]).unwrap()).unwrap();
    assert!(matches!(adam.step(&mut params), Err(TrainError::NonFinite(_))));
}

#[test]
fn seeded_runs_are_bit_identical() {
    let clip = noise_clip(5000, 60);
    let cfg = quick_config(6);

    let run = |_: usize| {
        let mut codec: SpeechCodec<f32> = SpeechCodec::new(ModelConfig::toy(), 21).unwrap();
        let mut log = Vec::new();
        let last = train(
            &mut codec,
            std::slice::from_ref(&clip),
            &cfg,
            Some(&mut log),
            None,
        )
        .unwrap();
        (last, log, codec.to_checkpoint().to_bytes())
    };
    let (last_a, log_a, ckpt_a) = run(0);
    let (last_b, log_b, ckpt_b) = run(1);
    assert_eq!(last_a, last_b);
    assert_eq!(log_a, log_b);
    assert_eq!(ckpt_a, ckpt_b);

    let reports = parse_log(&log_a);
    assert_eq!(reports.len(), 6);
    assert!(reports.iter().zip(1..).all(|(r, i)| r.step == i));
}

#[test]
fn short_overfit_reduces_the_loss() {
    let clip = noise_clip(2048, 61);
    let mut cfg = quick_config(80);
    cfg.lambda = 9.0;

    let mut codec: SpeechCodec<f32> = SpeechCodec::new(ModelConfig::toy(), 22).unwrap();
    let mut log = Vec::new();
    train(&mut codec, std::slice::from_ref(&clip), &cfg, Some(&mut log), None).unwrap();

    let reports = parse_log(&log);
    let early: f64 = reports[..10].iter().map(|r| r.total).sum::<f64>() / 10.0;
    let late: f64 = reports[70..].iter().map(|r| r.total).sum::<f64>() / 10.0;
    assert!(
        late < 0.9 * early,
        "no learning progress: first-10 mean {early:.4}, last-10 mean {late:.4}"
    );
    for r in &reports {
        assert!((r.total - r.composed_total()).abs() < 1e-9);
    }
}

#[test]
fn checkpoints_land_on_disk_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let clip = noise_clip(3000, 62);
    let mut cfg = quick_config(4);
    cfg.checkpoint_every = 2;

    let mut codec: SpeechCodec<f32> = SpeechCodec::new(ModelConfig::toy(), 23).unwrap();
    train(&mut codec, std::slice::from_ref(&clip), &cfg, None, Some(&path)).unwrap();

    let ckpt = load_checkpoint(&path).unwrap();
    assert_eq!(ckpt.to_bytes(), codec.to_checkpoint().to_bytes());
    let reloaded: SpeechCodec<f32> = SpeechCodec::from_checkpoint(&ckpt).unwrap();
    assert_eq!(reloaded.config(), codec.config());
}

#[test]
fn empty_or_mismatched_datasets_are_rejected() {
    let mut codec: SpeechCodec<f32> = SpeechCodec::new(ModelConfig::toy(), 24).unwrap();
    let cfg = quick_config(1);

    assert!(matches!(
        train(&mut codec, &[], &cfg, None, None),
        Err(TrainError::Config(_))
    ));

    let empty = AudioClip::new(vec![], 16_000).unwrap();
    assert!(matches!(
        train(&mut codec, &[empty], &cfg, None, None),
        Err(TrainError::Config(_))
    ));

    let wrong = AudioClip::new(vec![0.1; 1000], 44_100).unwrap();
    assert!(matches!(
        train(&mut codec, &[wrong], &cfg, None, None),
        Err(TrainError::Config(_))
    ));

    let clip = noise_clip(1000, 63);
    let mut bad = quick_config(0);
    bad.steps = 0;
    assert!(matches!(
        train(&mut codec, std::slice::from_ref(&clip), &bad, None, None),
        Err(TrainError::Config(_))
    ));
}

#[test]
fn dataset_loader_sorts_by_name_and_rejects_empty_dirs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(TrainError::Config(_))));

    save_wav(&dir.path().join("b.wav"), &noise_clip(400, 70)).unwrap();
    save_wav(&dir.path().join("a.wav"), &noise_clip(300, 71)).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

    let set = load_dataset(dir.path()).unwrap();
    let names: Vec<&str> = set.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["a.wav", "b.wav"]);
    assert_eq!(set[0].1.len(), 300);
    assert_eq!(set[1].1.len(), 400);

    assert!(matches!(load_dataset(Path::new("/nonexistent/xyz")), Err(TrainError::Io(_))));
}
