//! The linear-attention recurrence against a direct O(T²) evaluation, plus
//! exactness of chunked (streaming) evaluation for every stateful piece.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rasc_codec::{wkv_graph, Binder, ChannelMix, TimeMix, WkvState};
use rasc_tensor::{Graph, ParamSet, Tensor, Vid};

fn consts(g: &Graph<f64>, dims: &[usize], vals: Vec<f64>) -> Vid {
    g.constant(Tensor::from_vec(dims, vals).unwrap()).unwrap()
}

#[test]
fn first_token_passes_through() {
    let g = Graph::<f64>::new();
    let k = consts(&g, &[2, 1], vec![0.3, -1.0]);
    let v = consts(&g, &[2, 1], vec![5.0, -2.5]);
    let w = consts(&g, &[2, 1], vec![0.7, 0.1]);
    let u = consts(&g, &[2, 1], vec![0.2, -0.4]);
    let (out, _) = wkv_graph(&g, k, v, w, u, None).unwrap();
    // with no history the ratio collapses to v_1 whatever k, w, u are
    assert_eq!(g.value(out).data(), &[5.0, -2.5]);
}

#[test]
fn flat_weights_give_running_means() {
    let g = Graph::<f64>::new();
    let k = consts(&g, &[1, 3], vec![0.0; 3]);
    let v = consts(&g, &[1, 3], vec![1.0, 2.0, 3.0]);
    let w = consts(&g, &[1, 3], vec![0.0; 3]);
    let u = consts(&g, &[1, 1], vec![0.0]);
    let (out, _) = wkv_graph(&g, k, v, w, u, None).unwrap();
    let got = g.value(out);
    for (a, b) in got.data().iter().zip(&[1.0, 1.5, 2.0]) {
        assert!((a - b).abs() < 1e-12, "{:?}", got.data());
    }
}

/// Direct evaluation of the same weighted average, O(T²), no shifting.
fn brute_force(k: &[f64], v: &[f64], w: &[f64], u: f64, ch: usize, t_len: usize) -> Vec<f64> {
    let at = |buf: &[f64], t: usize| buf[ch * t_len + t];
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut top = 0.0;
        let mut bot = 0.0;
        for j in 0..t {
            // token j decays once per step from j+1 through t-1
            let decay: f64 = (j + 1..t).map(|m| at(w, m)).sum();
            let weight = (at(k, j) - decay).exp();
            top += weight * at(v, j);
            bot += weight;
        }
        let now = (u + at(k, t)).exp();
        top += now * at(v, t);
        bot += now;
        out.push(top / bot);
    }
    out
}

#[test]
fn recurrence_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    let (c, t_len) = (4, 16);
    let kv: Vec<f64> = (0..c * t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let vv: Vec<f64> = (0..c * t_len).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let wv: Vec<f64> = (0..c * t_len).map(|_| rng.gen_range(0.0..1.0)).collect();
    let uv: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let g = Graph::<f64>::new();
    let k = consts(&g, &[c, t_len], kv.clone());
    let v = consts(&g, &[c, t_len], vv.clone());
    let w = consts(&g, &[c, t_len], wv.clone());
    let u = consts(&g, &[c, 1], uv.clone());
    let (out, _) = wkv_graph(&g, k, v, w, u, None).unwrap();
    let got = g.value(out);

    for ch in 0..c {
        let want = brute_force(&kv, &vv, &wv, uv[ch], ch, t_len);
        for t in 0..t_len {
            let a = got.data()[ch * t_len + t];
            let b = want[t];
            assert!((a - b).abs() < 1e-6, "ch {ch} t {t}: {a} vs {b}");
        }
    }
}

#[test]
fn extreme_weights_stay_finite() {
    let g = Graph::<f64>::new();
    let k = consts(&g, &[1, 4], vec![80.0, -80.0, 75.0, 0.0]);
    let v = consts(&g, &[1, 4], vec![1.0, -1.0, 2.0, 0.5]);
    let w = consts(&g, &[1, 4], vec![0.5; 4]);
    let u = consts(&g, &[1, 1], vec![60.0]);
    // exp(80) overflows f32 and strains f64 products; the shifted form must not
    let (out, _) = wkv_graph(&g, k, v, w, u, None).unwrap();
    for x in g.value(out).data() {
        assert!(x.is_finite());
        assert!(x.abs() <= 2.0);
    }
}

#[test]
fn chunked_recurrence_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let (c, t_len) = (3, 17);
    let kv: Vec<f64> = (0..c * t_len).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let vv: Vec<f64> = (0..c * t_len).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let wv: Vec<f64> = (0..c * t_len).map(|_| rng.gen_range(0.0..0.8)).collect();
    let uv: Vec<f64> = (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect();

    let full = {
        let g = Graph::<f64>::new();
        let (out, _) = wkv_graph(
            &g,
            consts(&g, &[c, t_len], kv.clone()),
            consts(&g, &[c, t_len], vv.clone()),
            consts(&g, &[c, t_len], wv.clone()),
            consts(&g, &[c, 1], uv.clone()),
            None,
        )
        .unwrap();
        g.value(out).data().to_vec()
    };

    let column_major = |buf: &[f64], lo: usize, hi: usize| -> Vec<f64> {
        (0..c).flat_map(|ch| (lo..hi).map(move |t| buf[ch * t_len + t])).collect()
    };

    let mut state: Option<WkvState<f64>> = None;
    let mut streamed: Vec<Vec<f64>> = vec![Vec::new(); c];
    for (lo, hi) in [(0, 5), (5, 12), (12, 17)] {
        let g = Graph::<f64>::new();
        let span = hi - lo;
        let (out, next) = wkv_graph(
            &g,
            consts(&g, &[c, span], column_major(&kv, lo, hi)),
            consts(&g, &[c, span], column_major(&vv, lo, hi)),
            consts(&g, &[c, span], column_major(&wv, lo, hi)),
            consts(&g, &[c, 1], uv.clone()),
            state.as_ref(),
        )
        .unwrap();
        let vals = g.value(out);
        for ch in 0..c {
            streamed[ch].extend_from_slice(&vals.data()[ch * span..(ch + 1) * span]);
        }
        state = Some(next);
    }

    for ch in 0..c {
        for t in 0..t_len {
            assert_eq!(
                streamed[ch][t].to_bits(),
                full[ch * t_len + t].to_bits(),
                "ch {ch} t {t}"
            );
        }
    }
}

/// Replace every parameter with seeded random values so the mixers do real
/// work (several start as exact zeros, which would make any test vacuous).
fn randomize(params: &mut ParamSet<f64>, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in params.names().cloned().collect::<Vec<_>>() {
        let t = params.value(&name).unwrap();
        let vals: Vec<f64> = (0..t.numel()).map(|_| rng.gen_range(-scale..scale)).collect();
        params.set_value(&name, Tensor::from_vec(t.dims(), vals).unwrap()).unwrap();
    }
}

fn rand_input(c: usize, t: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..c * t).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn time_mix_streams_bit_exactly() {
    let (c, t_len) = (6, 13);
    let tm = TimeMix::new("tm", c, true);
    let mut params = ParamSet::<f64>::new();
    tm.register(&mut params, 11).unwrap();
    randomize(&mut params, 0.6, 123);
    let x = rand_input(c, t_len, 9);

    let full = {
        let g = Graph::new();
        let b = Binder::new(&g, &params).unwrap();
        let xv = consts(&g, &[c, t_len], x.clone());
        let (out, _, _) = tm.fwd_with_state(&b, xv, None).unwrap();
        g.value(out).data().to_vec()
    };

    let mut carried: Option<(WkvState<f64>, Tensor<f64>)> = None;
    let mut streamed: Vec<Vec<f64>> = vec![Vec::new(); c];
    for (lo, hi) in [(0, 4), (4, 10), (10, 13)] {
        let g = Graph::new();
        let b = Binder::new(&g, &params).unwrap();
        let span = hi - lo;
        let xr = &x;
        let chunk: Vec<f64> =
            (0..c).flat_map(|ch| (lo..hi).map(move |t| xr[ch * t_len + t])).collect();
        let xv = consts(&g, &[c, span], chunk);
        let prev = carried.as_ref().map(|(s, p)| (s, p));
        let (out, st, col) = tm.fwd_with_state(&b, xv, prev).unwrap();
        let vals = g.value(out);
        for ch in 0..c {
            streamed[ch].extend_from_slice(&vals.data()[ch * span..(ch + 1) * span]);
        }
        carried = Some((st, col));
    }

    for ch in 0..c {
        for t in 0..t_len {
            assert_eq!(streamed[ch][t].to_bits(), full[ch * t_len + t].to_bits());
        }
    }
}

#[test]
fn channel_mix_streams_bit_exactly() {
    let (c, t_len) = (5, 11);
    let cm = ChannelMix::new("cm", c);
    let mut params = ParamSet::<f64>::new();
    cm.register(&mut params, 21).unwrap();
    randomize(&mut params, 0.7, 456);
    let x = rand_input(c, t_len, 10);

    let full = {
        let g = Graph::new();
        let b = Binder::new(&g, &params).unwrap();
        let xv = consts(&g, &[c, t_len], x.clone());
        let (out, _) = cm.fwd_with_state(&b, xv, None).unwrap();
        g.value(out).data().to_vec()
    };

    let mut carried: Option<Tensor<f64>> = None;
    let mut streamed: Vec<Vec<f64>> = vec![Vec::new(); c];
    for (lo, hi) in [(0, 1), (1, 7), (7, 11)] {
        let g = Graph::new();
        let b = Binder::new(&g, &params).unwrap();
        let span = hi - lo;
        let xr = &x;
        let chunk: Vec<f64> =
            (0..c).flat_map(|ch| (lo..hi).map(move |t| xr[ch * t_len + t])).collect();
        let xv = consts(&g, &[c, span], chunk);
        let (out, col) = cm.fwd_with_state(&b, xv, carried.as_ref()).unwrap();
        let vals = g.value(out);
        for ch in 0..c {
            streamed[ch].extend_from_slice(&vals.data()[ch * span..(ch + 1) * span]);
        }
        carried = Some(col);
    }

    for ch in 0..c {
        for t in 0..t_len {
            assert_eq!(streamed[ch][t].to_bits(), full[ch * t_len + t].to_bits());
        }
    }
}

#[test]
fn fresh_mixers_are_silent() {
    // output projections start at zero, so residual blocks start as identity
    let (c, t_len) = (4, 9);
    let tm = TimeMix::new("tm", c, false);
    let cm = ChannelMix::new("cm", c);
    let mut params = ParamSet::<f64>::new();
    tm.register(&mut params, 31).unwrap();
    cm.register(&mut params, 31).unwrap();

    let g = Graph::new();
    let b = Binder::new(&g, &params).unwrap();
    let xv = consts(&g, &[c, t_len], rand_input(c, t_len, 77));
    assert!(g.value(tm.fwd(&b, xv).unwrap()).data().iter().all(|v| *v == 0.0));
    assert!(g.value(cm.fwd(&b, xv).unwrap()).data().iter().all(|v| *v == 0.0));
}
