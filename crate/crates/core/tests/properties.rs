mod support;

use std::sync::Arc;

use gsan_core::graph::{Graph, Split};
use gsan_core::model::{
    layer_norm, Activation, AttentionKind, GalParams, GalSpec, HeadMode,
};
use gsan_core::train::{accuracy, F1Counts};
use gsan_core::{Real, Tape, Tensor};
use proptest::prelude::*;
use support::*;

fn random_graph(seed: u64, n: usize, p: f64, f: usize) -> Graph {
    use rand::Rng;
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let x = randn(&[n, f], 1.0, &mut r);
    graph(n, &edges, x, vec![0; n], vec![Split::None; n])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scan_matches_step_loop(seed in any::<u64>(), t in 1usize..=32, f in 1usize..=8, k in 1usize..=16) {
        let s = scan_case(seed, t, f, k);
        let got = scan_tape(&s.u, &s.delta, &s.a, &s.b, &s.c, &s.d);
        let want = naive_scan(&s.u, &s.delta, &s.a, &s.b, &s.c, &s.d);
        prop_assert!(got.max_abs_diff(&want) <= 1e-12);
    }

    #[test]
    fn scan_is_linear_in_u(seed in any::<u64>(), t in 1usize..=32, f in 1usize..=8, k in 1usize..=16,
                           alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let s = scan_case(seed, t, f, k);
        let u2 = randn(&[t, f], 1.0, &mut rng(seed ^ 0x5a5a));
        let mut mix = s.u.map(|v| alpha as Real * v);
        mix.axpy(beta as Real, &u2);
        let lhs = scan_tape(&mix, &s.delta, &s.a, &s.b, &s.c, &s.d);
        let mut rhs = scan_tape(&s.u, &s.delta, &s.a, &s.b, &s.c, &s.d).map(|v| alpha as Real * v);
        rhs.axpy(beta as Real, &scan_tape(&u2, &s.delta, &s.a, &s.b, &s.c, &s.d));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-9);
    }

    #[test]
    fn scan_is_causal(seed in any::<u64>(), t in 2usize..=32, f in 1usize..=8, k in 1usize..=16, cut in 0usize..32) {
        let cut = cut % t;
        let s = scan_case(seed, t, f, k);
        let mut later = s.u.clone();
        for row in cut..t {
            for ch in 0..f {
                later.set(row, ch, later.get(row, ch) + 1.5);
            }
        }
        let y0 = scan_tape(&s.u, &s.delta, &s.a, &s.b, &s.c, &s.d);
        let y1 = scan_tape(&later, &s.delta, &s.a, &s.b, &s.c, &s.d);
        for row in 0..cut {
            prop_assert_eq!(y0.row(row), y1.row(row));
        }
    }

    #[test]
    fn zero_delta_is_cumulative_sum(seed in any::<u64>(), t in 1usize..=32, f in 1usize..=8, k in 1usize..=16) {
        let s = scan_case(seed, t, f, k);
        let zero = vec![0.0; f];
        let got = scan_tape(&s.u, &zero, &s.a, &s.b, &s.c, &s.d);
        let mut sum = vec![vec![0.0 as Real; k]; f];
        for row in 0..t {
            for ch in 0..f {
                let u = s.u.get(row, ch);
                let mut y = s.d[ch] * u;
                for st in 0..k {
                    sum[ch][st] += s.b.get(ch, st) * u;
                    y += s.c.get(ch, st) * sum[ch][st];
                }
                prop_assert_eq!(got.get(row, ch), y);
            }
        }
    }

    #[test]
    fn segment_softmax_is_a_distribution_and_shift_invariant(seed in any::<u64>(), len in 1usize..40, segs in 1usize..6, shift in -50.0f64..50.0) {
        use rand::Rng;
        let mut r = rng(seed);
        let seg: Arc<[usize]> = (0..len).map(|_| r.random_range(0..segs)).collect::<Vec<_>>().into();
        let scores = randn(&[len, 1], 3.0, &mut r);
        let run = |x: &Tensor| {
            let mut tape = Tape::new();
            let v = tape.constant(x.clone()).unwrap();
            let a = tape.segment_softmax(v, seg.clone(), segs).unwrap();
            tape.value(a).clone()
        };
        let a = run(&scores);
        let mut sums = vec![0.0; segs];
        for (e, &s) in seg.iter().enumerate() {
            prop_assert!(a.data()[e] > 0.0);
            sums[s] += a.data()[e];
        }
        for s in 0..segs {
            if seg.contains(&s) {
                prop_assert!((sums[s] - 1.0).abs() <= 1e-12);
            }
        }
        // shift only the scores of segment 0
        let shifted = Tensor::new(vec![len, 1], scores.data().iter().zip(seg.iter())
            .map(|(&v, &s)| if s == 0 { v + shift as Real } else { v }).collect()).unwrap();
        prop_assert!(run(&shifted).max_abs_diff(&a) <= 1e-12);
    }

    #[test]
    fn attention_ignores_non_neighbours(seed in any::<u64>(), n in 3usize..12, heads in 1usize..4, gatv2 in any::<bool>()) {
        let g = random_graph(seed, n, 0.3, 3);
        let mut r = rng(seed.wrapping_add(1));
        let fh = 2;
        let attention = if gatv2 { AttentionKind::Gatv2 } else { AttentionKind::Gat };
        let p = GalParams {
            w: randn(&[3, heads * fh], 1.0, &mut r),
            w_dst: gatv2.then(|| randn(&[3, heads * fh], 1.0, &mut r)),
            att: randn(&[if gatv2 { fh } else { 2 * fh }, heads], 1.0, &mut r),
        };
        let spec = GalSpec { heads, hidden: fh, attention, activation: Activation::Elu, leaky_slope: 0.2,
                             head_mode: HeadMode::Concat, attn_dropout: 0.0 };
        let base = gal_out(&g, g.features(), &p, &spec);
        let adj = dense_adjacency(&g);
        for j in 0..n {
            let mut h = g.features().clone();
            for c in 0..3 {
                h.set(j, c, h.get(j, c) + 10.0);
            }
            let moved = gal_out(&g, &h, &p, &spec);
            for i in 0..n {
                if !adj[i][j] {
                    prop_assert_eq!(moved.row(i), base.row(i));
                }
            }
        }
    }

    #[test]
    fn layer_norm_standardizes_rows(seed in any::<u64>(), rows in 1usize..10, cols in 2usize..16, scale in 0.1f64..100.0) {
        let x = randn(&[rows, cols], scale, &mut rng(seed));
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone()).unwrap();
        let g = tape.constant(Tensor::full(&[cols], 1.0)).unwrap();
        let b = tape.constant(Tensor::zeros(&[cols])).unwrap();
        let y = layer_norm(&mut tape, xv, g, b).unwrap();
        let y = tape.value(y);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().sum::<Real>() / cols as Real;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / cols as Real;
            let out = y.row(r);
            let m = out.iter().sum::<Real>() / cols as Real;
            let v = out.iter().map(|v| (v - m) * (v - m)).sum::<Real>() / cols as Real;
            prop_assert!(m.abs() <= 1e-12);
            prop_assert!((v - var / (var + 1e-5)).abs() <= 1e-9);
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in any::<u64>(), n in 1usize..20, c in 1usize..5) {
        use rand::Rng;
        let mut r = rng(seed);
        let logits = randn(&[n, c], 1.0, &mut r);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let rows: Vec<usize> = (0..n).filter(|_| r.random_bool(0.7)).collect();
        let acc = accuracy(&logits, &labels, &rows);
        prop_assert!((0.0..=1.0).contains(&acc));
        let targets = randn(&[n, c], 1.0, &mut r).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let f1 = F1Counts::count(&logits, &targets, &rows, 0.5);
        prop_assert!((0.0..=1.0).contains(&f1.f1()));
        prop_assert!((0.0..=1.0).contains(&f1.label_accuracy()));
    }
}
