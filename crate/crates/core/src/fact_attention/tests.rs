#![allow(clippy::needless_range_loop)]

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

use super::*;
use crate::numcore::gradcheck::{check_gradients, random_matrix};

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

fn small_cfg(heads: usize, self_loop: bool) -> EncoderConfig {
    EncoderConfig {
        heads,
        hidden_per_head: 3,
        out_dim: 4,
        self_loop,
    }
}

fn fixture_facts() -> Vec<Triple> {
    vec![
        Triple::new(0, 0, 1),
        Triple::new(1, 1, 2),
        Triple::new(2, 2, 0),
        Triple::new(0, 1, 3),
        Triple::new(3, 0, 3),
    ]
}

#[test]
fn fact_embed_identity_weight() {
    let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    let r = Matrix::zeros(1, 2);
    let f = fact_embed(&Matrix::identity(6), &e, &r, Triple::new(0, 0, 1)).unwrap();
    assert_eq!(f, vec![1.0, 2.0, 0.0, 0.0, 3.0, 4.0]);
}

#[test]
fn fact_embed_zero_weight() {
    let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    let r = Matrix::from_rows(&[vec![5.0, 6.0]]);
    let f = fact_embed(&Matrix::zeros(6, 3), &e, &r, Triple::new(1, 0, 0)).unwrap();
    assert_eq!(f, vec![0.0; 3]);
}

#[test]
fn fact_embed_matches_loop() {
    let mut rng = Rng::new(5);
    let e = random_matrix(rng.inner_mut(), 3, 2);
    let r = random_matrix(rng.inner_mut(), 2, 2);
    let w = random_matrix(rng.inner_mut(), 6, 2);
    let fact = Triple::new(2, 1, 0);
    let x = [e.get(2, 0), e.get(2, 1), r.get(1, 0), r.get(1, 1), e.get(0, 0), e.get(0, 1)];
    let got = fact_embed(&w, &e, &r, fact).unwrap();
    for c in 0..2 {
        let want: f64 = (0..6).map(|k| x[k] * w.get(k, c)).sum();
        assert!((got[c] - want).abs() < 1e-15);
    }
    assert!(fact_embed(&w, &e, &r, Triple::new(3, 0, 0)).is_err());
    assert!(fact_embed(&w, &e, &r, Triple::new(0, 2, 0)).is_err());
}

fn single_head_layer(rng: &mut Rng, de: usize, dr: usize, df: usize) -> AttentionLayer {
    AttentionLayer::new(de, dr, df, 1, dr, HeadMode::Concat, rng)
}

#[test]
fn zero_score_weight_gives_uniform_attention() {
    let mut rng = Rng::new(1);
    let mut layer = single_head_layer(&mut rng, 2, 2, 3);
    layer.theta2[0] = Matrix::zeros(3, 1);
    let g = FactGraph::new(4, 3, &fixture_facts(), false).unwrap();
    let e = random_matrix(rng.inner_mut(), 4, 2);
    let r = random_matrix(rng.inner_mut(), 3, 2);
    let scores = attention_scores(&layer, 0, &e, &r, &g).unwrap();
    for (i, s) in scores.iter().enumerate() {
        assert_eq!(s.len(), g.incident(i).len());
        for &a in s {
            assert!((a - 1.0 / s.len() as f64).abs() < 1e-15);
        }
    }
}

#[test]
fn single_incident_fact_has_weight_one() {
    let mut rng = Rng::new(2);
    let layer = single_head_layer(&mut rng, 2, 2, 3);
    let g = FactGraph::new(3, 1, &[Triple::new(0, 0, 1)], false).unwrap();
    let e = random_matrix(rng.inner_mut(), 3, 2);
    let r = random_matrix(rng.inner_mut(), 1, 2);
    let scores = attention_scores(&layer, 0, &e, &r, &g).unwrap();
    assert_eq!(scores[0], vec![1.0]);
    assert_eq!(scores[1], vec![1.0]);
    assert!(scores[2].is_empty());
}

/// Scalar-loop attention for a single head.
fn oracle_attention(w1: &Matrix, w2: &Matrix, e: &Matrix, r: &Matrix, facts: &[Triple], n: usize) -> Vec<Vec<f64>> {
    let embed = |f: &Triple| -> Vec<f64> {
        let x: Vec<f64> = e.row(f.head).iter().chain(r.row(f.relation)).chain(e.row(f.tail)).copied().collect();
        (0..w1.cols()).map(|c| (0..x.len()).map(|k| x[k] * w1.get(k, c)).sum()).collect()
    };
    let logit = |f: &Triple| -> f64 {
        let v = embed(f);
        leaky((0..v.len()).map(|k| v[k] * w2.get(k, 0)).sum())
    };
    (0..n)
        .map(|i| {
            let ls: Vec<f64> = facts
                .iter()
                .filter(|f| f.head == i || f.tail == i)
                .map(logit)
                .collect();
            let z: f64 = ls.iter().map(|l| l.exp()).sum();
            ls.iter().map(|l| l.exp() / z).collect()
        })
        .collect()
}

#[test]
fn three_fact_attention_matches_scalar_oracle() {
    let facts = [Triple::new(0, 0, 1), Triple::new(0, 1, 2), Triple::new(2, 0, 0)];
    let mut rng = Rng::new(3);
    let layer = single_head_layer(&mut rng, 2, 2, 2);
    let g = FactGraph::new(3, 2, &facts, false).unwrap();
    let e = random_matrix(rng.inner_mut(), 3, 2);
    let r = random_matrix(rng.inner_mut(), 2, 2);
    let got = attention_scores(&layer, 0, &e, &r, &g).unwrap();
    let want = oracle_attention(&layer.theta1[0], &layer.theta2[0], &e, &r, &facts, 3);
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
    assert_eq!(got[0].len(), 3);
}

#[test]
fn single_fact_update_returns_fact_embedding() {
    let g = FactGraph::new(2, 1, &[Triple::new(0, 0, 1)], false).unwrap();
    let f = Matrix::from_rows(&[vec![0.5, 1.5, 2.0]]);
    let w = vec![vec![vec![1.0], vec![1.0]]];
    let out = entity_update(HeadMode::Concat, &w, std::slice::from_ref(&f), &g).unwrap();
    assert_eq!(out.row(0), f.row(0));
    assert_eq!(out.row(1), f.row(0));
}

#[test]
fn identical_heads_concatenate_to_repetition() {
    let g = FactGraph::new(2, 1, &[Triple::new(0, 0, 1), Triple::new(1, 0, 0)], false).unwrap();
    let f = Matrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]);
    let w1 = vec![vec![0.25, 0.75], vec![0.6, 0.4]];
    let out = entity_update(HeadMode::Concat, &[w1.clone(), w1], &[f.clone(), f], &g).unwrap();
    assert_eq!(out.cols(), 4);
    for i in 0..2 {
        assert_eq!(out.row(i)[..2], out.row(i)[2..]);
    }
}

#[test]
fn two_fact_update_matches_hand_computation() {
    // entity 0 sees both facts, entity 1 sees both facts, in fact order
    let g = FactGraph::new(2, 1, &[Triple::new(0, 0, 1), Triple::new(1, 0, 0)], false).unwrap();
    let f = Matrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]);
    let w = vec![vec![0.25, 0.75], vec![0.6, 0.4]];
    let out = entity_update(HeadMode::Average, &[w.clone(), w], &[f.clone(), f], &g).unwrap();
    let e0 = [leaky(0.25 * 1.0 + 0.75 * 3.0), leaky(0.25 * -2.0 + 0.75 * 0.5)];
    let e1 = [leaky(0.6 * 1.0 + 0.4 * 3.0), leaky(0.6 * -2.0 + 0.4 * 0.5)];
    for c in 0..2 {
        assert!((out.get(0, c) - e0[c]).abs() < 1e-15);
        assert!((out.get(1, c) - e1[c]).abs() < 1e-15);
    }
}

fn loss_of(e: &Matrix, r: &Matrix, valid: &[Triple], pairs: &[(usize, Triple)], margin: f64) -> f64 {
    let mut tape = Tape::new();
    let ev = tape.constant(e.clone());
    let rv = tape.constant(r.clone());
    let l = gat_loss(&mut tape, ev, rv, valid, pairs, margin, MarginForm::Standard).unwrap();
    tape.scalar(l)
}

#[test]
fn satisfied_margin_costs_nothing() {
    let e = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]);
    let r = Matrix::from_rows(&[vec![1.0]]);
    // valid (0,0,1): d = 0; invalid (0,0,2): d = 2 = margin + 1
    let l = loss_of(&e, &r, &[Triple::new(0, 0, 1)], &[(0, Triple::new(0, 0, 2))], 1.0);
    assert_eq!(l, 0.0);
}

#[test]
fn equal_distances_cost_the_margin() {
    let e = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![-1.0]]);
    let r = Matrix::from_rows(&[vec![0.0]]);
    let l = loss_of(&e, &r, &[Triple::new(0, 0, 1)], &[(0, Triple::new(0, 0, 2))], 1.5);
    assert_eq!(l, 1.5);
}

#[test]
fn margin_loss_matches_pair_enumeration() {
    let mut rng = Rng::new(11);
    let e = random_matrix(rng.inner_mut(), 4, 3);
    let r = random_matrix(rng.inner_mut(), 2, 3);
    let valid = [Triple::new(0, 0, 1), Triple::new(1, 1, 2), Triple::new(2, 0, 3)];
    let filter: HashSet<Triple> = valid.iter().copied().collect();
    let mut sampler = NegativeSampler::new(Rng::new(4), 2, 4, Arc::new(filter));
    let pairs = sampler.sample(&valid);
    assert_eq!(pairs.len(), 6);
    let d = |t: &Triple| -> f64 {
        (0..3).map(|c| (e.get(t.head, c) + r.get(t.relation, c) - e.get(t.tail, c)).abs()).sum()
    };
    let mut total = 0.0;
    for (i, v) in valid.iter().enumerate() {
        for (_, n) in pairs.iter().filter(|p| p.0 == i) {
            total += (d(v) - d(n) + 1.0).max(0.0);
        }
    }
    let got = loss_of(&e, &r, &valid, &pairs, 1.0);
    assert!((got - total / 6.0).abs() < 1e-12);
}

#[test]
fn reversed_form_swaps_the_hinge() {
    let e = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]);
    let r = Matrix::from_rows(&[vec![1.0]]);
    let mut tape = Tape::new();
    let ev = tape.constant(e);
    let rv = tape.constant(r);
    let pairs = [(0, Triple::new(0, 0, 2))];
    let l = gat_loss(&mut tape, ev, rv, &[Triple::new(0, 0, 1)], &pairs, 1.0, MarginForm::Reversed).unwrap();
    assert_eq!(tape.scalar(l), 3.0);
}

#[test]
fn sampler_never_emits_known_triples() {
    let valid = fixture_facts();
    let filter: HashSet<Triple> = valid.iter().copied().collect();
    let mut sampler = NegativeSampler::new(Rng::new(8), 3, 4, Arc::new(filter.clone()));
    for _ in 0..20 {
        for (i, n) in sampler.sample(&valid) {
            assert!(!filter.contains(&n));
            let v = valid[i];
            assert_eq!(n.relation, v.relation);
            assert!(n.head == v.head || n.tail == v.tail);
        }
    }
}

#[test]
fn default_encoder_shapes() {
    let cfg = EncoderConfig::default();
    assert_eq!(cfg.heads, 2);
    let mut rng = Rng::new(0);
    let enc = Encoder::new(200, 200, &cfg, &mut rng).unwrap();
    assert_eq!(enc.layers[0].out_dim(), 200);
    assert_eq!(enc.out_dim(), 200);
    let facts = fixture_facts();
    let g = FactGraph::new(5, 3, &facts, true).unwrap();
    let e0 = random_matrix(rng.inner_mut(), 5, 200);
    let r0 = random_matrix(rng.inner_mut(), 3, 200);
    let (e, r) = enc.encode(&e0, &r0, &g).unwrap();
    assert_eq!(e.shape(), (5, 200));
    assert_eq!(r.shape(), (3, 200));
}

#[test]
fn isolated_entity_gets_activation_of_zero() {
    let mut rng = Rng::new(6);
    let enc = Encoder::new(3, 3, &small_cfg(2, false), &mut rng).unwrap();
    // entity 4 has no facts
    let g = FactGraph::new(5, 3, &fixture_facts()[..3], false).unwrap();
    let e0 = random_matrix(rng.inner_mut(), 5, 3);
    let r0 = random_matrix(rng.inner_mut(), 3, 3);
    let (e, _) = enc.encode(&e0, &r0, &g).unwrap();
    assert!(e.row(4).iter().all(|&x| x == leaky(0.0)));
    assert!(e.row(3).iter().all(|&x| x == 0.0));
}

#[test]
fn attention_sums_to_one_per_entity_and_head() {
    let mut rng = Rng::new(7);
    let enc = Encoder::new(3, 3, &small_cfg(2, true), &mut rng).unwrap();
    let g = FactGraph::new(4, 3, &fixture_facts(), true).unwrap();
    let e0 = random_matrix(rng.inner_mut(), 4, 3);
    let r0 = random_matrix(rng.inner_mut(), 4, 3);
    for h in 0..2 {
        for s in attention_scores(&enc.layers[0], h, &e0, &r0, &g).unwrap() {
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            assert!(s.iter().all(|&a| a > 0.0 && a < 1.0 || s.len() == 1));
        }
    }
}

#[test]
fn self_loop_mismatch_is_an_error() {
    let mut rng = Rng::new(7);
    let enc = Encoder::new(3, 3, &small_cfg(2, true), &mut rng).unwrap();
    let g = FactGraph::new(4, 3, &fixture_facts(), false).unwrap();
    let e0 = Matrix::zeros(4, 3);
    let r0 = Matrix::zeros(3, 3);
    assert!(enc.encode(&e0, &r0, &g).is_err());
}

#[test]
fn fact_graph_rejects_out_of_range_ids() {
    assert!(FactGraph::new(2, 1, &[Triple::new(0, 1, 1)], false).is_err());
    assert!(FactGraph::new(2, 1, &[Triple::new(0, 0, 2)], false).is_err());
}

#[test]
fn encoder_and_margin_loss_gradients_match_finite_differences() {
    let mut rng = Rng::new(13);
    let enc = Encoder::new(3, 3, &small_cfg(2, true), &mut rng).unwrap();
    let facts = fixture_facts();
    let g = FactGraph::new(4, 3, &facts, true).unwrap();
    let filter: HashSet<Triple> = facts.iter().copied().collect();
    let pairs = NegativeSampler::new(Rng::new(2), 2, 4, Arc::new(filter)).sample(&facts);
    let mut params: Vec<Matrix> = vec![random_matrix(rng.inner_mut(), 4, 3), random_matrix(rng.inner_mut(), 3, 3)];
    params.extend(enc.params().into_iter().cloned());
    let err = check_gradients(&params, |tape, vars| {
        let (e, r) = enc.forward(tape, &vars[2..], vars[0], vars[1], &g)?;
        gat_loss(tape, e, r, &facts, &pairs, 1.0, MarginForm::Standard)
    })
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn encode_is_deterministic() {
    let build = || {
        let mut rng = Rng::new(21);
        let enc = Encoder::new(3, 3, &small_cfg(2, true), &mut rng).unwrap();
        let e0 = random_matrix(rng.inner_mut(), 4, 3);
        let r0 = random_matrix(rng.inner_mut(), 3, 3);
        let g = FactGraph::new(4, 3, &fixture_facts(), true).unwrap();
        enc.encode(&e0, &r0, &g).unwrap()
    };
    assert_eq!(build(), build());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fact_order_does_not_change_output(seed in 0u64..1000, swaps in proptest::collection::vec((0usize..5, 0usize..5), 0..8)) {
        let mut rng = Rng::new(seed);
        let enc = Encoder::new(3, 3, &small_cfg(2, true), &mut rng).unwrap();
        let e0 = random_matrix(rng.inner_mut(), 4, 3);
        let r0 = random_matrix(rng.inner_mut(), 3, 3);
        let facts = fixture_facts();
        let mut shuffled = facts.clone();
        for (a, b) in swaps {
            shuffled.swap(a, b);
        }
        let g1 = FactGraph::new(4, 3, &facts, true).unwrap();
        let g2 = FactGraph::new(4, 3, &shuffled, true).unwrap();
        let (a, ra) = enc.encode(&e0, &r0, &g1).unwrap();
        let (b, rb) = enc.encode(&e0, &r0, &g2).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert_eq!(ra, rb);
    }
}
