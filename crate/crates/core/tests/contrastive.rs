use std::path::Path;

use kgstale_core::kgdata::{load_triples, Split, VocabMode};
use kgstale_core::numcore::{Adam, AdamState, Tape, Var};
use kgstale_core::r2n_contrast::{build_r2n, ContrastiveModel};
use kgstale_core::Rng;

#[test]
fn loss_falls_on_the_nations_relation_graph() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/nations/train.txt");
    let kg = load_triples(&path, VocabMode::Grow).unwrap();
    let facts: Vec<_> = kg.split(Split::Train).map(|f| f.triple()).collect();
    let adj = build_r2n(kg.num_entities(), kg.num_relations(), &facts).unwrap().normalized();

    for seed in [0, 1, 2] {
        let mut rng = Rng::new(seed);
        let relations = rng.glorot(kg.num_relations(), 16);
        let mut model = ContrastiveModel::new(16, 16, 2, &mut rng);
        let adam = Adam::new(1e-3);
        let mut states: Vec<AdamState> = model.params().into_iter().map(AdamState::like).collect();
        let mut losses = Vec::new();
        for _ in 0..200 {
            let perm = rng.permutation(kg.num_relations());
            let mut tape = Tape::new();
            let vars: Vec<Var> = model.params().into_iter().map(|m| tape.param(m.clone())).collect();
            let a = tape.constant(adj.clone());
            let r = tape.constant(relations.clone());
            let loss = model.record_loss(&mut tape, &vars, a, r, &perm).unwrap();
            losses.push(tape.scalar(loss));
            let grads = tape.backward(loss).unwrap();
            for ((p, s), v) in model.params_mut().into_iter().zip(&mut states).zip(&vars) {
                adam.step(p, &grads.wrt(*v), s).unwrap();
            }
        }
        let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = losses[190..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "seed {seed}: {head} -> {tail}");
    }
}
