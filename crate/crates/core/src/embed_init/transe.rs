use std::collections::HashSet;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kgdata::Triple;
use crate::numcore::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            margin: 1.0,
            epochs: 50,
            lr: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransEModel {
    pub entities: EmbeddingTable,
    pub relations: EmbeddingTable,
    /// Mean hinge loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TransEModel {
    pub fn distance(&self, t: Triple) -> f64 {
        l1_distance(
            self.entities.row(t.head),
            self.relations.row(t.relation),
            self.entities.row(t.tail),
        )
    }
}

/// `||h + r - t||_1`.
pub fn l1_distance(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((h, r), t)| (h + r - t).abs())
        .sum()
}

/// Draws up to this many corruptions per positive before giving up on it.
const MAX_CORRUPTION_DRAWS: usize = 32;

/// Trains TransE with plain SGD on the L1 margin ranking loss
/// `max(0, margin + d(h, r, t) - d(h', r, t'))`.
///
/// Each positive gets one negative by replacing its head or tail (fair coin)
/// with a uniformly drawn entity; negatives found in `known` are redrawn.
/// Entity rows are L2-normalized at the end of every epoch.
pub fn train_transe(
    triples: &[Triple],
    num_entities: usize,
    num_relations: usize,
    known: &HashSet<Triple>,
    cfg: &TransEConfig,
    rng: &mut Rng,
) -> Result<TransEModel> {
    if triples.is_empty() {
        return Err(Error::Empty("TransE needs at least one training fact".into()));
    }
    if cfg.dim == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    let mut ent = EmbeddingTable::uniform(num_entities, cfg.dim, rng);
    let mut rel = EmbeddingTable::uniform(num_relations, cfg.dim, rng);
    ent.normalize_rows();

    let dim = cfg.dim;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut g_pos = vec![0.0; dim];
    let mut g_neg = vec![0.0; dim];

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let pos = triples[i];
            let Some(neg) = corrupt(pos, num_entities, known, rng) else {
                continue;
            };
            let (e, r) = (&ent.values, &rel.values);
            let d_pos = residual_sign(e.row(pos.head), r.row(pos.relation), e.row(pos.tail), &mut g_pos);
            let d_neg = residual_sign(e.row(neg.head), r.row(neg.relation), e.row(neg.tail), &mut g_neg);
            let loss = cfg.margin + d_pos - d_neg;
            if loss <= 0.0 {
                continue;
            }
            total += loss;
            let lr = cfg.lr;
            // d(pos) decreases, d(neg) increases
            apply(ent.values.row_mut(pos.head), &g_pos, -lr);
            apply(ent.values.row_mut(pos.tail), &g_pos, lr);
            apply(rel.values.row_mut(pos.relation), &g_pos, -lr);
            apply(ent.values.row_mut(neg.head), &g_neg, lr);
            apply(ent.values.row_mut(neg.tail), &g_neg, -lr);
            apply(rel.values.row_mut(neg.relation), &g_neg, lr);
        }
        ent.normalize_rows();
        let mean = total / triples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch_losses.len() + 1,
                detail: "TransE loss is not finite".into(),
            });
        }
        epoch_losses.push(mean);
    }
    Ok(TransEModel {
        entities: ent,
        relations: rel,
        epoch_losses,
    })
}

fn corrupt(pos: Triple, n: usize, known: &HashSet<Triple>, rng: &mut Rng) -> Option<Triple> {
    for _ in 0..MAX_CORRUPTION_DRAWS {
        let e = rng.below(n);
        let cand = if rng.coin() {
            Triple::new(e, pos.relation, pos.tail)
        } else {
            Triple::new(pos.head, pos.relation, e)
        };
        if cand != pos && !known.contains(&cand) {
            return Some(cand);
        }
    }
    None
}

/// Writes `sign(h + r - t)` into `out` and returns the L1 distance.
fn residual_sign(h: &[f64], r: &[f64], t: &[f64], out: &mut [f64]) -> f64 {
    let mut d = 0.0;
    for (((o, h), r), t) in out.iter_mut().zip(h).zip(r).zip(t) {
        let v = h + r - t;
        d += v.abs();
        *o = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    d
}

fn apply(row: &mut [f64], g: &[f64], step: f64) {
    for (x, g) in row.iter_mut().zip(g) {
        *x += step * g;
    }
}
