//! Multi-head attention over facts.
//!
//! Every fact `(h, r, t)` is embedded as `[e_h | r | e_t] * W1` per head.
//! Each entity scores the facts it takes part in (as head or as tail) with
//! `leaky_relu(f * w2)`, normalizes the scores with a softmax over that set,
//! and takes the weighted sum of the fact embeddings as its new embedding.
//! Hidden layers concatenate the heads, the last layer averages them.

mod graph;
mod layer;
mod loss;

pub use graph::FactGraph;
pub use layer::{AttentionLayer, HeadMode};
pub use loss::{gat_loss, MarginForm, NegativeSampler};

use crate::error::{Error, Result};
use crate::kgdata::Triple;
use crate::numcore::{Matrix, Rng, Tape, Var};

/// Negative slope of the activation used for attention logits and outputs.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub heads: usize,
    /// Output width of each head in the hidden (concatenating) layer.
    pub hidden_per_head: usize,
    /// Entity and relation width after the final layer.
    pub out_dim: usize,
    /// Give every entity an extra `(e, r_self, e)` fact with a learned relation.
    pub self_loop: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            heads: 2,
            hidden_per_head: 100,
            out_dim: 200,
            self_loop: true,
        }
    }
}

impl EncoderConfig {
    /// Hidden width that makes the concatenated layer `out_dim` wide.
    pub fn for_dim(dim: usize, heads: usize) -> Self {
        Self {
            heads,
            hidden_per_head: dim.div_ceil(heads.max(1)).max(1),
            out_dim: dim,
            self_loop: true,
        }
    }
}

/// Two stacked attention layers plus the optional self-loop relation row.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub layers: Vec<AttentionLayer>,
    pub self_relation: Option<Matrix>,
}

impl Encoder {
    pub fn new(entity_dim: usize, relation_dim: usize, cfg: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        if cfg.heads == 0 || cfg.hidden_per_head == 0 || cfg.out_dim == 0 {
            return Err(Error::Config(format!(
                "encoder needs positive heads and widths, got heads={} hidden={} out={}",
                cfg.heads, cfg.hidden_per_head, cfg.out_dim
            )));
        }
        let self_relation = cfg.self_loop.then(|| rng.glorot(1, relation_dim));
        let hidden = cfg.heads * cfg.hidden_per_head;
        let first = AttentionLayer::new(
            entity_dim,
            relation_dim,
            cfg.hidden_per_head,
            cfg.heads,
            hidden,
            HeadMode::Concat,
            rng,
        );
        let second = AttentionLayer::new(
            hidden,
            hidden,
            cfg.out_dim,
            cfg.heads,
            cfg.out_dim,
            HeadMode::Average,
            rng,
        );
        Ok(Self {
            layers: vec![first, second],
            self_relation,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, AttentionLayer::out_dim)
    }

    /// Parameters in binding order.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.self_relation.iter().collect();
        for l in &self.layers {
            out.extend(l.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.self_relation.iter_mut().collect();
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.self_relation.is_some() as usize
            + self.layers.iter().map(|l| l.params().len()).sum::<usize>()
    }

    /// Records the encoder on `tape`. `vars` holds one node per entry of
    /// [`Encoder::params`]. Returns final entity and relation nodes; the
    /// relation output has one row per real relation (the self-loop row is
    /// dropped).
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        entities: Var,
        relations: Var,
        graph: &FactGraph,
    ) -> Result<(Var, Var)> {
        if vars.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "encoder expects {} parameter nodes, got {}",
                self.num_params(),
                vars.len()
            )));
        }
        let n_rel = tape.shape(relations).0;
        let mut rest = vars;
        let mut r = relations;
        if self.self_relation.is_some() {
            r = tape.concat_rows(&[relations, rest[0]])?;
            rest = &rest[1..];
        }
        if graph.self_relation().is_some() != self.self_relation.is_some() {
            return Err(Error::Config(
                "fact graph and encoder disagree on self-loop facts".into(),
            ));
        }
        let mut e = entities;
        for layer in &self.layers {
            let k = layer.params().len();
            let (ne, nr) = layer.forward(tape, &rest[..k], e, r, graph)?;
            e = ne;
            r = nr;
            rest = &rest[k..];
        }
        if self.self_relation.is_some() {
            r = tape.slice_rows(r, 0, n_rel)?;
        }
        Ok((e, r))
    }

    /// Forward pass without gradients.
    pub fn encode(&self, entities: &Matrix, relations: &Matrix, graph: &FactGraph) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|m| tape.constant(m.clone())).collect();
        let e = tape.constant(entities.clone());
        let r = tape.constant(relations.clone());
        let (e, r) = self.forward(&mut tape, &vars, e, r, graph)?;
        Ok((tape.value(e).clone(), tape.value(r).clone()))
    }
}

/// `[e_h | r | e_t] * theta1` for one fact, computed directly.
pub fn fact_embed(theta1: &Matrix, entities: &Matrix, relations: &Matrix, fact: Triple) -> Result<Vec<f64>> {
    let (de, dr) = (entities.cols(), relations.cols());
    if theta1.rows() != 2 * de + dr {
        return Err(Error::Dimension(format!(
            "fact weight has {} rows, expected {}",
            theta1.rows(),
            2 * de + dr
        )));
    }
    if fact.head >= entities.rows() || fact.tail >= entities.rows() {
        return Err(Error::Dimension(format!(
            "entity id out of range for {} entities",
            entities.rows()
        )));
    }
    if fact.relation >= relations.rows() {
        return Err(Error::Dimension(format!(
            "relation id {} out of range for {} relations",
            fact.relation,
            relations.rows()
        )));
    }
    let x: Vec<f64> = entities
        .row(fact.head)
        .iter()
        .chain(relations.row(fact.relation))
        .chain(entities.row(fact.tail))
        .copied()
        .collect();
    Ok(Matrix::row_vector(&x).matmul(theta1)?.into_vec())
}

/// Softmax-normalized attention weights of one head, listed per entity in
/// the order of [`FactGraph::incident`].
pub fn attention_scores(
    layer: &AttentionLayer,
    head: usize,
    entities: &Matrix,
    relations: &Matrix,
    graph: &FactGraph,
) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let e = tape.constant(entities.clone());
    let r = tape.constant(relations.clone());
    let alpha = layer.head_forward_constant(&mut tape, head, e, r, graph)?;
    let a = tape.value(alpha).data();
    let off = graph.offsets();
    Ok(off.windows(2).map(|w| a[w[0]..w[1]].to_vec()).collect())
}

/// Aggregates per-head fact embeddings with per-head attention weights,
/// combines the heads by `mode` and applies the activation.
///
/// `weights[k][i]` lists the weights of entity `i`'s incident facts and
/// `fact_embeds[k]` has one row per fact of `graph`.
pub fn entity_update(
    mode: HeadMode,
    weights: &[Vec<Vec<f64>>],
    fact_embeds: &[Matrix],
    graph: &FactGraph,
) -> Result<Matrix> {
    if weights.len() != fact_embeds.len() || weights.is_empty() {
        return Err(Error::Dimension("one weight set per head embedding".into()));
    }
    let mut tape = Tape::new();
    let mut outs = Vec::with_capacity(weights.len());
    for (w, f) in weights.iter().zip(fact_embeds) {
        let flat: Vec<f64> = w.iter().flatten().copied().collect();
        let wv = tape.constant(Matrix::col_vector(&flat));
        let fv = tape.constant(f.clone());
        outs.push(tape.segment_weighted_sum(fv, wv, graph.slots(), graph.offsets())?);
    }
    let combined = layer::combine_heads(&mut tape, mode, &outs)?;
    let out = tape.leaky_relu(combined, LEAKY_SLOPE);
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests;
