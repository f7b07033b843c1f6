use super::{FactGraph, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng, Tape, Var};

/// How the outputs of the heads are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadMode {
    Concat,
    Average,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayer {
    /// Per head, `(2 * entity_dim + relation_dim) x fact_dim`.
    pub theta1: Vec<Matrix>,
    /// Per head, `fact_dim x 1`.
    pub theta2: Vec<Matrix>,
    /// `relation_dim x relation_out`.
    pub relation_map: Matrix,
    pub mode: HeadMode,
}

impl AttentionLayer {
    pub fn new(
        entity_dim: usize,
        relation_dim: usize,
        fact_dim: usize,
        heads: usize,
        relation_out: usize,
        mode: HeadMode,
        rng: &mut Rng,
    ) -> Self {
        let mut theta1 = Vec::with_capacity(heads);
        let mut theta2 = Vec::with_capacity(heads);
        for _ in 0..heads {
            theta1.push(rng.glorot(2 * entity_dim + relation_dim, fact_dim));
            theta2.push(rng.glorot(fact_dim, 1));
        }
        Self {
            theta1,
            theta2,
            relation_map: rng.glorot(relation_dim, relation_out),
            mode,
        }
    }

    pub fn heads(&self) -> usize {
        self.theta1.len()
    }

    pub fn fact_dim(&self) -> usize {
        self.theta1.first().map_or(0, Matrix::cols)
    }

    pub fn out_dim(&self) -> usize {
        match self.mode {
            HeadMode::Concat => self.heads() * self.fact_dim(),
            HeadMode::Average => self.fact_dim(),
        }
    }

    /// `theta1, theta2` for each head, then the relation map.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(2 * self.heads() + 1);
        for (a, b) in self.theta1.iter().zip(&self.theta2) {
            out.push(a);
            out.push(b);
        }
        out.push(&self.relation_map);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(2 * self.heads() + 1);
        for (a, b) in self.theta1.iter_mut().zip(self.theta2.iter_mut()) {
            out.push(a);
            out.push(b);
        }
        out.push(&mut self.relation_map);
        out
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        entities: Var,
        relations: Var,
        graph: &FactGraph,
    ) -> Result<(Var, Var)> {
        let k = self.heads();
        let mut outs = Vec::with_capacity(k);
        for h in 0..k {
            let p = project(tape, vars[2 * h], entities, relations)?;
            let alpha = slot_attention(tape, &p, vars[2 * h + 1], graph)?;
            outs.push(aggregate(tape, &p, alpha, graph)?);
        }
        let combined = combine_heads(tape, self.mode, &outs)?;
        let e = tape.leaky_relu(combined, LEAKY_SLOPE);
        let r = tape.matmul(relations, vars[2 * k])?;
        Ok((e, r))
    }

    /// Attention weights of one head with the layer's weights recorded as
    /// constants.
    pub(crate) fn head_forward_constant(
        &self,
        tape: &mut Tape,
        head: usize,
        entities: Var,
        relations: Var,
        graph: &FactGraph,
    ) -> Result<Var> {
        if head >= self.heads() {
            return Err(Error::Config(format!("head {head} of {}", self.heads())));
        }
        let t1 = tape.constant(self.theta1[head].clone());
        let t2 = tape.constant(self.theta2[head].clone());
        let p = project(tape, t1, entities, relations)?;
        slot_attention(tape, &p, t2, graph)
    }
}

/// The fact weight applied to each table: `[e_h | r | e_t] W` splits into
/// `e_h W_h + r W_r + e_t W_t`, so only table-sized products are formed.
struct Projected {
    head: Var,
    relation: Var,
    tail: Var,
}

fn project(tape: &mut Tape, theta1: Var, entities: Var, relations: Var) -> Result<Projected> {
    let de = tape.shape(entities).1;
    let dr = tape.shape(relations).1;
    let rows = tape.shape(theta1).0;
    if rows != 2 * de + dr {
        return Err(Error::Dimension(format!(
            "fact weight has {rows} rows, inputs need 2*{de}+{dr}"
        )));
    }
    let w_head = tape.slice_rows(theta1, 0, de)?;
    let w_rel = tape.slice_rows(theta1, de, de + dr)?;
    let w_tail = tape.slice_rows(theta1, de + dr, rows)?;
    Ok(Projected {
        head: tape.matmul(entities, w_head)?,
        relation: tape.matmul(relations, w_rel)?,
        tail: tape.matmul(entities, w_tail)?,
    })
}

/// Attention weight of every incidence slot. The fact score is linear in
/// the fact embedding, so it is summed from per-table scores.
fn slot_attention(tape: &mut Tape, p: &Projected, theta2: Var, graph: &FactGraph) -> Result<Var> {
    let sh = tape.matmul(p.head, theta2)?;
    let sr = tape.matmul(p.relation, theta2)?;
    let st = tape.matmul(p.tail, theta2)?;
    let sh = tape.gather_rows(sh, graph.slot_heads())?;
    let sr = tape.gather_rows(sr, graph.slot_relations())?;
    let st = tape.gather_rows(st, graph.slot_tails())?;
    let logits = tape.add(sh, sr)?;
    let logits = tape.add(logits, st)?;
    let logits = tape.leaky_relu(logits, LEAKY_SLOPE);
    tape.segment_softmax(logits, graph.offsets())
}

/// Attention-weighted sum of incident fact embeddings, as three dense
/// products of per-entity weight matrices with the projected tables.
fn aggregate(tape: &mut Tape, p: &Projected, alpha: Var, graph: &FactGraph) -> Result<Var> {
    let offsets = graph.offsets();
    let n_e = graph.num_entities();
    let n_r = tape.shape(p.relation).0;
    let wh = tape.segment_scatter(alpha, graph.slot_heads(), offsets.clone(), n_e)?;
    let wr = tape.segment_scatter(alpha, graph.slot_relations(), offsets.clone(), n_r)?;
    let wt = tape.segment_scatter(alpha, graph.slot_tails(), offsets, n_e)?;
    let h = tape.matmul(wh, p.head)?;
    let r = tape.matmul(wr, p.relation)?;
    let t = tape.matmul(wt, p.tail)?;
    let out = tape.add(h, r)?;
    tape.add(out, t)
}

pub(crate) fn combine_heads(tape: &mut Tape, mode: HeadMode, outs: &[Var]) -> Result<Var> {
    match mode {
        HeadMode::Concat => tape.concat_cols(outs),
        HeadMode::Average => {
            let mut acc = outs[0];
            for &o in &outs[1..] {
                acc = tape.add(acc, o)?;
            }
            Ok(tape.scale(acc, 1.0 / outs.len() as f64))
        }
    }
}
