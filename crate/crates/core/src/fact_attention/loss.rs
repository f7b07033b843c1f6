use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kgdata::Triple;
use crate::numcore::{Matrix, Rng, Tape, Var};

/// Direction of the hinge in the margin loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MarginForm {
    /// `max(d_valid - d_invalid + margin, 0)`.
    #[default]
    Standard,
    /// `max(d_invalid - d_valid + margin, 0)`, for comparison runs only.
    Reversed,
}

/// Head-or-tail corruption of valid facts, filtered against known triples.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    rng: Rng,
    ratio: usize,
    num_entities: usize,
    filter: Arc<HashSet<Triple>>,
}

/// Draws per negative before a valid fact is given fewer negatives.
const MAX_DRAWS: usize = 64;

impl NegativeSampler {
    pub fn new(rng: Rng, ratio: usize, num_entities: usize, filter: Arc<HashSet<Triple>>) -> Self {
        Self {
            rng,
            ratio,
            num_entities,
            filter,
        }
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    /// Up to `ratio` negatives per valid fact, as `(valid index, negative)`.
    pub fn sample(&mut self, valid: &[Triple]) -> Vec<(usize, Triple)> {
        let mut out = Vec::with_capacity(valid.len() * self.ratio);
        if self.num_entities == 0 {
            return out;
        }
        for (i, &v) in valid.iter().enumerate() {
            for _ in 0..self.ratio {
                for _ in 0..MAX_DRAWS {
                    let e = self.rng.below(self.num_entities);
                    let c = if self.rng.coin() {
                        Triple::new(e, v.relation, v.tail)
                    } else {
                        Triple::new(v.head, v.relation, e)
                    };
                    if c != v && !self.filter.contains(&c) {
                        out.push((i, c));
                        break;
                    }
                }
            }
        }
        out
    }
}

/// Mean over `(valid, invalid)` pairs of the hinge on L1 translation
/// distances `|e_h + r - e_t|_1`.
pub fn gat_loss(
    tape: &mut Tape,
    entities: Var,
    relations: Var,
    valid: &[Triple],
    pairs: &[(usize, Triple)],
    margin: f64,
    form: MarginForm,
) -> Result<Var> {
    if pairs.is_empty() {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    if let Some(&(i, _)) = pairs.iter().find(|(i, _)| *i >= valid.len()) {
        return Err(Error::Dimension(format!(
            "negative paired with valid fact {i} of {}",
            valid.len()
        )));
    }
    let d_valid = distances(tape, entities, relations, valid)?;
    let negs: Vec<Triple> = pairs.iter().map(|p| p.1).collect();
    let d_invalid = distances(tape, entities, relations, &negs)?;
    let idx: Arc<[usize]> = pairs.iter().map(|p| p.0).collect();
    let d_valid = tape.gather_rows(d_valid, idx)?;
    let diff = match form {
        MarginForm::Standard => tape.sub(d_valid, d_invalid)?,
        MarginForm::Reversed => tape.sub(d_invalid, d_valid)?,
    };
    let shift = tape.constant(Matrix::filled(pairs.len(), 1, margin));
    let z = tape.add(diff, shift)?;
    let hinge = tape.relu(z);
    tape.mean(hinge)
}

fn distances(tape: &mut Tape, entities: Var, relations: Var, facts: &[Triple]) -> Result<Var> {
    let h: Arc<[usize]> = facts.iter().map(|f| f.head).collect();
    let r: Arc<[usize]> = facts.iter().map(|f| f.relation).collect();
    let t: Arc<[usize]> = facts.iter().map(|f| f.tail).collect();
    let eh = tape.gather_rows(entities, h)?;
    let rr = tape.gather_rows(relations, r)?;
    let et = tape.gather_rows(entities, t)?;
    let s = tape.add(eh, rr)?;
    let s = tape.sub(s, et)?;
    Ok(tape.row_l1(s))
}
