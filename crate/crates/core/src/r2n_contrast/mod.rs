//! Relation co-occurrence graph and the contrastive objective over it.
//!
//! Nodes are relation types. Two relation types are linked with weight `w`
//! when `w` distinct entities take part in facts of both types. A two-layer
//! GCN encodes projected relation features; a bilinear discriminator learns
//! to tell node states from those of a copy with shuffled features.

mod model;

pub use model::{corrupt_features, readout, ContrastiveModel, PRELU_INIT};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kgdata::{KnowledgeGraph, Split, Triple};
use crate::numcore::Matrix;

/// Symmetric, hollow co-occurrence counts between relation types.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct R2NGraph {
    n: usize,
    weights: Vec<u64>,
}

impl R2NGraph {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            weights: vec![0; n * n],
        }
    }

    pub fn num_relations(&self) -> usize {
        self.n
    }

    pub fn weight(&self, x: usize, z: usize) -> u64 {
        self.weights[x * self.n + z]
    }

    pub fn num_edges(&self) -> usize {
        (0..self.n)
            .map(|x| (x + 1..self.n).filter(|&z| self.weight(x, z) > 0).count())
            .sum()
    }

    /// `D^-1/2 (A + I) D^-1/2`, where `D` holds the row sums of `A + I`.
    pub fn normalized(&self) -> Matrix {
        let n = self.n;
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|x| {
                let deg = 1 + self.weights[x * n..(x + 1) * n].iter().sum::<u64>();
                1.0 / (deg as f64).sqrt()
            })
            .collect();
        let mut m = Matrix::zeros(n, n);
        for x in 0..n {
            for z in 0..n {
                let a = self.weight(x, z) + u64::from(x == z);
                if a > 0 {
                    m.set(x, z, a as f64 * inv_sqrt[x] * inv_sqrt[z]);
                }
            }
        }
        m
    }

    /// Upper-triangle edge list: `relation_x<TAB>relation_z<TAB>weight`.
    pub fn write_edge_list(&self, path: &Path, names: &[String]) -> Result<()> {
        if names.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} relation names for {} nodes",
                names.len(),
                self.n
            )));
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for x in 0..self.n {
            for z in x + 1..self.n {
                let c = self.weight(x, z);
                if c > 0 {
                    writeln!(w, "{}\t{}\t{c}", names[x], names[z]).map_err(|e| Error::io(path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Counts, for each pair of distinct relation types, the entities incident
/// to facts of both.
pub fn build_r2n(num_entities: usize, num_relations: usize, facts: &[Triple]) -> Result<R2NGraph> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); num_entities];
    for f in facts {
        if f.head >= num_entities || f.tail >= num_entities || f.relation >= num_relations {
            return Err(Error::Dimension(format!(
                "fact ({}, {}, {}) out of range",
                f.head, f.relation, f.tail
            )));
        }
        incident[f.head].push(f.relation);
        incident[f.tail].push(f.relation);
    }
    let mut g = R2NGraph::zeros(num_relations);
    let n = num_relations;
    for rels in &mut incident {
        rels.sort_unstable();
        rels.dedup();
        for (i, &x) in rels.iter().enumerate() {
            for &z in &rels[i + 1..] {
                g.weights[x * n + z] += 1;
                g.weights[z * n + x] += 1;
            }
        }
    }
    Ok(g)
}

/// [`build_r2n`] over the training split of `kg`.
pub fn build_r2n_from_kg(kg: &KnowledgeGraph) -> Result<R2NGraph> {
    let facts: Vec<Triple> = kg.split(Split::Train).map(|f| f.triple()).collect();
    build_r2n(kg.num_entities(), kg.num_relations(), &facts)
}
