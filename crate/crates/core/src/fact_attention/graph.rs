use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kgdata::Triple;

/// Facts seen by the encoder and, for every entity, the facts it takes part in.
///
/// With self-loops enabled, fact `num_facts + i` is `(i, r_self, i)` where
/// `r_self` is the extra relation row `num_relations`.
#[derive(Clone, Debug)]
pub struct FactGraph {
    num_entities: usize,
    num_relations: usize,
    self_loop: bool,
    heads: Arc<[usize]>,
    relations: Arc<[usize]>,
    tails: Arc<[usize]>,
    offsets: Arc<[usize]>,
    slots: Arc<[usize]>,
    // head, relation and tail of the fact in each slot
    slot_heads: Arc<[usize]>,
    slot_relations: Arc<[usize]>,
    slot_tails: Arc<[usize]>,
}

impl FactGraph {
    pub fn new(num_entities: usize, num_relations: usize, facts: &[Triple], self_loop: bool) -> Result<Self> {
        for f in facts {
            if f.head >= num_entities || f.tail >= num_entities || f.relation >= num_relations {
                return Err(Error::Dimension(format!(
                    "fact ({}, {}, {}) out of range for {num_entities} entities and {num_relations} relations",
                    f.head, f.relation, f.tail
                )));
            }
        }
        let mut all: Vec<Triple> = facts.to_vec();
        if self_loop {
            all.extend((0..num_entities).map(|i| Triple::new(i, num_relations, i)));
        }
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); num_entities];
        for (k, f) in all.iter().enumerate() {
            incident[f.head].push(k);
            if f.tail != f.head {
                incident[f.tail].push(k);
            }
        }
        let mut offsets = Vec::with_capacity(num_entities + 1);
        offsets.push(0);
        let mut slots = Vec::new();
        for list in &incident {
            slots.extend_from_slice(list);
            offsets.push(slots.len());
        }
        let per_slot = |pick: fn(&Triple) -> usize| -> Arc<[usize]> { slots.iter().map(|&k| pick(&all[k])).collect() };
        let slot_heads = per_slot(|f| f.head);
        let slot_relations = per_slot(|f| f.relation);
        let slot_tails = per_slot(|f| f.tail);
        Ok(Self {
            num_entities,
            num_relations,
            self_loop,
            heads: all.iter().map(|f| f.head).collect(),
            relations: all.iter().map(|f| f.relation).collect(),
            tails: all.iter().map(|f| f.tail).collect(),
            offsets: offsets.into(),
            slots: slots.into(),
            slot_heads,
            slot_relations,
            slot_tails,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    /// Number of facts including self-loops.
    pub fn num_facts(&self) -> usize {
        self.heads.len()
    }

    /// Relation row used by self-loop facts, if enabled.
    pub fn self_relation(&self) -> Option<usize> {
        self.self_loop.then_some(self.num_relations)
    }

    pub fn fact(&self, k: usize) -> Triple {
        Triple::new(self.heads[k], self.relations[k], self.tails[k])
    }

    /// Fact indices incident to entity `i`.
    pub fn incident(&self, i: usize) -> &[usize] {
        &self.slots[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Segment boundaries into [`FactGraph::slots`], one segment per entity.
    pub(crate) fn offsets(&self) -> Arc<[usize]> {
        Arc::clone(&self.offsets)
    }

    pub(crate) fn slots(&self) -> Arc<[usize]> {
        Arc::clone(&self.slots)
    }

    pub(crate) fn slot_heads(&self) -> Arc<[usize]> {
        Arc::clone(&self.slot_heads)
    }

    pub(crate) fn slot_relations(&self) -> Arc<[usize]> {
        Arc::clone(&self.slot_relations)
    }

    pub(crate) fn slot_tails(&self) -> Arc<[usize]> {
        Arc::clone(&self.slot_tails)
    }
}
