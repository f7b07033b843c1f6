//! Injection of labeled outdated facts.
//!
//! For a base fact `(h, r, t)` the candidate replacement relations are
//! `R* = (R_h ∪ R_t) \ R_(h,t)`, where `R_e` is the set of relation types on
//! facts touching entity `e` and `R_(h,t)` the set of relation types already
//! linking `h` to `t`. All three sets are computed over training facts only.

use std::collections::{BTreeSet, HashMap};

use super::{Fact, KnowledgeGraph, Label, Split, Triple};
use crate::error::{Error, Result};
use crate::numcore::Rng;

/// How the injection fraction is applied to a split of `n` original facts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FractionBasis {
    /// Outdated facts make up `fraction` of the split after injection:
    /// `ceil(fraction * n / (1 - fraction))` are added.
    #[default]
    PostInjection,
    /// `ceil(fraction * n)` are added.
    PreInjection,
}

impl FractionBasis {
    pub fn target(self, fraction: f64, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let raw = match self {
            FractionBasis::PostInjection => fraction * n as f64 / (1.0 - fraction),
            FractionBasis::PreInjection => fraction * n as f64,
        };
        // guard against 398.00000000000006-style float noise before ceil
        (raw - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthesisReport {
    /// Outdated facts added to train, test and valid.
    pub added: [usize; 3],
    /// Draws rejected because `R*` was empty or the triple already existed.
    pub rejected: usize,
}

/// Relation sets per entity and per ordered entity pair.
#[derive(Clone, Debug, Default)]
pub struct RelationIndex {
    by_entity: Vec<BTreeSet<usize>>,
    by_pair: HashMap<(usize, usize), BTreeSet<usize>>,
}

impl RelationIndex {
    pub fn build<'a>(num_entities: usize, facts: impl IntoIterator<Item = &'a Fact>) -> Self {
        let mut idx = RelationIndex {
            by_entity: vec![BTreeSet::new(); num_entities],
            by_pair: HashMap::new(),
        };
        for f in facts {
            idx.by_entity[f.head].insert(f.relation);
            idx.by_entity[f.tail].insert(f.relation);
            idx.by_pair
                .entry((f.head, f.tail))
                .or_default()
                .insert(f.relation);
        }
        idx
    }

    pub fn of_entity(&self, e: usize) -> &BTreeSet<usize> {
        &self.by_entity[e]
    }

    pub fn of_pair(&self, h: usize, t: usize) -> Option<&BTreeSet<usize>> {
        self.by_pair.get(&(h, t))
    }

    /// `R*` for the pair, in ascending relation id order.
    pub fn candidates(&self, h: usize, t: usize) -> Vec<usize> {
        let linked = self.of_pair(h, t);
        self.by_entity[h]
            .union(&self.by_entity[t])
            .filter(|r| linked.is_none_or(|s| !s.contains(r)))
            .copied()
            .collect()
    }
}

/// Adds outdated facts to every split independently.
///
/// Base facts are the split's current facts, drawn uniformly with
/// replacement. Draws with an empty `R*`, or whose generated triple already
/// exists anywhere in the graph, are rejected and redrawn; after
/// `100 * target` draws for a split the call fails with
/// [`Error::SynthesisExhausted`].
pub fn synthesize_outdated(
    kg: &KnowledgeGraph,
    fraction: f64,
    basis: FractionBasis,
    rng: &mut Rng,
) -> Result<(KnowledgeGraph, SynthesisReport)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "outdated fraction must be in (0, 1), got {fraction}"
        )));
    }
    let index = RelationIndex::build(kg.num_entities(), kg.split(Split::Train));
    let mut out = kg.clone();
    let mut report = SynthesisReport::default();

    for (slot, split) in Split::ALL.into_iter().enumerate() {
        let base: Vec<Triple> = kg
            .split(split)
            .filter(|f| f.label == Label::Current)
            .map(Fact::triple)
            .collect();
        let target = basis.target(fraction, base.len());
        let max_draws = target * 100;
        let mut added = 0;
        let mut draws = 0;
        while added < target {
            if draws == max_draws {
                return Err(Error::SynthesisExhausted {
                    split: split.as_str(),
                    achieved: added,
                    target,
                });
            }
            draws += 1;
            let b = base[rng.below(base.len())];
            let cands = index.candidates(b.head, b.tail);
            if cands.is_empty() {
                report.rejected += 1;
                continue;
            }
            let r = cands[rng.below(cands.len())];
            let t = Triple::new(b.head, r, b.tail);
            if out.push_fact(Fact::new(t, Label::Outdated, split)) {
                added += 1;
            } else {
                report.rejected += 1;
            }
        }
        report.added[slot] = added;
    }
    Ok((out, report))
}
