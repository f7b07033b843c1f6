//! Knowledge graph container, triple file IO, split cleaning and
//! outdated-fact synthesis.

mod io;
mod stats;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;

pub use io::{load_dataset, load_triples, read_labeled, write_labeled, VocabMode};
pub use stats::{DatasetStats, SplitStats};
pub use synth::{synthesize_outdated, FractionBasis, RelationIndex, SynthesisReport};

/// Bidirectional string <-> id map. Ids are assigned in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Id for `name`, adding it if absent.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
    Valid,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Valid];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Valid => "valid",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fact label: outdated facts are 0, current facts 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Outdated = 0,
    Current = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Outdated => 0.0,
            Label::Current => 1.0,
        }
    }

    pub fn from_digit(d: &str) -> Option<Label> {
        match d {
            "0" => Some(Label::Outdated),
            "1" => Some(Label::Current),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fact {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub label: Label,
    pub split: Split,
}

impl Fact {
    pub fn new(triple: Triple, label: Label, split: Split) -> Self {
        Self {
            head: triple.head,
            relation: triple.relation,
            tail: triple.tail,
            label,
            split,
        }
    }

    pub fn triple(&self) -> Triple {
        Triple::new(self.head, self.relation, self.tail)
    }
}

/// Entity and relation vocabularies plus the tagged fact list.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeGraph {
    pub entities: Vocab,
    pub relations: Vocab,
    facts: Vec<Fact>,
    present: HashSet<Triple>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Fact> + '_ {
        self.facts.iter().filter(move |f| f.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn triples(&self) -> &HashSet<Triple> {
        &self.present
    }

    /// Adds a fact by name, interning new symbols. Returns `false` (and adds
    /// nothing) when the triple is already present.
    pub fn push_named(
        &mut self,
        head: &str,
        relation: &str,
        tail: &str,
        label: Label,
        split: Split,
    ) -> bool {
        let t = Triple::new(
            self.entities.intern(head),
            self.relations.intern(relation),
            self.entities.intern(tail),
        );
        self.push_triple(t, label, split)
    }

    /// Adds a fact by id. Returns `false` when the triple is already present.
    pub fn push_fact(&mut self, fact: Fact) -> bool {
        if !self.present.insert(fact.triple()) {
            return false;
        }
        self.facts.push(fact);
        true
    }

    fn push_triple(&mut self, t: Triple, label: Label, split: Split) -> bool {
        self.push_fact(Fact::new(t, label, split))
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.present.contains(t)
    }

    /// Removes test/valid facts whose head, tail or relation never occurs in
    /// the training split, then re-indexes the vocabularies to the symbols
    /// that remain (first-appearance order is kept).
    ///
    /// Returns the cleaned graph and the number of facts removed.
    pub fn clean_splits(&self) -> (KnowledgeGraph, usize) {
        let mut seen_e = vec![false; self.num_entities()];
        let mut seen_r = vec![false; self.num_relations()];
        for f in self.split(Split::Train) {
            seen_e[f.head] = true;
            seen_e[f.tail] = true;
            seen_r[f.relation] = true;
        }
        let keep = |f: &Fact| {
            f.split == Split::Train || (seen_e[f.head] && seen_e[f.tail] && seen_r[f.relation])
        };

        let mut out = KnowledgeGraph::new();
        let mut removed = 0;
        for f in &self.facts {
            if !keep(f) {
                removed += 1;
                continue;
            }
            let t = Triple::new(
                out.entities.intern(self.entities.name(f.head)),
                out.relations.intern(self.relations.name(f.relation)),
                out.entities.intern(self.entities.name(f.tail)),
            );
            out.push_triple(t, f.label, f.split);
        }
        (out, removed)
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats::of(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn kg_from(rows: &[(&str, &str, &str, Split)]) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        for &(h, r, t, s) in rows {
            kg.push_named(h, r, t, Label::Current, s);
        }
        kg
    }

    #[test]
    fn vocab_first_appearance_order() {
        let kg = kg_from(&[
            ("a", "r1", "b", Split::Train),
            ("b", "r2", "c", Split::Train),
        ]);
        assert_eq!(kg.entities.names(), ["a", "b", "c"]);
        assert_eq!(kg.relations.names(), ["r1", "r2"]);
        assert_eq!(kg.len(), 2);
    }

    #[test]
    fn duplicate_triples_are_rejected() {
        let mut kg = kg_from(&[("a", "r", "b", Split::Train)]);
        assert!(!kg.push_named("a", "r", "b", Label::Current, Split::Test));
        assert_eq!(kg.len(), 1);
    }

    #[test]
    fn clean_removes_unseen_entity() {
        let kg = kg_from(&[
            ("a", "r", "b", Split::Train),
            ("a", "r", "z", Split::Test),
            ("b", "r", "a", Split::Valid),
        ]);
        let (clean, removed) = kg.clean_splits();
        assert_eq!(removed, 1);
        assert_eq!(clean.split_len(Split::Test), 0);
        assert_eq!(clean.split_len(Split::Valid), 1);
        assert!(clean.entities.id("z").is_none());
    }

    #[test]
    fn clean_is_identity_when_nothing_leaks() {
        let kg = kg_from(&[
            ("a", "r", "b", Split::Train),
            ("b", "s", "a", Split::Train),
            ("b", "r", "a", Split::Test),
        ]);
        let (clean, removed) = kg.clean_splits();
        assert_eq!(removed, 0);
        assert_eq!(clean, kg);
    }

    #[test]
    fn clean_fixture_with_two_leaks() {
        // 10 evaluation facts: one with an unseen entity, one with an unseen relation
        let mut rows = vec![
            ("e0", "hyper", "e1", Split::Train),
            ("e1", "hyper", "e2", Split::Train),
            ("e2", "part", "e3", Split::Train),
            ("e3", "part", "e4", Split::Train),
        ];
        let eval = [
            ("e0", "hyper", "e2"),
            ("e0", "part", "e3"),
            ("e1", "part", "e4"),
            ("e4", "hyper", "e0"),
            ("e2", "hyper", "e4"),
            ("e3", "hyper", "e1"),
            ("e4", "part", "e1"),
            ("e0", "part", "e2"),
            ("e9", "hyper", "e1"),
            ("e1", "similar", "e3"),
        ];
        for (i, &(h, r, t)) in eval.iter().enumerate() {
            let split = if i % 2 == 0 { Split::Test } else { Split::Valid };
            rows.push((h, r, t, split));
        }
        let kg = kg_from(&rows);
        let (clean, removed) = kg.clean_splits();
        assert_eq!(removed, 2);
        assert_eq!(
            clean.split_len(Split::Test) + clean.split_len(Split::Valid),
            8
        );
        let (again, removed_again) = clean.clean_splits();
        assert_eq!(removed_again, 0);
        assert_eq!(again, clean);
    }
}
