use std::fmt::Write as _;

use super::{KnowledgeGraph, Label, Split};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplitStats {
    pub facts: usize,
    pub outdated: usize,
}

impl SplitStats {
    pub fn current(&self) -> usize {
        self.facts - self.outdated
    }

    pub fn outdated_fraction(&self) -> f64 {
        if self.facts == 0 {
            0.0
        } else {
            self.outdated as f64 / self.facts as f64
        }
    }
}

/// Entity/relation counts and per-split fact counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: SplitStats,
    pub test: SplitStats,
    pub valid: SplitStats,
}

impl DatasetStats {
    pub fn of(kg: &KnowledgeGraph) -> Self {
        let mut s = DatasetStats {
            entities: kg.num_entities(),
            relations: kg.num_relations(),
            ..Default::default()
        };
        for f in kg.facts() {
            let slot = s.split_mut(f.split);
            slot.facts += 1;
            if f.label == Label::Outdated {
                slot.outdated += 1;
            }
        }
        s
    }

    pub fn split(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::Valid => &self.valid,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut SplitStats {
        match split {
            Split::Train => &mut self.train,
            Split::Test => &mut self.test,
            Split::Valid => &mut self.valid,
        }
    }

    pub fn total_facts(&self) -> usize {
        self.train.facts + self.test.facts + self.valid.facts
    }

    pub fn outdated_fraction(&self) -> f64 {
        let total = self.total_facts();
        if total == 0 {
            return 0.0;
        }
        (self.train.outdated + self.test.outdated + self.valid.outdated) as f64 / total as f64
    }

    /// `key: value` document.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "entities: {}", self.entities);
        let _ = writeln!(out, "relations: {}", self.relations);
        for split in Split::ALL {
            let s = self.split(split);
            let _ = writeln!(out, "{split}: {}", s.facts);
            let _ = writeln!(out, "{split}_outdated: {}", s.outdated);
        }
        let _ = writeln!(out, "outdated_fraction: {:.6}", self.outdated_fraction());
        out
    }

    pub const CSV_HEADER: &'static str = "split,facts,current,outdated,outdated_fraction";

    /// Header plus one CSV row per split.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for split in Split::ALL {
            let s = self.split(split);
            let _ = writeln!(
                out,
                "{split},{},{},{},{:.6}",
                s.facts,
                s.current(),
                s.outdated,
                s.outdated_fraction()
            );
        }
        out
    }

    /// One-line summary in the column order entities, relations, training,
    /// testing, validation.
    pub fn summary_row(&self, name: &str) -> String {
        format!(
            "{name:<10} {:>8} {:>9} {:>9} {:>8} {:>10}",
            self.entities, self.relations, self.train.facts, self.test.facts, self.valid.facts
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_is_all_zero() {
        let s = KnowledgeGraph::new().stats();
        assert_eq!(s, DatasetStats::default());
        assert_eq!(s.outdated_fraction(), 0.0);
    }

    #[test]
    fn counts_labels_per_split() {
        let mut kg = KnowledgeGraph::new();
        kg.push_named("a", "r", "b", Label::Current, Split::Train);
        kg.push_named("a", "s", "b", Label::Outdated, Split::Train);
        kg.push_named("b", "r", "a", Label::Current, Split::Valid);
        let s = kg.stats();
        assert_eq!((s.entities, s.relations), (2, 2));
        assert_eq!(s.train, SplitStats { facts: 2, outdated: 1 });
        assert_eq!(s.valid.facts, 1);
        assert!((s.outdated_fraction() - 1.0 / 3.0).abs() < 1e-15);
        assert!(s.to_text().contains("train_outdated: 1"));
        assert_eq!(s.to_csv().lines().count(), 4);
    }
}
