use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Fact, KnowledgeGraph, Label, Split, Triple};
use crate::error::{Error, Result};

/// Whether unseen symbols may be added while reading a file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabMode {
    Grow,
    Frozen,
}

/// Reads a `head<TAB>relation<TAB>tail` file into a fresh graph, tagging
/// every fact as training data.
pub fn load_triples(path: &Path, mode: VocabMode) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    kg.append_file(path, Split::Train, mode, false)?;
    Ok(kg)
}

/// Loads a train/test/valid triple.
pub fn load_dataset(train: &Path, test: &Path, valid: &Path) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    kg.append_file(train, Split::Train, VocabMode::Grow, false)?;
    kg.append_file(test, Split::Test, VocabMode::Grow, false)?;
    kg.append_file(valid, Split::Valid, VocabMode::Grow, false)?;
    Ok(kg)
}

/// Reads a `head<TAB>relation<TAB>tail<TAB>label` file into `kg`.
pub fn read_labeled(kg: &mut KnowledgeGraph, path: &Path, split: Split, mode: VocabMode) -> Result<usize> {
    kg.append_file(path, split, mode, true)
}

/// Writes one split as `head<TAB>relation<TAB>tail<TAB>label` lines, in fact order.
pub fn write_labeled(kg: &KnowledgeGraph, split: Split, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for f in kg.split(split) {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            kg.entities.name(f.head),
            kg.relations.name(f.relation),
            kg.entities.name(f.tail),
            f.label as u8
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl KnowledgeGraph {
    /// Appends the facts of one file. Returns the number of facts added;
    /// triples already present are skipped.
    pub fn append_file(&mut self, path: &Path, split: Split, mode: VocabMode, labeled: bool) -> Result<usize> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let expected = if labeled { 4 } else { 3 };
        let mut added = 0;
        let mut duplicates = 0;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != expected || fields.iter().any(|f| f.is_empty()) {
                return Err(parse_err(format!(
                    "expected {expected} non-empty tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let label = if labeled {
                Label::from_digit(fields[3])
                    .ok_or_else(|| parse_err(format!("label must be 0 or 1, got `{}`", fields[3])))?
            } else {
                Label::Current
            };
            let triple = match mode {
                VocabMode::Grow => Triple::new(
                    self.entities.intern(fields[0]),
                    self.relations.intern(fields[1]),
                    self.entities.intern(fields[2]),
                ),
                VocabMode::Frozen => {
                    let ent = |name: &str| {
                        self.entities.id(name).ok_or_else(|| Error::UnknownSymbol {
                            kind: "entity",
                            name: name.to_owned(),
                        })
                    };
                    let head = ent(fields[0])?;
                    let tail = ent(fields[2])?;
                    let relation =
                        self.relations
                            .id(fields[1])
                            .ok_or_else(|| Error::UnknownSymbol {
                                kind: "relation",
                                name: fields[1].to_owned(),
                            })?;
                    Triple::new(head, relation, tail)
                }
            };
            if self.push_fact(Fact::new(triple, label, split)) {
                added += 1;
            } else {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            log::warn!("{}: skipped {duplicates} duplicate triples", path.display());
        }
        Ok(added)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_line_file() {
        let f = file_with("a\tr1\tb\nb\tr2\tc\n");
        let kg = load_triples(f.path(), VocabMode::Grow).unwrap();
        assert_eq!((kg.num_entities(), kg.num_relations(), kg.len()), (3, 2, 2));
        assert_eq!(kg.facts()[1].triple(), Triple::new(1, 1, 2));
    }

    #[test]
    fn empty_file_gives_empty_graph() {
        let f = file_with("");
        let kg = load_triples(f.path(), VocabMode::Grow).unwrap();
        assert!(kg.is_empty());
        assert_eq!(kg.num_entities(), 0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = file_with("a\tr\tb\n\nbad line\n");
        let err = load_triples(f.path(), VocabMode::Grow).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn frozen_vocab_rejects_unknown_entity() {
        let train = file_with("a\tr\tb\n");
        let test = file_with("a\tr\tz\n");
        let mut kg = load_triples(train.path(), VocabMode::Grow).unwrap();
        let err = kg
            .append_file(test.path(), Split::Test, VocabMode::Frozen, false)
            .unwrap_err();
        assert!(matches!(err, Error::UnknownSymbol { kind: "entity", .. }));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_triples(Path::new("/no/such/file.txt"), VocabMode::Grow).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.txt"));
    }

    #[test]
    fn labeled_round_trip() {
        let mut kg = KnowledgeGraph::new();
        kg.push_named("a", "r", "b", Label::Current, Split::Test);
        kg.push_named("a", "s", "b", Label::Outdated, Split::Test);
        let out = tempfile::NamedTempFile::new().unwrap();
        write_labeled(&kg, Split::Test, out.path()).unwrap();
        let text = std::fs::read_to_string(out.path()).unwrap();
        assert_eq!(text, "a\tr\tb\t1\na\ts\tb\t0\n");
        let mut back = KnowledgeGraph::new();
        read_labeled(&mut back, out.path(), Split::Test, VocabMode::Grow).unwrap();
        assert_eq!(back, kg);
    }
}
