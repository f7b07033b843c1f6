use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use kgstale_core::detector::{fact_vectors, Detector};
use kgstale_core::embed_init::{load_matrix, load_sidecar};
use kgstale_core::kgdata::{load_dataset, read_labeled, write_labeled, DatasetStats, KnowledgeGraph, Split, VocabMode};
use kgstale_core::metrics::{majority_accuracy, split_metrics_row, MetricsRow, METRICS_HEADER, SPLIT_METRICS_HEADER};
use kgstale_core::pipeline::{self, RunConfig};
use kgstale_core::sweep::{parse_values, sweep as run_sweep, SweepParam};
use kgstale_core::Error;

use crate::args::{parse_basis, EvaluateArgs, PrepareArgs, StatsArgs, SweepArgs, TrainArgs};
use crate::{SweepFailures, UsageError};

const SPLIT_FILES: [(Split, &str); 3] = [
    (Split::Train, "train.tsv"),
    (Split::Test, "test.tsv"),
    (Split::Valid, "valid.tsv"),
];

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Name for reports: explicit, else the directory holding the training file.
fn dataset_name(name: &Option<String>, train: &Path) -> String {
    if let Some(n) = name {
        return n.clone();
    }
    train
        .parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "dataset".into())
}

fn summary(name: &str, stats: &DatasetStats) -> String {
    format!(
        "{:<10} {:>8} {:>9} {:>9} {:>8} {:>10}\n{}\n",
        "dataset",
        "entities",
        "relations",
        "training",
        "testing",
        "validation",
        stats.summary_row(name)
    )
}

/// Loads three labeled split files and drops evaluation facts with symbols
/// the training split lacks.
fn load_labeled(files: &[std::path::PathBuf; 3]) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    for ((split, _), path) in SPLIT_FILES.iter().zip(files) {
        read_labeled(&mut kg, path, *split, VocabMode::Grow)?;
    }
    let (kg, removed) = kg.clean_splits();
    if removed > 0 {
        log::warn!("dropped {removed} evaluation facts with symbols unseen in training");
    }
    Ok(kg)
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    let [train, test, valid] = a.files.resolve(a.data.as_deref(), false)?;
    if !(a.fraction > 0.0 && a.fraction < 1.0) {
        bail!(UsageError(format!("--fraction must be in (0, 1), got {}", a.fraction)));
    }
    let basis = parse_basis(&a.fraction_basis)?;
    let raw = load_dataset(&train, &test, &valid)?;
    let prepared = pipeline::prepare(&raw, a.fraction, basis, a.seed)?;
    let kg = &prepared.kg;

    create_dir(&a.out)?;
    for (split, file) in SPLIT_FILES {
        write_labeled(kg, split, &a.out.join(file))?;
    }
    let stats = kg.stats();
    write(&a.out.join("stats.txt"), &stats.to_text())?;
    write(&a.out.join("stats.csv"), &stats.to_csv())?;
    let mut cfg = String::new();
    let _ = writeln!(cfg, "seed = {}", a.seed);
    let _ = writeln!(cfg, "fraction = {}", a.fraction);
    let _ = writeln!(cfg, "fraction_basis = {}", a.fraction_basis);
    write(&a.out.join("config.txt"), &cfg)?;

    let [tr, te, va] = prepared.synthesis.added;
    log::info!(
        "removed {} unseen-symbol facts; injected {tr}/{te}/{va} outdated facts (train/test/valid); {} candidates rejected",
        prepared.removed,
        prepared.synthesis.rejected
    );
    print!("{}", summary(&dataset_name(&a.name, &train), &stats));
    Ok(())
}

fn train_inputs(data: &Option<std::path::PathBuf>, files: &crate::args::SplitFiles) -> Result<[std::path::PathBuf; 3]> {
    files.resolve(data.as_deref(), true)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let files = train_inputs(&a.data, &a.files)?;
    let cfg = a.hyper.resolve()?;
    let kg = load_labeled(&files)?;
    let name = dataset_name(&a.name, &files[0]);

    create_dir(&a.out)?;
    write(&a.out.join("config.txt"), &cfg.to_text())?;
    let out = pipeline::run(&kg, &cfg)?;
    out.save(&kg, &a.out)?;

    let mut csv = format!("{SPLIT_METRICS_HEADER}\n");
    if let Some(v) = &out.valid {
        let valid_y: Vec<f64> = kg.split(Split::Valid).map(|f| f.label.as_f64()).collect();
        csv += &split_metrics_row(&name, "valid", v, majority_accuracy(&valid_y), cfg.seed);
        csv.push('\n');
    }
    csv += &split_metrics_row(&name, "test", &out.test, out.majority_test, cfg.seed);
    csv.push('\n');
    write(&a.out.join("metrics.csv"), &csv)?;
    write(&a.out.join("timing.txt"), &format!("wall_seconds = {:.3}\n", out.wall_seconds))?;

    println!("test {}", out.test);
    println!("majority baseline accuracy {:.4}", out.majority_test);
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        bail!(UsageError(format!("--threshold must be in (0, 1), got {}", a.threshold)));
    }
    let dir = &a.model;
    let entities = load_matrix(&dir.join("entities.bin"))?;
    let relations = load_matrix(&dir.join("relations.bin"))?;
    let mut kg = KnowledgeGraph::new();
    for n in load_sidecar(&dir.join("entities.txt"))? {
        kg.entities.intern(&n);
    }
    for n in load_sidecar(&dir.join("relations.txt"))? {
        kg.relations.intern(&n);
    }
    let artifact = |msg: String| Error::Artifact { path: dir.clone(), msg };
    if entities.rows() != kg.num_entities() || relations.rows() != kg.num_relations() {
        bail!(artifact(format!(
            "embeddings have {}/{} rows but the vocabularies list {}/{} symbols",
            entities.rows(),
            relations.rows(),
            kg.num_entities(),
            kg.num_relations()
        )));
    }
    if entities.cols() != relations.cols() {
        bail!(artifact(format!(
            "entity width {} differs from relation width {}",
            entities.cols(),
            relations.cols()
        )));
    }
    let detector = Detector::load(dir, 3 * entities.cols())?;

    read_labeled(&mut kg, &a.test_file, Split::Test, VocabMode::Frozen)?;
    if kg.split_len(Split::Test) == 0 {
        return Err(Error::Empty(format!("{} has no facts", a.test_file.display())).into());
    }
    let (facts, labels): (Vec<_>, Vec<f64>) = kg.split(Split::Test).map(|f| (f.triple(), f.label.as_f64())).unzip();
    let x = fact_vectors(&entities, &relations, &facts)?;
    let report = detector.evaluate(&x, &labels, a.threshold)?;

    let out = a.out.as_ref().unwrap_or(dir);
    create_dir(out)?;
    let name = a.name.clone().unwrap_or_else(|| dataset_name(&None, &a.test_file));
    let csv = format!(
        "{SPLIT_METRICS_HEADER}\n{}\n",
        split_metrics_row(&name, "test", &report, majority_accuracy(&labels), a.seed)
    );
    write(&out.join("eval_metrics.csv"), &csv)?;
    println!("accuracy  {:.4}", report.accuracy);
    println!("precision {:.4}", report.precision);
    println!("recall    {:.4}", report.recall);
    println!("f1        {:.4}", report.f1);
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let param: SweepParam = a.param.parse().map_err(|e: Error| UsageError(e.to_string()))?;
    let values = parse_values(&a.values).map_err(|e| UsageError(e.to_string()))?;
    let files = train_inputs(&a.data, &a.files)?;
    let base: RunConfig = a.hyper.resolve()?;
    let kg = load_labeled(&files)?;
    let name = dataset_name(&a.name, &files[0]);

    create_dir(&a.out)?;
    write(&a.out.join("config.txt"), &base.to_text())?;
    let rows = run_sweep(&name, &kg, param, &values, &base)?;
    let mut csv = format!("{METRICS_HEADER}\n");
    for r in &rows {
        csv += &r.to_csv();
    }
    let path = a.out.join(format!("sweep_{}.csv", param.as_str()));
    write(&path, &csv).with_context(|| "writing sweep results")?;
    print!("{csv}");

    let failed = rows.iter().filter(|r: &&MetricsRow| r.report.is_none()).count();
    if failed > 0 {
        bail!(SweepFailures(failed));
    }
    Ok(())
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let files = a.files.resolve(a.data.as_deref(), a.labeled)?;
    let kg = if a.labeled {
        let mut kg = KnowledgeGraph::new();
        for ((split, _), path) in SPLIT_FILES.iter().zip(&files) {
            read_labeled(&mut kg, path, *split, VocabMode::Grow)?;
        }
        kg
    } else {
        load_dataset(&files[0], &files[1], &files[2])?
    };
    let stats = kg.stats();
    if let Some(out) = &a.out {
        create_dir(out)?;
        write(&out.join("stats.txt"), &stats.to_text())?;
        write(&out.join("stats.csv"), &stats.to_csv())?;
    }
    print!("{}", stats.to_text());
    print!("{}", summary(&dataset_name(&a.name, &files[0]), &stats));
    Ok(())
}
