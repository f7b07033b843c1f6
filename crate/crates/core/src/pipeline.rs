//! End-to-end run: clean and label a dataset, learn features, train and
//! evaluate the detector.
//!
//! All randomness derives from one run seed through named substreams, so a
//! change in one stage does not shift the random draws of another.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::detector::{fact_vectors, train_detector, Detector, DetectorConfig};
use crate::embed_init::{save_matrix, save_sidecar, train_transe, TransEConfig};
use crate::error::{Error, Result};
use crate::fact_attention::{FactGraph, MarginForm};
use crate::kgdata::{synthesize_outdated, Fact, FractionBasis, KnowledgeGraph, Label, Split, SynthesisReport, Triple};
use crate::metrics::{majority_accuracy, EvalReport};
use crate::numcore::{Matrix, Rng};
use crate::r2n_contrast::build_r2n;
use crate::trainer::{train_features, EpochLoss, FeatureData, FeatureFacts, FeatureModel, TrainConfig};

pub const STREAM_SYNTHESIS: &str = "synthesis";
pub const STREAM_INIT: &str = "init";
pub const STREAM_SAMPLING: &str = "sampling";
pub const STREAM_SHUFFLE: &str = "shuffle";
pub const STREAM_DETECTOR: &str = "detector";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub fraction: f64,
    pub basis: FractionBasis,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            fraction: 0.2,
            basis: FractionBasis::PostInjection,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            hidden: self.train.detector_hidden,
            epochs: self.train.detector_epochs,
            lr: self.train.lr,
            batch: self.train.batch,
            patience: self.train.patience,
            threshold: self.threshold,
        }
    }

    /// Every resolved setting as `key = value` lines, in a fixed order.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("fraction", self.fraction.to_string());
        kv(
            "fraction_basis",
            match self.basis {
                FractionBasis::PostInjection => "post",
                FractionBasis::PreInjection => "pre",
            }
            .into(),
        );
        kv("threshold", self.threshold.to_string());
        kv("dim", t.dim.to_string());
        kv("heads", t.heads.to_string());
        kv("lambda", t.lambda.to_string());
        kv("margin", t.margin.to_string());
        kv("lr", t.lr.to_string());
        kv("epochs", t.epochs.to_string());
        kv("detector_epochs", t.detector_epochs.to_string());
        kv("detector_hidden", t.detector_hidden.to_string());
        kv("patience", t.patience.to_string());
        kv("batch", t.batch.to_string());
        kv("neg_ratio", t.neg_ratio.to_string());
        kv("gcn_layers", t.gcn_layers.to_string());
        kv("self_loop", t.self_loop.to_string());
        kv(
            "margin_form",
            match t.margin_form {
                MarginForm::Standard => "standard",
                MarginForm::Reversed => "reversed",
            }
            .into(),
        );
        kv("feature_facts", t.feature_facts.as_str().into());
        kv("transe_epochs", t.transe.epochs.to_string());
        kv("transe_margin", t.transe.margin.to_string());
        kv("transe_lr", t.transe.lr.to_string());
        s
    }
}

pub struct Prepared {
    pub kg: KnowledgeGraph,
    /// Evaluation facts dropped for using symbols unseen in training.
    pub removed: usize,
    pub synthesis: SynthesisReport,
}

/// Cleans the evaluation splits and injects outdated facts.
pub fn prepare(raw: &KnowledgeGraph, fraction: f64, basis: FractionBasis, seed: u64) -> Result<Prepared> {
    let (clean, removed) = raw.clean_splits();
    let mut rng = Rng::substream(seed, STREAM_SYNTHESIS);
    let (kg, synthesis) = synthesize_outdated(&clean, fraction, basis, &mut rng)?;
    Ok(Prepared {
        kg,
        removed,
        synthesis,
    })
}

pub struct RunOutput {
    pub entities: Matrix,
    pub relations: Matrix,
    pub detector: Detector,
    pub transe_losses: Vec<f64>,
    pub feature_losses: Vec<EpochLoss>,
    pub detector_losses: Vec<f64>,
    pub valid: Option<EvalReport>,
    pub test: EvalReport,
    /// Test accuracy of predicting "current" for every fact.
    pub majority_test: f64,
    pub wall_seconds: f64,
}

fn labeled(kg: &KnowledgeGraph, split: Split) -> (Vec<Triple>, Vec<f64>) {
    kg.split(split).map(|f| (f.triple(), f.label.as_f64())).unzip()
}

/// Training facts the feature learner sees.
pub fn feature_facts(kg: &KnowledgeGraph, which: FeatureFacts) -> Vec<Triple> {
    kg.split(Split::Train)
        .filter(|f: &&Fact| which == FeatureFacts::All || f.label == Label::Current)
        .map(Fact::triple)
        .collect()
}

/// Learns features on the training split of a labeled graph, trains the
/// detector on training facts (validation split for early stopping) and
/// evaluates on the test split.
pub fn run(kg: &KnowledgeGraph, cfg: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let t = &cfg.train;
    t.validate()?;
    let (n_e, n_r) = (kg.num_entities(), kg.num_relations());
    let facts = feature_facts(kg, t.feature_facts);
    if facts.is_empty() {
        return Err(Error::Empty("training split has no usable facts".into()));
    }
    let known: Arc<HashSet<Triple>> = Arc::new(facts.iter().copied().collect());

    let mut init = Rng::substream(cfg.seed, STREAM_INIT);
    let transe_cfg = TransEConfig { dim: t.dim, ..t.transe.clone() };
    let transe = train_transe(&facts, n_e, n_r, &known, &transe_cfg, &mut init)?;
    log::info!(
        "TransE done: final loss {:.4} ({:.1}s)",
        transe.epoch_losses.last().copied().unwrap_or(f64::NAN),
        start.elapsed().as_secs_f64()
    );

    let graph = FactGraph::new(n_e, n_r, &facts, t.self_loop)?;
    let r2n = build_r2n(n_e, n_r, &facts)?;
    let model = FeatureModel::new(
        transe.entities.values.clone(),
        transe.relations.values.clone(),
        t,
        &mut init,
    )?;
    let data = FeatureData {
        graph: &graph,
        valid: &facts,
        known,
        r2n: &r2n,
    };
    let mut shuffle = Rng::substream(cfg.seed, STREAM_SHUFFLE);
    let sampling = Rng::substream(cfg.seed, STREAM_SAMPLING);
    let features = train_features(&data, model, t, sampling, &mut shuffle)?;
    log::info!(
        "feature training done: final loss {:.4} ({:.1}s)",
        features.epoch_losses.last().map_or(f64::NAN, |l| l.total),
        start.elapsed().as_secs_f64()
    );

    let (e, r) = (&features.entities, &features.relations);
    let (train_facts, train_y) = labeled(kg, Split::Train);
    let (valid_facts, valid_y) = labeled(kg, Split::Valid);
    let (test_facts, test_y) = labeled(kg, Split::Test);
    if test_facts.is_empty() {
        return Err(Error::Empty("test split is empty".into()));
    }
    let x_train = fact_vectors(e, r, &train_facts)?;
    let x_valid = fact_vectors(e, r, &valid_facts)?;
    let x_test = fact_vectors(e, r, &test_facts)?;

    let det_cfg = cfg.detector();
    let mut det_rng = Rng::substream(cfg.seed, STREAM_DETECTOR);
    let valid_set = (!valid_y.is_empty()).then_some((&x_valid, valid_y.as_slice()));
    let trained = train_detector(&x_train, &train_y, valid_set, &det_cfg, &mut det_rng)?;
    let det = trained.detector;
    let valid = match valid_set {
        Some((x, y)) => Some(det.evaluate(x, y, cfg.threshold)?),
        None => None,
    };
    let test = det.evaluate(&x_test, &test_y, cfg.threshold)?;
    log::info!("detector done ({:.1}s); test {test}", start.elapsed().as_secs_f64());

    Ok(RunOutput {
        entities: features.entities,
        relations: features.relations,
        detector: det,
        transe_losses: transe.epoch_losses,
        feature_losses: features.epoch_losses,
        detector_losses: trained.epoch_losses,
        valid,
        test,
        majority_test: majority_accuracy(&test_y),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

impl RunOutput {
    /// Writes embeddings with vocabulary sidecars, the detector and the loss
    /// log into `dir`.
    pub fn save(&self, kg: &KnowledgeGraph, dir: &Path) -> Result<()> {
        save_matrix(&dir.join("entities.bin"), &self.entities)?;
        save_sidecar(&dir.join("entities.txt"), kg.entities.names())?;
        save_matrix(&dir.join("relations.bin"), &self.relations)?;
        save_sidecar(&dir.join("relations.txt"), kg.relations.names())?;
        self.detector.save(dir)?;
        let path = dir.join("losses.csv");
        std::fs::write(&path, self.loss_log()).map_err(|e| Error::io(&path, e))
    }

    /// `stage,epoch,loss,margin_loss,contrastive_loss` lines.
    pub fn loss_log(&self) -> String {
        let mut s = String::from("stage,epoch,loss,margin_loss,contrastive_loss\n");
        for (i, l) in self.transe_losses.iter().enumerate() {
            let _ = writeln!(s, "transe,{},{l:.6},,", i + 1);
        }
        for (i, l) in self.feature_losses.iter().enumerate() {
            let _ = writeln!(s, "joint,{},{:.6},{:.6},{:.6}", i + 1, l.total, l.gat, l.r2n);
        }
        for (i, l) in self.detector_losses.iter().enumerate() {
            let _ = writeln!(s, "detector,{},{l:.6},,", i + 1);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_kg() -> KnowledgeGraph {
        // two families of facts over 8 entities and 4 relations
        let mut kg = KnowledgeGraph::new();
        let names: Vec<String> = (0..8).map(|i| format!("e{i}")).collect();
        let mut k = 0;
        for h in 0..8 {
            for d in 1..4 {
                let tl = (h + d) % 8;
                let r = format!("r{}", (h + d) % 4);
                let split = match k % 10 {
                    0 => Split::Test,
                    1 => Split::Valid,
                    _ => Split::Train,
                };
                kg.push_named(&names[h], &r, &names[tl], Label::Current, split);
                k += 1;
            }
        }
        kg
    }

    fn tiny_cfg(seed: u64) -> RunConfig {
        RunConfig {
            train: TrainConfig {
                dim: 8,
                epochs: 3,
                detector_epochs: 5,
                detector_hidden: 8,
                batch: 8,
                transe: TransEConfig { epochs: 5, ..Default::default() },
                ..Default::default()
            },
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn tiny_run_is_deterministic() {
        let prepared = prepare(&toy_kg(), 0.2, FractionBasis::PostInjection, 3).unwrap();
        let a = run(&prepared.kg, &tiny_cfg(3)).unwrap();
        let b = run(&prepared.kg, &tiny_cfg(3)).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.entities, b.entities);
        assert_eq!(a.loss_log(), b.loss_log());
        assert_eq!(a.test.total(), prepared.kg.split_len(Split::Test));
        assert_eq!(a.entities.shape(), (8, 8));
        assert_eq!(a.relations.shape(), (4, 8));
    }

    #[test]
    fn config_echo_lists_defaults() {
        let text = RunConfig::default().to_text();
        assert!(text.contains("heads = 2\n"));
        assert!(text.contains("lambda = 1\n"));
        assert!(text.contains("lr = 0.001\n"));
        assert!(text.contains("batch = 128\n"));
        assert!(text.contains("epochs = 100\n"));
        assert!(text.contains("dim = 200\n"));
        assert!(text.lines().all(|l| l.contains(" = ")));
    }

    #[test]
    fn feature_fact_selection() {
        let mut kg = toy_kg();
        let before = feature_facts(&kg, FeatureFacts::Current).len();
        kg.push_named("e0", "r0", "e5", Label::Outdated, Split::Train);
        assert_eq!(feature_facts(&kg, FeatureFacts::Current).len(), before);
        assert_eq!(feature_facts(&kg, FeatureFacts::All).len(), before + 1);
    }
}
