//! Joint training of the attention encoder and the contrastive module.

use std::collections::HashSet;
use std::sync::Arc;

use crate::embed_init::TransEConfig;
use crate::error::{Error, Result};
use crate::fact_attention::{gat_loss, Encoder, EncoderConfig, FactGraph, MarginForm, NegativeSampler};
use crate::kgdata::Triple;
use crate::numcore::{Adam, AdamState, Matrix, Rng, Tape, Var};
use crate::r2n_contrast::{ContrastiveModel, R2NGraph};

/// Which training facts the feature learner treats as valid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureFacts {
    /// Only facts labeled current.
    #[default]
    Current,
    /// Every training fact regardless of label.
    All,
}

impl FeatureFacts {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureFacts::Current => "current",
            FeatureFacts::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "current" => Some(FeatureFacts::Current),
            "all" => Some(FeatureFacts::All),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Width of every entity and relation table, before and after encoding.
    pub dim: usize,
    pub heads: usize,
    pub lambda: f64,
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub detector_epochs: usize,
    pub detector_hidden: usize,
    pub patience: usize,
    pub batch: usize,
    pub neg_ratio: usize,
    pub gcn_layers: usize,
    pub self_loop: bool,
    pub margin_form: MarginForm,
    pub feature_facts: FeatureFacts,
    pub transe: TransEConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            heads: 2,
            lambda: 1.0,
            margin: 1.0,
            lr: 1e-3,
            epochs: 100,
            detector_epochs: 200,
            detector_hidden: 128,
            patience: 20,
            batch: 128,
            neg_ratio: 2,
            gcn_layers: 2,
            self_loop: true,
            margin_form: MarginForm::Standard,
            feature_facts: FeatureFacts::Current,
            transe: TransEConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("heads", self.heads),
            ("batch", self.batch),
            ("neg_ratio", self.neg_ratio),
            ("detector_hidden", self.detector_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            self_loop: self.self_loop,
            ..EncoderConfig::for_dim(self.dim, self.heads)
        }
    }
}

/// `l_gat + lambda * l_r2n`.
pub fn joint_loss(tape: &mut Tape, l_gat: Var, l_r2n: Var, lambda: f64) -> Result<Var> {
    let weighted = tape.scale(l_r2n, lambda);
    tape.add(l_gat, weighted)
}

/// Everything the joint objective updates.
#[derive(Clone, Debug)]
pub struct FeatureModel {
    pub entities: Matrix,
    pub relations: Matrix,
    pub encoder: Encoder,
    pub contrastive: ContrastiveModel,
}

impl FeatureModel {
    pub fn new(entities: Matrix, relations: Matrix, cfg: &TrainConfig, rng: &mut Rng) -> Result<Self> {
        let encoder = Encoder::new(entities.cols(), relations.cols(), &cfg.encoder(), rng)?;
        let out = encoder.out_dim();
        let contrastive = ContrastiveModel::new(out, out, cfg.gcn_layers, rng);
        Ok(Self {
            entities,
            relations,
            encoder,
            contrastive,
        })
    }

    fn params(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.entities, &self.relations];
        out.extend(self.encoder.params());
        out.extend(self.contrastive.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.entities, &mut self.relations];
        out.extend(self.encoder.params_mut());
        out.extend(self.contrastive.params_mut());
        out
    }

    /// Final embeddings without gradients.
    pub fn encode(&self, graph: &FactGraph) -> Result<(Matrix, Matrix)> {
        self.encoder.encode(&self.entities, &self.relations, graph)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochLoss {
    pub total: f64,
    pub gat: f64,
    pub r2n: f64,
}

/// Inputs shared by every step of feature training.
pub struct FeatureData<'a> {
    pub graph: &'a FactGraph,
    pub valid: &'a [Triple],
    /// Triples never used as negatives.
    pub known: Arc<HashSet<Triple>>,
    pub r2n: &'a R2NGraph,
}

pub struct TrainedFeatures {
    pub model: FeatureModel,
    pub entities: Matrix,
    pub relations: Matrix,
    pub epoch_losses: Vec<EpochLoss>,
}

/// Minibatch Adam on the joint loss for `cfg.epochs` epochs.
///
/// Every step re-encodes the whole graph, scores one batch of valid facts
/// against sampled negatives and, when `lambda > 0`, adds the contrastive
/// loss on the encoded relations.
pub fn train_features(
    data: &FeatureData<'_>,
    mut model: FeatureModel,
    cfg: &TrainConfig,
    sampling: Rng,
    shuffle: &mut Rng,
) -> Result<TrainedFeatures> {
    cfg.validate()?;
    if data.valid.is_empty() && cfg.epochs > 0 {
        return Err(Error::Empty("no valid facts to train on".into()));
    }
    let adam = Adam::new(cfg.lr);
    let mut states: Vec<AdamState> = model.params().into_iter().map(AdamState::like).collect();
    let mut sampler = NegativeSampler::new(
        sampling,
        cfg.neg_ratio,
        data.graph.num_entities(),
        Arc::clone(&data.known),
    );
    let adj = data.r2n.normalized();
    let n_enc = model.encoder.num_params();
    let mut order: Vec<usize> = (0..data.valid.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        shuffle.shuffle(&mut order);
        let mut sum = EpochLoss::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<Triple> = chunk.iter().map(|&i| data.valid[i]).collect();
            let pairs = sampler.sample(&batch);
            let perm = shuffle.permutation(model.relations.rows());

            let mut tape = Tape::new();
            let vars: Vec<Var> = model.params().into_iter().map(|m| tape.param(m.clone())).collect();
            let (e, r) = model.encoder.forward(&mut tape, &vars[2..2 + n_enc], vars[0], vars[1], data.graph)?;
            let l_gat = gat_loss(&mut tape, e, r, &batch, &pairs, cfg.margin, cfg.margin_form)?;
            let (loss, l_r2n) = if cfg.lambda > 0.0 {
                let a = tape.constant(adj.clone());
                let l = model.contrastive.record_loss(&mut tape, &vars[2 + n_enc..], a, r, &perm)?;
                (joint_loss(&mut tape, l_gat, l, cfg.lambda)?, tape.scalar(l))
            } else {
                (l_gat, 0.0)
            };
            let total = tape.scalar(loss);
            if !total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("joint loss is {total} (margin term {})", tape.scalar(l_gat)),
                });
            }
            let grads = tape.backward(loss)?;
            for ((p, s), v) in model.params_mut().into_iter().zip(&mut states).zip(&vars) {
                if let Some(g) = grads.get(*v) {
                    adam.step(p, g, s)?;
                }
            }
            sum.total += total;
            sum.gat += tape.scalar(l_gat);
            sum.r2n += l_r2n;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let mean = EpochLoss {
            total: sum.total / n,
            gat: sum.gat / n,
            r2n: sum.r2n / n,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} (margin {:.6}, contrastive {:.6})",
            mean.total,
            mean.gat,
            mean.r2n
        );
        epoch_losses.push(mean);
    }
    let (entities, relations) = model.encode(data.graph)?;
    if !entities.is_finite() || !relations.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            detail: "final embeddings are not finite".into(),
        });
    }
    Ok(TrainedFeatures {
        model,
        entities,
        relations,
        epoch_losses,
    })
}
