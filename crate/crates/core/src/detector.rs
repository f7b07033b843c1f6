//! Fully connected classifier over frozen fact vectors.

use std::path::Path;
use std::sync::Arc;

use crate::embed_init::{load_matrix, save_matrix};
use crate::error::{Error, Result};
use crate::kgdata::Triple;
use crate::metrics::{evaluate_probabilities, EvalReport};
use crate::numcore::{sigmoid, Adam, AdamState, Matrix, Rng, Tape, Var};

const HIDDEN_SLOPE: f64 = 0.2;

/// `[e_h | r | e_t]` from the final tables.
pub fn fact_vector(entities: &Matrix, relations: &Matrix, fact: Triple) -> Result<Vec<f64>> {
    if fact.head >= entities.rows() || fact.tail >= entities.rows() || fact.relation >= relations.rows() {
        return Err(Error::Dimension(format!(
            "fact ({}, {}, {}) out of range for {} entities and {} relations",
            fact.head,
            fact.relation,
            fact.tail,
            entities.rows(),
            relations.rows()
        )));
    }
    let mut v = Vec::with_capacity(2 * entities.cols() + relations.cols());
    v.extend_from_slice(entities.row(fact.head));
    v.extend_from_slice(relations.row(fact.relation));
    v.extend_from_slice(entities.row(fact.tail));
    Ok(v)
}

/// One [`fact_vector`] per row.
pub fn fact_vectors(entities: &Matrix, relations: &Matrix, facts: &[Triple]) -> Result<Matrix> {
    let width = 2 * entities.cols() + relations.cols();
    let mut data = Vec::with_capacity(facts.len() * width);
    for &f in facts {
        data.extend(fact_vector(entities, relations, f)?);
    }
    Matrix::from_vec(facts.len(), width, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Epochs without a validation-accuracy gain before stopping.
    pub patience: usize,
    pub threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 200,
            lr: 1e-3,
            batch: 128,
            patience: 20,
            threshold: 0.5,
        }
    }
}

/// `sigmoid(leaky_relu(x W1 + b1) W2 + b2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Detector {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

const FILES: [&str; 4] = ["detector_w1.bin", "detector_b1.bin", "detector_w2.bin", "detector_b2.bin"];

impl Detector {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            w1: rng.glorot(input, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: rng.glorot(hidden, 1),
            b2: Matrix::zeros(1, 1),
        }
    }

    /// All weights zero: every output is exactly 0.5.
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w1: Matrix::zeros(input, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, 1),
            b2: Matrix::zeros(1, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    /// `w1, b1, w2, b2`.
    pub fn params(&self) -> [&Matrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn params_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Records the logits of the rows of `x`; `vars` follows [`Detector::params`].
    pub fn record_logits(tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, vars[0])?;
        let h = tape.add_row(h, vars[1])?;
        let h = tape.leaky_relu(h, HIDDEN_SLOPE);
        let z = tape.matmul(h, vars[2])?;
        tape.add_row(z, vars[3])
    }

    pub fn logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "detector expects {}-wide fact vectors, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params().iter().map(|m| tape.constant((*m).clone())).collect();
        let xv = tape.constant(x.clone());
        let z = Self::record_logits(&mut tape, &vars, xv)?;
        Ok(tape.value(z).data().to_vec())
    }

    /// Probability that each row is a current fact.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn evaluate(&self, x: &Matrix, labels: &[f64], threshold: f64) -> Result<EvalReport> {
        evaluate_probabilities(&self.predict(x)?, labels, threshold)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for (m, name) in self.params().iter().zip(FILES) {
            save_matrix(&dir.join(name), m)?;
        }
        Ok(())
    }

    /// Loads a detector and checks it accepts `input`-wide vectors.
    pub fn load(dir: &Path, input: usize) -> Result<Self> {
        let mut ms = Vec::with_capacity(4);
        for name in FILES {
            ms.push(load_matrix(&dir.join(name))?);
        }
        let [w1, b1, w2, b2]: [Matrix; 4] = ms.try_into().expect("four files");
        let h = w1.cols();
        let ok = w1.rows() == input && b1.shape() == (1, h) && w2.shape() == (h, 1) && b2.shape() == (1, 1);
        if !ok {
            return Err(Error::Artifact {
                path: dir.to_path_buf(),
                msg: format!(
                    "expected detector {input}x{h} / 1x{h} / {h}x1 / 1x1, found {}x{} / {}x{} / {}x{} / {}x{}",
                    w1.rows(),
                    w1.cols(),
                    b1.rows(),
                    b1.cols(),
                    w2.rows(),
                    w2.cols(),
                    b2.rows(),
                    b2.cols()
                ),
            });
        }
        Ok(Self { w1, b1, w2, b2 })
    }
}

pub struct TrainedDetector {
    pub detector: Detector,
    /// Mean training BCE per epoch run.
    pub epoch_losses: Vec<f64>,
    /// Epoch whose weights were kept (0 means the initial weights).
    pub best_epoch: usize,
    pub best_valid_accuracy: Option<f64>,
}

/// Minibatch Adam on mean BCE. With a validation set, keeps the weights of
/// the epoch with the best validation accuracy and stops after `patience`
/// epochs without improvement.
pub fn train_detector(
    x: &Matrix,
    labels: &[f64],
    valid: Option<(&Matrix, &[f64])>,
    cfg: &DetectorConfig,
    rng: &mut Rng,
) -> Result<TrainedDetector> {
    if x.rows() != labels.len() {
        return Err(Error::Dimension(format!("{} vectors for {} labels", x.rows(), labels.len())));
    }
    if x.rows() == 0 {
        return Err(Error::Empty("no training vectors for the detector".into()));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Config("detector labels must be 0 or 1".into()));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        log::warn!("detector training labels are all {}", labels[0]);
    }
    if cfg.batch == 0 || cfg.hidden == 0 {
        return Err(Error::Config("detector batch and hidden width must be at least 1".into()));
    }
    let mut det = Detector::new(x.cols(), cfg.hidden, rng);
    let adam = Adam::new(cfg.lr);
    let mut states: Vec<AdamState> = det.params().iter().map(|m| AdamState::like(m)).collect();
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    let score = |d: &Detector| -> Result<Option<f64>> {
        match valid {
            Some((vx, vy)) if !vy.is_empty() => Ok(Some(d.evaluate(vx, vy, cfg.threshold)?.accuracy)),
            _ => Ok(None),
        }
    };
    let mut best = (det.clone(), 0usize, score(&det)?);

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let idx: Arc<[usize]> = chunk.into();
            let y: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let vars: Vec<Var> = det.params().iter().map(|m| tape.param((*m).clone())).collect();
            let xb = tape.constant(x.select_rows(&idx));
            let z = Detector::record_logits(&mut tape, &vars, xb)?;
            let loss = tape.bce_with_logits(z, y)?;
            let l = tape.scalar(loss);
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("detector loss is {l}"),
                });
            }
            total += l * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            for ((p, s), v) in det.params_mut().into_iter().zip(&mut states).zip(&vars) {
                adam.step(p, &grads.wrt(*v), s)?;
            }
        }
        epoch_losses.push(total / x.rows() as f64);

        match (score(&det)?, best.2) {
            (Some(acc), Some(best_acc)) => {
                if acc > best_acc {
                    best = (det.clone(), epoch, Some(acc));
                } else if epoch - best.1 >= cfg.patience {
                    log::debug!("detector stopped at epoch {epoch}, best epoch {}", best.1);
                    break;
                }
            }
            _ => best = (det.clone(), epoch, None),
        }
    }
    let (detector, best_epoch, best_valid_accuracy) = best;
    Ok(TrainedDetector {
        detector,
        epoch_losses,
        best_epoch,
        best_valid_accuracy,
    })
}
