use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numcore::{sigmoid, Matrix, Rng, Tape, Var};

/// Initial negative slope of every PReLU.
pub const PRELU_INIT: f64 = 0.25;

/// Projection, GCN stack and bilinear discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveModel {
    /// `relation_dim x feature_dim`; node features are `relations * theta3`.
    pub theta3: Matrix,
    pub gcn: Vec<Matrix>,
    /// One learned 1x1 slope per GCN layer.
    pub slopes: Vec<Matrix>,
    /// `feature_dim x feature_dim`.
    pub discriminator: Matrix,
}

impl ContrastiveModel {
    pub fn new(relation_dim: usize, feature_dim: usize, layers: usize, rng: &mut Rng) -> Self {
        Self {
            theta3: rng.glorot(relation_dim, feature_dim),
            gcn: (0..layers).map(|_| rng.glorot(feature_dim, feature_dim)).collect(),
            slopes: (0..layers).map(|_| Matrix::scalar(PRELU_INIT)).collect(),
            discriminator: rng.glorot(feature_dim, feature_dim),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.theta3.cols()
    }

    /// `theta3`, then `(weight, slope)` per layer, then the discriminator.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.theta3];
        for (w, s) in self.gcn.iter().zip(&self.slopes) {
            out.push(w);
            out.push(s);
        }
        out.push(&self.discriminator);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.theta3];
        for (w, s) in self.gcn.iter_mut().zip(self.slopes.iter_mut()) {
            out.push(w);
            out.push(s);
        }
        out.push(&mut self.discriminator);
        out
    }

    pub fn num_params(&self) -> usize {
        2 + 2 * self.gcn.len()
    }

    /// `H <- PReLU(adj * H * W)` for every layer. `layer_vars` holds
    /// `(weight, slope)` pairs.
    pub fn record_gcn(tape: &mut Tape, layer_vars: &[Var], adj: Var, x: Var) -> Result<Var> {
        let mut h = x;
        for p in layer_vars.chunks_exact(2) {
            let prop = tape.matmul(adj, h)?;
            let lin = tape.matmul(prop, p[0])?;
            h = tape.prelu(lin, p[1])?;
        }
        Ok(h)
    }

    /// Contrastive loss on `tape`. `vars` holds one node per entry of
    /// [`ContrastiveModel::params`]; `perm` shuffles node features for the
    /// negative branch.
    ///
    /// Mean binary cross-entropy of the discriminator over the `n` real and
    /// `n` shuffled node states, both scored against the mean of the real
    /// states.
    pub fn record_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        adj: Var,
        relations: Var,
        perm: &[usize],
    ) -> Result<Var> {
        if vars.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "contrastive model expects {} parameter nodes, got {}",
                self.num_params(),
                vars.len()
            )));
        }
        let n = tape.shape(relations).0;
        if perm.len() != n {
            return Err(Error::Dimension(format!("permutation of {} rows for {n} nodes", perm.len())));
        }
        let layers = &vars[1..vars.len() - 1];
        let x = tape.matmul(relations, vars[0])?;
        let x_neg = tape.gather_rows(x, perm.to_vec())?;
        let h = Self::record_gcn(tape, layers, adj, x)?;
        let h_neg = Self::record_gcn(tape, layers, adj, x_neg)?;
        let g = tape.mean_rows(h)?;
        let gt = tape.transpose(g);
        let v = tape.matmul(vars[vars.len() - 1], gt)?;
        let pos = tape.matmul(h, v)?;
        let neg = tape.matmul(h_neg, v)?;
        let logits = tape.concat_rows(&[pos, neg])?;
        let targets: Arc<[f64]> = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
        tape.bce_with_logits(logits, targets)
    }

    fn constants(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|m| tape.constant(m.clone())).collect()
    }

    /// GCN stack applied to node features `x` with normalized adjacency `adj`.
    pub fn gcn_forward(&self, adj: &Matrix, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.constants(&mut tape);
        let a = tape.constant(adj.clone());
        let xv = tape.constant(x.clone());
        let h = Self::record_gcn(&mut tape, &vars[1..vars.len() - 1], a, xv)?;
        Ok(tape.value(h).clone())
    }

    /// `sigmoid(h^T W g)`.
    pub fn discriminate(&self, h: &[f64], g: &[f64]) -> Result<f64> {
        let d = self.discriminator.rows();
        if h.len() != d || g.len() != d {
            return Err(Error::Dimension(format!(
                "discriminator is {d}x{d}, got vectors of {} and {}",
                h.len(),
                g.len()
            )));
        }
        let wg = self.discriminator.matmul(&Matrix::col_vector(g))?;
        let logit: f64 = h.iter().zip(wg.data()).map(|(a, b)| a * b).sum();
        Ok(sigmoid(logit))
    }

    /// Contrastive loss for the given relation features, drawing the
    /// feature shuffle from `rng`.
    pub fn loss(&self, adj: &Matrix, relations: &Matrix, rng: &mut Rng) -> Result<f64> {
        let perm = rng.permutation(relations.rows());
        let mut tape = Tape::new();
        let vars = self.constants(&mut tape);
        let a = tape.constant(adj.clone());
        let r = tape.constant(relations.clone());
        let l = self.record_loss(&mut tape, &vars, a, r, &perm)?;
        Ok(tape.scalar(l))
    }
}

/// Uniformly random row permutation of `x`.
pub fn corrupt_features(x: &Matrix, rng: &mut Rng) -> Matrix {
    x.select_rows(&rng.permutation(x.rows()))
}

/// Column-wise mean of the rows of `h`.
pub fn readout(h: &Matrix) -> Result<Vec<f64>> {
    if h.rows() == 0 {
        return Err(Error::Empty("readout of zero node states".into()));
    }
    let n = h.rows() as f64;
    let mut g = vec![0.0; h.cols()];
    for r in 0..h.rows() {
        for (a, x) in g.iter_mut().zip(h.row(r)) {
            *a += x;
        }
    }
    g.iter_mut().for_each(|a| *a /= n);
    Ok(g)
}
