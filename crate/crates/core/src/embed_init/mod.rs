//! Initial entity and relation features from TransE.

mod store;
mod transe;

pub use store::{load_matrix, load_sidecar, save_matrix, save_sidecar, MATRIX_MAGIC};
pub use transe::{l1_distance, train_transe, TransEConfig, TransEModel};

use crate::numcore::{Matrix, Rng};

/// Dense embedding rows for entities or relations.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub values: Matrix,
}

impl EmbeddingTable {
    pub fn new(values: Matrix) -> Self {
        Self { values }
    }

    /// Entries uniform in `(-6/sqrt(dim), 6/sqrt(dim))`.
    pub fn uniform(count: usize, dim: usize, rng: &mut Rng) -> Self {
        let bound = 6.0 / (dim as f64).sqrt();
        let data = (0..count * dim).map(|_| rng.uniform(-bound, bound)).collect();
        Self::new(Matrix::from_vec(count, dim, data).expect("sized buffer"))
    }

    pub fn count(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Scales every row to unit L2 norm; zero rows are left alone.
    pub fn normalize_rows(&mut self) {
        for r in 0..self.values.rows() {
            let row = self.values.row_mut(r);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
}
