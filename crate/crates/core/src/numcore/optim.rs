use super::Matrix;
use crate::error::Result;

/// Adam with bias correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update of `param` from `grad`; moments in `state` are updated in place.
    pub fn step(&self, param: &mut Matrix, grad: &Matrix, state: &mut AdamState) -> Result<()> {
        param.expect_same_shape(grad, "adam gradient")?;
        param.expect_same_shape(&state.m, "adam state")?;
        state.t += 1;
        let t = state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        let it = param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(state.m.data_mut().iter_mut().zip(state.v.data_mut()));
        for ((p, &g), (m, v)) in it {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// First and second moment estimates for one parameter matrix.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
        }
    }

    pub fn like(param: &Matrix) -> Self {
        Self::new(param.rows(), param.cols())
    }
}

/// A parameter matrix bundled with its optimizer state.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Matrix,
    pub state: AdamState,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let state = AdamState::like(&value);
        Self { value, state }
    }

    pub fn update(&mut self, adam: &Adam, grad: &Matrix) -> Result<()> {
        adam.step(&mut self.value, grad, &mut self.state)
    }
}
