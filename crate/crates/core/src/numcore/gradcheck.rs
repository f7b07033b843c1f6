//! Central finite-difference gradient checking.
//!
//! The checker only evaluates the forward pass; it never reads gradients
//! produced by the tape for anything but the comparison.

use super::{Matrix, Tape, Var};
use crate::error::Result;

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude below which gradient entries are compared absolutely.
const REL_FLOOR: f64 = 1e-4;

/// Largest relative error between autodiff and central differences over
/// every entry of every parameter.
///
/// `build` receives a fresh tape and one trainable leaf per entry of
/// `params`, and returns the scalar loss.
pub fn check_gradients<F>(params: &[Matrix], build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Matrix]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.param(m.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };
    let (tape, vars, loss) = eval(params)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut worst = 0.0f64;
    let mut work = params.to_vec();
    for (p, g) in analytic.iter().enumerate() {
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + FD_STEP;
            let (t, _, l) = eval(&work)?;
            let up = t.scalar(l);
            work[p].data_mut()[k] = orig - FD_STEP;
            let (t, _, l) = eval(&work)?;
            let down = t.scalar(l);
            work[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(g.data()[k], numeric));
        }
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Matrix with entries uniform in `[-1, 1)`.
pub fn random_matrix<R: rand::Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}
