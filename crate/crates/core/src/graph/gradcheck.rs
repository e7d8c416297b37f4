//! Central finite-difference gradient verification.
//!
//! Used by unit tests throughout the crate and by the acceptance suite.
//! The function under test rebuilds its graph from plain arrays on every
//! call, so the numeric and analytic paths stay independent.

use super::{Scalar, Tape, Var};
use ndarray::ArrayD;

/// Numerically estimate `d f / d inputs[i]` with central differences.
pub fn numeric_grad<T: Scalar>(
    inputs: &[ArrayD<T>],
    which: usize,
    f: &mut dyn FnMut(&[ArrayD<T>]) -> T,
    step: T,
) -> ArrayD<T> {
    let mut inputs = inputs.to_vec();
    let mut grad = ArrayD::zeros(inputs[which].raw_dim());
    let n = inputs[which].len();
    for idx in 0..n {
        let orig = inputs[which].as_slice().unwrap()[idx];
        inputs[which].as_slice_mut().unwrap()[idx] = orig + step;
        let plus = f(&inputs);
        inputs[which].as_slice_mut().unwrap()[idx] = orig - step;
        let minus = f(&inputs);
        inputs[which].as_slice_mut().unwrap()[idx] = orig;
        grad.as_slice_mut().unwrap()[idx] = (plus - minus) / (step + step);
    }
    grad
}

/// Relative error between analytic and numeric gradients, using the
/// standard `|a - n| / max(|a|, |n|, floor)` normalization.
pub fn max_relative_error<T: Scalar>(analytic: &ArrayD<T>, numeric: &ArrayD<T>, floor: T) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs()).max(floor);
            ((a - n).abs() / denom).to_f64()
        })
        .fold(0.0, f64::max)
}

/// Build the graph with every input as a leaf, backpropagate, and compare
/// each input's gradient against central differences. Panics on mismatch.
///
/// `tol` is the maximum relative error; `floor` the denominator floor that
/// turns the comparison absolute for near-zero gradients.
pub fn check_gradients(
    inputs: &[ArrayD<f64>],
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
    tol: f64,
    floor: f64,
) {
    let mut tape: Tape<f64> = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let root = build(&mut tape, &vars);
    let loss = tape.scalar(root);
    assert!(loss.is_finite(), "loss not finite: {loss}");
    let grads = tape.backward(root);

    let mut eval = |xs: &[ArrayD<f64>]| {
        let mut t: Tape<f64> = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let r = build(&mut t, &vs);
        t.scalar(r)
    };

    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| ArrayD::zeros(inputs[i].raw_dim()));
        let numeric = numeric_grad(inputs, i, &mut eval, 1e-5);
        let err = max_relative_error(&analytic, &numeric, floor);
        assert!(
            err <= tol,
            "gradient mismatch on input {i}: max relative error {err:.3e} > {tol:.1e}"
        );
    }
}
