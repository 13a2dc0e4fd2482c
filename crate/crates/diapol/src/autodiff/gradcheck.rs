//! Central finite differences, the independent oracle the gradient tests
//! check the backward pass against.
//!
//! Only forward evaluations are used here; nothing in this module touches
//! [`Graph::backward`](crate::autodiff::Graph::backward).

use crate::autodiff::Tensor;
use crate::error::Result;

/// Central-difference gradient of `f` at `at`, one tensor per input.
pub fn finite_difference(
    f: &mut dyn FnMut(&[Tensor]) -> Result<f64>,
    at: &[Tensor],
    h: f64,
) -> Result<Vec<Tensor>> {
    let mut grads = Vec::with_capacity(at.len());
    for which in 0..at.len() {
        let mut grad = Tensor::zeros(at[which].shape());
        for i in 0..at[which].numel() {
            let mut plus = at.to_vec();
            plus[which].data_mut()[i] += h;
            let mut minus = at.to_vec();
            minus[which].data_mut()[i] -= h;
            grad.data_mut()[i] = (f(&plus)? - f(&minus)?) / (2.0 * h);
        }
        grads.push(grad);
    }
    Ok(grads)
}

/// Largest elementwise relative error between two gradient sets, with a
/// small absolute floor in the denominator so near-zero gradients do not
/// blow the ratio up.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            let denom = av.abs().max(nv.abs()).max(floor);
            worst = worst.max((av - nv).abs() / denom);
        }
    }
    worst
}
