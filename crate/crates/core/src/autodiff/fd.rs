//! Central finite-difference gradient checker.

use super::{AdError, Value};

/// Checks the reverse-mode gradients of `build` against central finite
/// differences, coordinate by coordinate, over the given leaves.
///
/// `build` must construct a fresh 1x1 loss from the current leaf data; it is
/// re-invoked after each perturbation. Returns the worst relative error
/// `|ad - fd| / max(|ad|, |fd|, 1e-3)` over all coordinates.
pub fn finite_difference_check<F>(leaves: &[Value], eps: f64, build: F) -> Result<f64, AdError>
where
    F: Fn() -> Result<Value, AdError>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(AdError::BadHyper(format!("eps must be in (0, 1e-2], got {eps}")));
    }
    let loss = build()?;
    loss.backward()?;
    let analytic: Vec<_> = leaves.iter().map(|l| l.grad().clone()).collect();

    let mut worst: f64 = 0.0;
    for (leaf, ad) in leaves.iter().zip(&analytic) {
        let (rows, cols) = leaf.shape();
        for i in 0..rows {
            for j in 0..cols {
                let orig = leaf.data()[(i, j)];

                let mut bumped = leaf.data().clone();
                bumped[(i, j)] = orig + eps;
                leaf.set_data(bumped);
                let plus = build()?.scalar();

                let mut bumped = leaf.data().clone();
                bumped[(i, j)] = orig - eps;
                leaf.set_data(bumped);
                let minus = build()?.scalar();

                let mut restored = leaf.data().clone();
                restored[(i, j)] = orig;
                leaf.set_data(restored);

                let fd = (plus - minus) / (2.0 * eps);
                let a = ad[(i, j)];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
    }
    Ok(worst)
}
