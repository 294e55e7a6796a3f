//! Central finite-difference validation of analytic gradients.
//!
//! The checked function receives its input as a [`Var`] on a fresh graph and
//! returns a single-element result.

use super::{AutodiffError, Graph, Tensor, Var};

/// Pins a closure to the higher-ranked signature the checkers expect.
pub fn scalar_fn<F>(f: F) -> F
where
    F: for<'g> Fn(Var<'g>) -> Result<Var<'g>, AutodiffError>,
{
    f
}

fn evaluate<F>(f: &F, x: Tensor) -> Result<f64, AutodiffError>
where
    F: for<'g> Fn(Var<'g>) -> Result<Var<'g>, AutodiffError>,
{
    let graph = Graph::new();
    let input = graph.constant(x);
    let out = f(input)?;
    let value = out.value();
    value
        .item()
        .ok_or_else(|| AutodiffError::NonScalarLoss(value.shape().to_vec()))
}

/// Analytic gradient of `f` at `x`.
pub fn analytic_gradient<F>(f: &F, x: &Tensor) -> Result<Tensor, AutodiffError>
where
    F: for<'g> Fn(Var<'g>) -> Result<Var<'g>, AutodiffError>,
{
    let graph = Graph::new();
    let input = graph.leaf(x.clone());
    let out = f(input)?;
    let grads = graph.backward(out)?;
    Ok(grads
        .get(input)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape())))
}

/// Central-difference estimate of `∂f/∂x_i`.
pub fn numeric_partial<F>(f: &F, x: &Tensor, coord: usize, step: f64) -> Result<f64, AutodiffError>
where
    F: for<'g> Fn(Var<'g>) -> Result<Var<'g>, AutodiffError>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(AutodiffError::InvalidStep(step));
    }
    let mut plus = x.data().to_vec();
    let mut minus = plus.clone();
    plus[coord] += step;
    minus[coord] -= step;
    let fp = evaluate(f, Tensor::new(x.shape().to_vec(), plus)?)?;
    let fm = evaluate(f, Tensor::new(x.shape().to_vec(), minus)?)?;
    Ok((fp - fm) / (2.0 * step))
}

/// Max over `coords` of `|analytic - numeric| / max(1, |numeric|)`.
pub fn check_gradients_at<F>(
    f: &F,
    x: &Tensor,
    step: f64,
    coords: &[usize],
) -> Result<f64, AutodiffError>
where
    F: for<'g> Fn(Var<'g>) -> Result<Var<'g>, AutodiffError>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(AutodiffError::InvalidStep(step));
    }
    let analytic = analytic_gradient(f, x)?;
    let mut worst = 0.0_f64;
    for &i in coords {
        let numeric = numeric_partial(f, x, i, step)?;
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// [`check_gradients_at`] over every coordinate of `x`.
pub fn check_gradients<F>(f: &F, x: &Tensor, step: f64) -> Result<f64, AutodiffError>
where
    F: for<'g> Fn(Var<'g>) -> Result<Var<'g>, AutodiffError>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    check_gradients_at(f, x, step, &coords)
}
