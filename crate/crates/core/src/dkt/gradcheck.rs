use super::loss::{Lambdas, LossBatch};
use super::network::{forward, Dropout};
use super::params::DktParams;
use super::train::batch_gradient;
use crate::data::StudentSequence;
use crate::error::{Error, Result};

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Parameter index where the maximum occurred.
    pub worst_index: usize,
    pub n_params: usize,
}

/// Magnitude below which relative error is measured against this floor
/// instead of the gradient itself.
const RELATIVE_FLOOR: f64 = 1e-7;

fn total_loss(params: &DktParams, batch: &[StudentSequence], lambdas: Lambdas) -> Result<f64> {
    let states = batch
        .iter()
        .map(|s| forward(params, s, Dropout::Off))
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<_> = states.iter().zip(batch).collect();
    Ok(LossBatch::new(&items)?.terms(lambdas)?.total)
}

/// Compares the backpropagated gradient of `L'` with central differences
/// of step `eps` for every parameter. Meant for tiny networks
/// (`H ≤ 5`, `M ≤ 3`).
pub fn gradient_check(
    params: &DktParams,
    batch: &[StudentSequence],
    lambdas: Lambdas,
    eps: f64,
) -> Result<GradientCheck> {
    if params.hidden() > 5 || params.n_skills() > 3 {
        return Err(Error::Config(
            "gradient checking is limited to H <= 5 and M <= 3".into(),
        ));
    }
    let refs: Vec<&StudentSequence> = batch.iter().collect();
    let (analytic, _) = batch_gradient(params, &refs, lambdas, None)?;

    let mut probe = params.clone();
    let mut worst = (0.0f64, 0usize);
    for i in 0..params.n_params() {
        let base = params.get(i);
        *probe.get_mut(i) = base + eps;
        let up = total_loss(&probe, batch, lambdas)?;
        *probe.get_mut(i) = base - eps;
        let down = total_loss(&probe, batch, lambdas)?;
        *probe.get_mut(i) = base;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.get(i);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst.0,
        worst_index: worst.1,
        n_params: params.n_params(),
    })
}
