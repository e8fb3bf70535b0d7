//! Loss models and per-sample residuals.

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::tensor::SparseTensor;

/// The gradient of every supported loss factors as `u(Theta, x, y) * x (x) x`;
/// a loss model only has to supply the scalar `u`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossModel {
    /// `f = (prediction - y)^2 / 2`, residual `u = prediction - y`.
    #[default]
    Squared,
}

impl LossModel {
    #[inline]
    pub fn residual(&self, prediction: f64, y: f64) -> f64 {
        match self {
            LossModel::Squared => prediction - y,
        }
    }

    pub fn loss(&self, prediction: f64, y: f64) -> f64 {
        match self {
            LossModel::Squared => 0.5 * (prediction - y) * (prediction - y),
        }
    }
}

/// Residuals `u_i` for the samples in `batch`, in batch order.
pub fn residuals(
    theta: &SparseTensor,
    batch: &[usize],
    data: &DataSet,
    loss: LossModel,
) -> Result<Vec<f64>> {
    if theta.dim() != data.dim() {
        return Err(Error::size(format!(
            "parameter dimension {} vs data dimension {}",
            theta.dim(),
            data.dim()
        )));
    }
    batch
        .iter()
        .map(|&i| {
            if i >= data.n() {
                return Err(Error::data(format!(
                    "sample index {i} out of range for {} samples",
                    data.n()
                )));
            }
            Ok(loss.residual(theta.evaluate_unchecked(data.x(i)), data.y[i]))
        })
        .collect()
}
