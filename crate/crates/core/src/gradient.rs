//! Batch gradients: support-restricted evaluation and exact top-element
//! extraction from materialized factor products.
//!
//! The parameter lives on canonical coordinates, so the gradient entry for a
//! coordinate is `(1/m) sum_i u_i prod x_i[idx]`, and the same value is read
//! at every permutation of the coordinate in the symmetric product tensor.

use std::collections::BTreeSet;

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::loss::{residuals, LossModel};
use crate::sketch::GradientFactors;
use crate::tensor::{top_k_by_magnitude, Coord, Order, SparseTensor};

/// Gradient entries on `support` given precomputed residuals for `batch`.
///
/// Returns one value per support coordinate, in the support's order.
pub fn gradient_from_residuals(
    residuals: &[f64],
    batch: &[usize],
    support: &BTreeSet<Coord>,
    data: &DataSet,
) -> Result<Vec<(Coord, f64)>> {
    if residuals.len() != batch.len() {
        return Err(Error::size("one residual per batch sample required"));
    }
    let coords: Vec<Coord> = support.iter().copied().collect();
    for c in &coords {
        if c.max_index() >= data.dim() {
            return Err(Error::size(format!("coordinate {c:?} outside dimension {}", data.dim())));
        }
    }
    let mut acc = vec![0.0; coords.len()];
    for (&i, &u) in batch.iter().zip(residuals) {
        if i >= data.n() {
            return Err(Error::data(format!("sample index {i} out of range")));
        }
        if u == 0.0 {
            continue;
        }
        let x = data.x(i);
        for (a, c) in acc.iter_mut().zip(&coords) {
            *a += u * c.monomial(x);
        }
    }
    let m = batch.len().max(1) as f64;
    Ok(coords.into_iter().zip(acc).map(|(c, a)| (c, a / m)).collect())
}

/// Batch gradient at `theta` restricted to `support` (zero entries omitted).
pub fn gradient_on_support(
    theta: &SparseTensor,
    batch: &[usize],
    support: &BTreeSet<Coord>,
    data: &DataSet,
    loss: LossModel,
) -> Result<SparseTensor> {
    let u = residuals(theta, batch, data, loss)?;
    let g = gradient_from_residuals(&u, batch, support, data)?;
    SparseTensor::from_entries(data.dim(), theta.order(), g)
}

/// Canonical entries of `(1/m) * product` for the materialized product tensor.
pub fn canonical_gradient_entries(f: &GradientFactors) -> Vec<(Coord, f64)> {
    let p = f.dim();
    let m = f.cols().max(1) as f64;
    let dense = f.materialize_product();
    let mut out = Vec::new();
    match f.order() {
        Order::Two => {
            for i in 0..p {
                for j in i..p {
                    out.push((Coord::pair(i, j), dense[i * p + j] / m));
                }
            }
        }
        Order::Three => {
            for i in 0..p {
                for j in i..p {
                    for k in j..p {
                        out.push((Coord::triple(i, j, k), dense[(i * p + j) * p + k] / m));
                    }
                }
            }
        }
    }
    out
}

/// Exact top-`k_top` canonical coordinates of the batch gradient, by
/// magnitude with ties going to the smaller coordinate. Materializes the
/// product: quadratic (cubic) in `p`.
pub fn exact_top_extract(f: &GradientFactors, k_top: usize) -> Vec<Coord> {
    top_k_by_magnitude(canonical_gradient_entries(f), k_top)
        .into_iter()
        .map(|(c, _)| c)
        .collect()
}
