//! Shared fixtures for the benchmarks.

use intht_core::{gen_uniform, residuals, DataSet, GradientFactors, LossModel, Order, SparseTensor};

/// Uniform-regime data with `n = 20 m` samples.
pub fn uniform_data(p: usize, m: usize, big_k: usize, order: Order, seed: u64) -> DataSet {
    gen_uniform(20 * m, p, big_k, order, seed).expect("valid fixture parameters")
}

/// Gradient factors at the zero parameter over the first `m` samples.
pub fn factors_at_zero(data: &DataSet, m: usize) -> GradientFactors {
    let batch: Vec<usize> = (0..m).collect();
    let zero = SparseTensor::zeros(data.dim(), data.order());
    let u = residuals(&zero, &batch, data, LossModel::Squared).expect("batch in range");
    GradientFactors::from_samples(
        data.dim(),
        data.order(),
        batch.iter().zip(&u).map(|(&i, &ui)| (data.x(i), ui)),
    )
    .expect("consistent panels")
}
