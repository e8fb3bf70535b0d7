//! Sparse quadratic and cubic regression by interaction hard thresholding.
//!
//! Iterative hard thresholding over the `p^2` (or `p^3`) interaction
//! coefficients without ever forming the full gradient: the batch gradient
//! `(1/m) sum u_i x_i x_i^T` is count-sketched through FFT compressed
//! products of its two `p x m` factor panels, its heavy entries are read out
//! with index codewords and a majority vote, and the gradient is then only
//! evaluated on those coordinates plus the current support.

pub mod atee;
pub mod codes;
pub mod data;
pub mod error;
pub mod fft;
pub mod gradient;
pub mod hash;
pub mod loss;
pub mod sketch;
pub mod solver;
pub mod tensor;
pub mod vr;

pub use atee::{
    atee_extract, gradient_norm_bound, validate_params, AteeParams, ParamReport, SketchBank,
    SketchPlan, TheoryBounds,
};
pub use codes::{CodeScheme, DecodedVotes, IndexCodeTable};
pub use data::{evaluate_model, gen_bernoulli, gen_uniform, generate, DataSet, DataSpec, Regime};
pub use error::{Error, Result};
pub use gradient::{exact_top_extract, gradient_on_support};
pub use hash::HashPair;
pub use loss::{residuals, LossModel};
pub use sketch::{
    circular_convolve, compressed_product, compressed_product_order3, count_sketch,
    GradientFactors, SketchVector,
};
pub use solver::{
    intht_order3_run, intht_run, support_metrics, support_recovered, DeltaRule, Extraction, IterateRecord,
    OuterPick, RunOutcome, SolverConfig,
};
pub use tensor::{hard_threshold, Coord, Order, SparseTensor};
pub use vr::{intht_vr_run, VrRound};
