//! Interaction hard thresholding and its exact-extraction baseline.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::debug;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::atee::{theory_delta, AteeParams, SketchBank, SketchPlan, TheoryBounds};
use crate::codes::CodeScheme;
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::gradient::{exact_top_extract, gradient_from_residuals};
use crate::hash::derive_seed;
use crate::loss::{residuals, LossModel};
use crate::sketch::GradientFactors;
use crate::tensor::{hard_threshold, hard_threshold_entries, Coord, SparseTensor};

const TAG_BATCH: u64 = 0x4241_5443_48;
const TAG_SKETCH: u64 = 0x534B_4554_4348;

/// How the top gradient coordinates are found each iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extraction {
    /// Sketch-based approximate extraction.
    Atee,
    /// Materialize the gradient and take its exact top entries.
    Exact,
}

/// Significance level used by approximate extraction.
#[derive(Clone, Debug, PartialEq)]
pub enum DeltaRule {
    Fixed(f64),
    /// `gradient_norm_bound(bounds, k) / sqrt(2 k_top)`, constant over the run.
    Theory(TheoryBounds),
    /// `factor * ||G_B||_F / sqrt(b)`, re-estimated from every sketch: the
    /// root-mean-square bucket value of the unmasked rows.
    BatchNorm(f64),
}

impl DeltaRule {
    pub(crate) fn resolve(&self, bank: &SketchBank, k: usize, k_top: usize) -> f64 {
        match self {
            DeltaRule::Fixed(v) => *v,
            DeltaRule::Theory(bounds) => theory_delta(bounds, k, k_top),
            DeltaRule::BatchNorm(factor) => factor * bank.rms_bucket(),
        }
    }
}

impl fmt::Display for DeltaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaRule::Fixed(v) => write!(f, "fixed:{v}"),
            DeltaRule::Theory(_) => write!(f, "theory"),
            DeltaRule::BatchNorm(c) => write!(f, "batch-norm:{c}"),
        }
    }
}

/// How IntHT-VR picks the next outer iterate among the inner iterates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterPick {
    /// Uniform over inner iterates `0 .. t_inner - 1`.
    Uniform,
    /// The last inner iterate.
    Last,
}

impl FromStr for OuterPick {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(OuterPick::Uniform),
            "last" => Ok(OuterPick::Last),
            _ => Err(Error::config(format!("unknown outer pick '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Estimation sparsity.
    pub k: usize,
    /// Iterations (outer rounds for IntHT-VR).
    pub iters: usize,
    pub eta: f64,
    /// Batch size `m`.
    pub batch: usize,
    pub extraction: Extraction,
    pub buckets: usize,
    pub repetitions: usize,
    pub delta: DeltaRule,
    pub scheme: CodeScheme,
    pub hash_reuse: bool,
    pub loss: LossModel,
    pub seed: u64,
    /// Inner steps per outer round (IntHT-VR).
    pub inner: usize,
    pub outer_pick: OuterPick,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k: 60,
            iters: 150,
            eta: 0.2,
            batch: 100,
            extraction: Extraction::Atee,
            buckets: 360,
            repetitions: 3,
            delta: DeltaRule::BatchNorm(DEFAULT_DELTA_FACTOR),
            scheme: CodeScheme::PlainBinary,
            hash_reuse: false,
            loss: LossModel::Squared,
            seed: 0,
            inner: 20,
            outer_pick: OuterPick::Uniform,
        }
    }
}

pub const DEFAULT_DELTA_FACTOR: f64 = 2.0;

impl SolverConfig {
    pub fn validate(&self, data: &DataSet) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch size m must be positive"));
        }
        if self.batch > data.n() {
            return Err(Error::config(format!(
                "batch size m = {} exceeds sample count n = {}",
                self.batch,
                data.n()
            )));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::config("step size must be positive"));
        }
        if self.inner == 0 {
            return Err(Error::config("inner round length must be at least 1"));
        }
        if self.extraction == Extraction::Atee {
            self.atee_params(1.0).validate()?;
            if let DeltaRule::Fixed(v) = self.delta {
                if !(v > 0.0) {
                    return Err(Error::config("significance level must be positive"));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn atee_params(&self, delta: f64) -> AteeParams {
        AteeParams {
            buckets: self.buckets,
            repetitions: self.repetitions,
            delta,
            k_top: 2 * self.k,
            scheme: self.scheme,
            hash_reuse: self.hash_reuse,
        }
    }
}

/// Per-iteration metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub t: usize,
    /// `||Theta^t - Theta*||_F` (NaN without ground truth).
    pub frob_error: f64,
    /// Precision of `supp(H_K(Theta^t))` against `supp(Theta*)`.
    pub support_precision: f64,
    pub support_recall: f64,
    /// Coordinates proposed by extraction this iteration.
    pub atee_set_size: usize,
    pub delta: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub theta: SparseTensor,
    pub records: Vec<IterateRecord>,
}

impl RunOutcome {
    pub fn final_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.frob_error)
    }

    /// First iteration whose error is below `threshold`.
    pub fn iterations_to(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.frob_error < threshold).map(|r| r.t)
    }
}

/// `(frobenius error, support precision, support recall)` of `theta`, all NaN
/// without a ground truth. The support is taken on `H_K(theta)`, `K = |truth|`.
pub fn support_metrics(theta: &SparseTensor, truth: Option<&SparseTensor>) -> (f64, f64, f64) {
    let Some(truth) = truth else {
        return (f64::NAN, f64::NAN, f64::NAN);
    };
    let err = theta.frobenius_distance(truth);
    let target = truth.support();
    let est = hard_threshold(theta, truth.len()).support();
    let hits = est.intersection(&target).count() as f64;
    let precision = if est.is_empty() {
        if target.is_empty() { 1.0 } else { 0.0 }
    } else {
        hits / est.len() as f64
    };
    let recall = if target.is_empty() {
        1.0
    } else {
        hits / target.len() as f64
    };
    (err, precision, recall)
}

/// Exact support recovery: `supp(H_K(theta)) == supp(truth)`.
pub fn support_recovered(theta: &SparseTensor, truth: &SparseTensor) -> bool {
    hard_threshold(theta, truth.len()).support() == truth.support()
}

/// `H_k(theta - eta * grad)` where `grad` covers every coordinate of interest.
pub(crate) fn thresholded_step(
    theta: &SparseTensor,
    grad: &[(Coord, f64)],
    eta: f64,
    k: usize,
) -> SparseTensor {
    let mut moved: Vec<(Coord, f64)> = grad
        .iter()
        .map(|&(c, g)| (c, theta.get(&c) - eta * g))
        .collect();
    // coordinates of theta that the gradient did not cover keep their value
    for (c, v) in theta.iter() {
        if grad.binary_search_by(|(gc, _)| gc.cmp(&c)).is_err() {
            moved.push((c, v));
        }
    }
    hard_threshold_entries(theta.dim(), theta.order(), moved, k)
}

pub(crate) fn draw_batch(n: usize, m: usize, seed: u64, t: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_BATCH, t));
    let mut b = if m == n {
        (0..n).collect()
    } else {
        sample(&mut rng, n, m).into_vec()
    };
    b.sort_unstable();
    b
}

pub(crate) fn batch_factors(data: &DataSet, batch: &[usize], u: &[f64]) -> Result<GradientFactors> {
    GradientFactors::from_samples(
        data.dim(),
        data.order(),
        batch.iter().zip(u).map(|(&i, &ui)| (data.x(i), ui)),
    )
}

/// Candidate coordinates (canonical) plus the significance level used.
fn extract_candidates(
    cfg: &SolverConfig,
    f: &GradientFactors,
    seed: u64,
) -> Result<(BTreeSet<Coord>, f64)> {
    let k_top = 2 * cfg.k;
    match cfg.extraction {
        Extraction::Exact => Ok((exact_top_extract(f, k_top).into_iter().collect(), f64::NAN)),
        Extraction::Atee => {
            let plan = SketchPlan::new(f.dim(), f.order(), &cfg.atee_params(1.0), seed)?;
            let bank = plan.sketch(f)?;
            let delta = cfg.delta.resolve(&bank, cfg.k, k_top);
            if !(delta > 0.0) {
                // zero gradient: nothing to extract
                return Ok((BTreeSet::new(), delta));
            }
            let ex = plan.extract(&bank, delta);
            Ok((ex.selected.into_iter().map(|c| c.canonical()).collect(), delta))
        }
    }
}

/// IntHT on order-2 or order-3 data (the order is taken from the data set).
///
/// `truth` only feeds the metrics. `init` replaces the zero start.
pub fn intht_run(
    cfg: &SolverConfig,
    data: &DataSet,
    truth: Option<&SparseTensor>,
    init: Option<&SparseTensor>,
) -> Result<RunOutcome> {
    cfg.validate(data)?;
    let mut theta = match init {
        Some(t) => {
            if t.dim() != data.dim() || t.order() != data.order() {
                return Err(Error::size("initial parameter does not match the data"));
            }
            t.clone()
        }
        None => SparseTensor::zeros(data.dim(), data.order()),
    };
    let mut records = Vec::with_capacity(cfg.iters);
    let start = Instant::now();
    for t in 0..cfg.iters {
        let batch = draw_batch(data.n(), cfg.batch, cfg.seed, t as u64);
        let u = residuals(&theta, &batch, data, cfg.loss)?;
        let f = batch_factors(data, &batch, &u)?;
        let (mut support, delta) =
            extract_candidates(cfg, &f, derive_seed(cfg.seed, TAG_SKETCH, t as u64))?;
        let proposed = support.len();
        support.extend(theta.support());
        let grad = gradient_from_residuals(&u, &batch, &support, data)?;
        theta = thresholded_step(&theta, &grad, cfg.eta, cfg.k);

        let (err, precision, recall) = support_metrics(&theta, truth);
        debug!("iter {t}: err {err:.3e} proposed {proposed} delta {delta:.3e}");
        records.push(IterateRecord {
            t: t + 1,
            frob_error: err,
            support_precision: precision,
            support_recall: recall,
            atee_set_size: proposed,
            delta,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(RunOutcome { theta, records })
}

/// Order-3 IntHT; rejects order-2 data.
pub fn intht_order3_run(
    cfg: &SolverConfig,
    data: &DataSet,
    truth: Option<&SparseTensor>,
    init: Option<&SparseTensor>,
) -> Result<RunOutcome> {
    if data.order() != crate::tensor::Order::Three {
        return Err(Error::config("order-3 run needs order-3 data"));
    }
    intht_run(cfg, data, truth, init)
}
