//! IntHT with variance reduction.
//!
//! Each outer round fixes one code table and hash family, sketches the
//! full-data gradient at the round's anchor once, and reuses that sketch in
//! every inner step: by linearity the anchor sketch plus the sketch of the
//! residual-difference panels is the sketch of the variance-reduced gradient.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atee::{SketchBank, SketchPlan};
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::gradient::gradient_from_residuals;
use crate::hash::derive_seed;
use crate::loss::residuals;
use crate::solver::{
    batch_factors, draw_batch, support_metrics, thresholded_step, IterateRecord, OuterPick,
    RunOutcome, SolverConfig,
};
use crate::tensor::{Coord, SparseTensor};

const TAG_ROUND: u64 = 0x5652_524F_554E_44;
const TAG_PICK: u64 = 0x5652_5049_434B;

/// State shared by the inner steps of one outer round.
pub struct VrRound<'a> {
    cfg: &'a SolverConfig,
    data: &'a DataSet,
    anchor: SparseTensor,
    all: Vec<usize>,
    anchor_residuals: Vec<f64>,
    plan: SketchPlan,
    anchor_bank: SketchBank,
}

/// Result of one inner step.
pub struct VrStep {
    pub theta: SparseTensor,
    pub proposed: usize,
    pub delta: f64,
    /// Combined sketch used for decoding.
    pub bank: SketchBank,
}

impl<'a> VrRound<'a> {
    pub fn start(
        cfg: &'a SolverConfig,
        data: &'a DataSet,
        anchor: SparseTensor,
        seed: u64,
    ) -> Result<Self> {
        let all: Vec<usize> = (0..data.n()).collect();
        let anchor_residuals = residuals(&anchor, &all, data, cfg.loss)?;
        let full = batch_factors(data, &all, &anchor_residuals)?;
        // The plan does not depend on delta; any positive placeholder validates.
        let plan = SketchPlan::new(data.dim(), data.order(), &cfg.atee_params(1.0), seed)?;
        let anchor_bank = plan.sketch(&full)?;
        Ok(VrRound {
            cfg,
            data,
            anchor,
            all,
            anchor_residuals,
            plan,
            anchor_bank,
        })
    }

    pub fn plan(&self) -> &SketchPlan {
        &self.plan
    }

    pub fn anchor_bank(&self) -> &SketchBank {
        &self.anchor_bank
    }

    /// Residual differences `u(theta) - u(anchor)` on the batch.
    pub fn residual_differences(&self, theta: &SparseTensor, batch: &[usize]) -> Result<Vec<f64>> {
        let now = residuals(theta, batch, self.data, self.cfg.loss)?;
        let then = residuals(&self.anchor, batch, self.data, self.cfg.loss)?;
        Ok(now.iter().zip(&then).map(|(a, b)| a - b).collect())
    }

    /// Sketch of the correction panels built from residual differences.
    pub fn correction_bank(&self, diffs: &[f64], batch: &[usize]) -> Result<SketchBank> {
        let f = batch_factors(self.data, batch, diffs)?;
        self.plan.sketch(&f)
    }

    /// Full anchor gradient plus the batch correction, on `support`.
    pub fn gradient(
        &self,
        diffs: &[f64],
        batch: &[usize],
        support: &BTreeSet<Coord>,
    ) -> Result<Vec<(Coord, f64)>> {
        let full = gradient_from_residuals(&self.anchor_residuals, &self.all, support, self.data)?;
        let corr = gradient_from_residuals(diffs, batch, support, self.data)?;
        Ok(full
            .into_iter()
            .zip(corr)
            .map(|((c, a), (_, b))| (c, a + b))
            .collect())
    }

    /// Full anchor gradient alone on `support`.
    pub fn anchor_gradient(&self, support: &BTreeSet<Coord>) -> Result<Vec<(Coord, f64)>> {
        gradient_from_residuals(&self.anchor_residuals, &self.all, support, self.data)
    }

    pub fn step(&self, theta: &SparseTensor, batch: &[usize]) -> Result<VrStep> {
        let diffs = self.residual_differences(theta, batch)?;
        let bank = self.anchor_bank.add(&self.correction_bank(&diffs, batch)?)?;
        let delta = self.cfg.delta.resolve(&bank, self.cfg.k, 2 * self.cfg.k);
        let mut support: BTreeSet<Coord> = if delta > 0.0 {
            self.plan
                .extract(&bank, delta)
                .selected
                .into_iter()
                .map(|c| c.canonical())
                .collect()
        } else {
            BTreeSet::new()
        };
        let proposed = support.len();
        support.extend(theta.support());
        let grad = self.gradient(&diffs, batch, &support)?;
        Ok(VrStep {
            theta: thresholded_step(theta, &grad, self.cfg.eta, self.cfg.k),
            proposed,
            delta,
            bank,
        })
    }
}

/// IntHT-VR: `cfg.iters` outer rounds of `cfg.inner` inner steps each.
pub fn intht_vr_run(
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
    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.iters);
    for outer in 0..cfg.iters {
        let round_seed = derive_seed(cfg.seed, TAG_ROUND, outer as u64);
        let round = VrRound::start(cfg, data, theta.clone(), round_seed)?;
        let mut iterates = Vec::with_capacity(cfg.inner + 1);
        iterates.push(theta.clone());
        let mut proposed = 0;
        let mut delta = f64::NAN;
        let mut current = theta.clone();
        for j in 0..cfg.inner {
            let batch = draw_batch(data.n(), cfg.batch, round_seed, j as u64);
            let step = round.step(&current, &batch)?;
            proposed = step.proposed;
            delta = step.delta;
            current = step.theta;
            iterates.push(current.clone());
        }
        let pick = match cfg.outer_pick {
            OuterPick::Last => cfg.inner,
            OuterPick::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_PICK, outer as u64));
                rng.random_range(0..cfg.inner)
            }
        };
        theta = iterates.swap_remove(pick);
        let (err, precision, recall) = support_metrics(&theta, truth);
        records.push(IterateRecord {
            t: outer + 1,
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
