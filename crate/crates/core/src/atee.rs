//! Approximate top-element extraction from an implicit factor product.
//!
//! Each repetition sketches the product once unmasked and once per code bit
//! with one factor restricted to the coordinates whose codeword has that bit
//! set. A bucket dominated by a single heavy entry then reads out that
//! entry's codewords bit by bit. Decoded coordinates are voted on across
//! repetitions.

use crate::codes::{binarify, decode, majority_filter, CodeScheme, DecodedVotes, IndexCodeTable};
use crate::error::{Error, Result};
use crate::hash::{derive_seed, HashPair};
use crate::sketch::{GradientFactors, ProductSketcher};
use crate::tensor::{Coord, Order};

const TAG_HASH: u64 = 0x4154_4545_4841_5348;

/// Constant in the bucket-budget condition `b * delta^2 >= 432 ||G||_F^2`.
pub const BUCKET_CONSTANT: f64 = 432.0;
/// Constant in the repetition condition `d >= 48 ln(2 c k)`.
pub const REPETITION_CONSTANT: f64 = 48.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AteeParams {
    /// Requested bucket budget; also the cap on the returned set.
    pub buckets: usize,
    pub repetitions: usize,
    /// Significance level in gradient-entry units.
    pub delta: f64,
    /// Selection size the caller is after (`2k` inside the optimizer).
    pub k_top: usize,
    pub scheme: CodeScheme,
    /// Use one hash family for every repetition instead of fresh hashes.
    pub hash_reuse: bool,
}

impl AteeParams {
    pub fn new(buckets: usize, repetitions: usize, delta: f64, k_top: usize) -> Self {
        AteeParams {
            buckets,
            repetitions,
            delta,
            k_top,
            scheme: CodeScheme::PlainBinary,
            hash_reuse: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.buckets == 0 {
            return Err(Error::config("bucket budget b must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetition count d must be at least 1"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::config(format!(
                "significance level must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Bucket count actually used: `b` rounded up to a power of two.
    pub fn effective_buckets(&self) -> usize {
        effective_buckets(self.buckets)
    }
}

pub fn effective_buckets(b: usize) -> usize {
    b.max(1).next_power_of_two()
}

/// Hash families and code table shared by every sketch taken under one plan.
#[derive(Clone, Debug)]
pub struct SketchPlan {
    dim: usize,
    order: Order,
    seed: u64,
    cap: usize,
    table: IndexCodeTable,
    hashes: Vec<Vec<HashPair>>,
}

/// `d` repetitions of `order * l` coded rows plus one unmasked row, each of
/// `b` buckets, normalized by the batch size so entries are in gradient units.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchBank {
    pub seed: u64,
    buckets: usize,
    coded_rows: usize,
    reps: Vec<Vec<Vec<f64>>>,
}

impl SketchBank {
    pub fn repetitions(&self) -> usize {
        self.reps.len()
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    /// Rows of repetition `t`: coded rows first, unmasked row last.
    pub fn rows(&self, t: usize) -> &[Vec<f64>] {
        &self.reps[t]
    }

    pub fn coded_rows(&self, t: usize) -> &[Vec<f64>] {
        &self.reps[t][..self.coded_rows]
    }

    pub fn unmasked_row(&self, t: usize) -> &[f64] {
        &self.reps[t][self.coded_rows]
    }

    /// Entrywise sum; both banks must come from the same plan.
    pub fn add(&self, other: &SketchBank) -> Result<SketchBank> {
        if self.seed != other.seed
            || self.buckets != other.buckets
            || self.coded_rows != other.coded_rows
            || self.reps.len() != other.reps.len()
        {
            return Err(Error::size("adding sketch banks from different plans"));
        }
        let reps = self
            .reps
            .iter()
            .zip(&other.reps)
            .map(|(ra, rb)| {
                ra.iter()
                    .zip(rb)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                    .collect()
            })
            .collect();
        Ok(SketchBank {
            reps,
            ..self.clone()
        })
    }

    pub fn max_abs_diff(&self, other: &SketchBank) -> f64 {
        self.reps
            .iter()
            .flatten()
            .flatten()
            .zip(other.reps.iter().flatten().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Root-mean-square bucket value of the unmasked rows. The squared
    /// bucket sum of a count-sketch estimates the squared Frobenius norm of
    /// the sketched tensor, so this is `||G||_F / sqrt(b)` in expectation.
    pub fn rms_bucket(&self) -> f64 {
        if self.reps.is_empty() || self.buckets == 0 {
            return 0.0;
        }
        let total: f64 = (0..self.reps.len())
            .map(|t| self.unmasked_row(t).iter().map(|v| v * v).sum::<f64>())
            .sum();
        (total / (self.reps.len() * self.buckets) as f64).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.reps.iter().flatten().flatten().fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Output of one extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    /// Majority-voted coordinates, highest vote first, at most `b` of them.
    pub selected: Vec<Coord>,
    pub votes: DecodedVotes,
}

impl SketchPlan {
    pub fn new(dim: usize, order: Order, params: &AteeParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let table = IndexCodeTable::build(dim, params.scheme)?;
        let b = params.effective_buckets();
        let arity = order.arity();
        let mut hashes = Vec::with_capacity(params.repetitions);
        for t in 0..params.repetitions {
            let rep = if params.hash_reuse { 0 } else { t };
            let fam = (0..arity)
                .map(|f| HashPair::new(derive_seed(seed, TAG_HASH, (rep * arity + f) as u64), dim, b))
                .collect::<Result<Vec<_>>>()?;
            hashes.push(fam);
        }
        Ok(SketchPlan {
            dim,
            order,
            seed,
            cap: params.buckets,
            table,
            hashes,
        })
    }

    pub fn table(&self) -> &IndexCodeTable {
        &self.table
    }

    pub fn hashes(&self, t: usize) -> &[HashPair] {
        &self.hashes[t]
    }

    pub fn buckets(&self) -> usize {
        self.hashes[0][0].buckets()
    }

    pub fn repetitions(&self) -> usize {
        self.hashes.len()
    }

    /// Sketches the gradient `(1/m) sum_c u_c x_c (x) ...` of the given panels.
    pub fn sketch(&self, f: &GradientFactors) -> Result<SketchBank> {
        if f.dim() != self.dim || f.order() != self.order {
            return Err(Error::size(format!(
                "order-{} panels of dimension {} under an order-{} plan of dimension {}",
                f.order(),
                f.dim(),
                self.order,
                self.dim
            )));
        }
        let mut sk = ProductSketcher::new(self.buckets())?;
        let scale = if f.cols() == 0 { 0.0 } else { 1.0 / f.cols() as f64 };
        let mut reps = Vec::with_capacity(self.hashes.len());
        for fam in &self.hashes {
            let refs: Vec<&HashPair> = fam.iter().collect();
            let mut rows = sk.sketch_rows(f, &refs, Some(&self.table))?;
            for row in rows.iter_mut() {
                row.iter_mut().for_each(|v| *v *= scale);
            }
            reps.push(rows);
        }
        Ok(SketchBank {
            seed: self.seed,
            buckets: self.buckets(),
            coded_rows: self.order.arity() * self.table.len(),
            reps,
        })
    }

    /// Decodes every bucket whose unmasked value exceeds `delta / 2` in
    /// magnitude, votes across repetitions, and keeps at most `b` coordinates.
    pub fn extract(&self, bank: &SketchBank, delta: f64) -> Extraction {
        let half = delta / 2.0;
        let mut votes = DecodedVotes::new(bank.repetitions());
        for t in 0..bank.repetitions() {
            let words = binarify(bank.coded_rows(t), delta);
            let present = bank.unmasked_row(t);
            let decoded = words
                .iter()
                .enumerate()
                .filter(|(q, _)| present[*q].abs() > half)
                .filter_map(|(_, w)| decode(w, &self.table, self.order));
            votes.add_repetition(decoded);
        }
        let mut selected: Vec<Coord> = majority_filter(&votes).into_iter().map(|(c, _)| c).collect();
        selected.truncate(self.cap);
        Extraction { selected, votes }
    }
}

/// One-shot extraction: fresh plan from `seed`, sketch, decode, vote.
pub fn atee_extract(f: &GradientFactors, params: &AteeParams, seed: u64) -> Result<Vec<Coord>> {
    let plan = SketchPlan::new(f.dim(), f.order(), params, seed)?;
    let bank = plan.sketch(f)?;
    Ok(plan.extract(&bank, params.delta).selected)
}

/// Constants from the restricted-curvature assumptions. Only used to size
/// `b`, `d`, `delta` and for the theory step-size schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryBounds {
    /// Restricted smoothness `L`.
    pub smoothness: f64,
    /// Entrywise bound `omega` on the target parameter.
    pub theta_bound: f64,
    /// Bound `G` on the batch gradient norm at the target.
    pub grad_at_target: f64,
    /// Failure-rate control `c` (success probability `1 - 1/c`).
    pub failure_control: f64,
    /// Restricted strong convexity `alpha`, when known.
    pub convexity: Option<f64>,
}

impl Default for TheoryBounds {
    fn default() -> Self {
        TheoryBounds {
            smoothness: 1.0,
            theta_bound: 20.0,
            grad_at_target: 0.0,
            failure_control: 4.0,
            convexity: None,
        }
    }
}

impl TheoryBounds {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.smoothness,
            self.theta_bound,
            self.grad_at_target,
            self.failure_control,
            self.convexity.unwrap_or(0.0),
        ];
        if vals.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("theory bounds must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// `2 L sqrt(k) omega + G`: bound on the batch gradient norm at any k-sparse
/// iterate with entries bounded by `omega`.
pub fn gradient_norm_bound(bounds: &TheoryBounds, k: usize) -> f64 {
    2.0 * bounds.smoothness * (k as f64).sqrt() * bounds.theta_bound + bounds.grad_at_target
}

/// Significance level `gradient_norm_bound / sqrt(2 k_top)`.
pub fn theory_delta(bounds: &TheoryBounds, k: usize, k_top: usize) -> f64 {
    gradient_norm_bound(bounds, k) / ((2 * k_top.max(1)) as f64).sqrt()
}

/// Minimum repetitions `ceil(48 ln(2 c k))`, at least 1.
pub fn min_repetitions(failure_control: f64, k: f64) -> usize {
    let arg = 2.0 * failure_control * k;
    if arg <= 1.0 {
        return 1;
    }
    ((REPETITION_CONSTANT * arg.ln()).ceil() as usize).max(1)
}

/// Minimum bucket count `ceil(432 ||G||^2 / delta^2)`, at least 1.
pub fn min_buckets(grad_norm: f64, delta: f64) -> usize {
    let need = BUCKET_CONSTANT * grad_norm * grad_norm / (delta * delta);
    (need.ceil() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub requested_buckets: usize,
    pub effective_buckets: usize,
    pub min_buckets: usize,
    /// `effective_buckets * delta^2 >= 432 ||G||^2`.
    pub buckets_ok: bool,
    /// Minimum `d` reading the selection size inside the logarithm as `k_top / 2`.
    pub min_repetitions: usize,
    /// Minimum `d` reading it as `k_top`.
    pub min_repetitions_full: usize,
    pub repetitions_ok: bool,
    pub warnings: Vec<String>,
}

impl ParamReport {
    pub fn compliant(&self) -> bool {
        self.buckets_ok && self.repetitions_ok
    }
}

/// Checks `(b, d, delta)` against the recovery conditions. Advisory only.
pub fn validate_params(params: &AteeParams, grad_norm_est: f64, bounds: &TheoryBounds) -> ParamReport {
    let eff = params.effective_buckets();
    let min_b = min_buckets(grad_norm_est, params.delta);
    let buckets_ok =
        eff as f64 * params.delta * params.delta >= BUCKET_CONSTANT * grad_norm_est * grad_norm_est;
    let min_d = min_repetitions(bounds.failure_control, params.k_top as f64 / 2.0);
    let min_d_full = min_repetitions(bounds.failure_control, params.k_top as f64);
    let repetitions_ok = params.repetitions >= min_d;
    let mut warnings = Vec::new();
    if !buckets_ok {
        warnings.push(format!(
            "b = {eff} is below the recovery budget {min_b} for delta = {} and gradient norm {grad_norm_est}",
            params.delta
        ));
    }
    if !repetitions_ok {
        warnings.push(format!(
            "d = {} is below {min_d} (ln argument 2*c*k_top/2); {min_d_full} reading it as 2*c*k_top",
            params.repetitions
        ));
    }
    ParamReport {
        requested_buckets: params.buckets,
        effective_buckets: eff,
        min_buckets: min_b,
        buckets_ok,
        min_repetitions: min_d,
        min_repetitions_full: min_d_full,
        repetitions_ok,
        warnings,
    }
}

/// Distortion of exact hard thresholding: `||H_k(B) - Theta||^2 <= nu ||B - Theta||^2`
/// for `K`-sparse `Theta`, `k >= K`, over `total` coordinates. Returns `(rho, nu)`.
pub fn ht_distortion(big_k: usize, k: usize, total: usize) -> (f64, f64) {
    let m = big_k.min(total.saturating_sub(k)) as f64;
    let denom = (k - big_k.min(k)) as f64 + m;
    let rho = if denom == 0.0 { 0.0 } else { m / denom };
    let nu = 1.0 + (rho + ((4.0 + rho) * rho).sqrt()) / 2.0;
    (rho, nu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_plug_in() {
        let b = TheoryBounds {
            smoothness: 1.0,
            theta_bound: 1.0,
            grad_at_target: 0.0,
            ..Default::default()
        };
        assert_eq!(gradient_norm_bound(&b, 4), 4.0);
        assert_eq!(gradient_norm_bound(&b, 0), 0.0);
        let b = TheoryBounds {
            smoothness: 1.1,
            theta_bound: 20.0,
            grad_at_target: 0.5,
            ..Default::default()
        };
        let v = gradient_norm_bound(&b, 60);
        assert!((v - (2.0 * 1.1 * 60f64.sqrt() * 20.0 + 0.5)).abs() < 1e-12);
        assert!((v - 341.3).abs() < 0.05, "{v}");
    }

    #[test]
    fn minimum_buckets_for_unit_norm() {
        let p = AteeParams::new(1000, 3, 0.5, 40);
        let r = validate_params(&p, 1.0, &TheoryBounds::default());
        assert_eq!(r.min_buckets, 1728);
        assert!(!r.buckets_ok);
        let p = AteeParams::new(2048, 3, 0.5, 40);
        assert!(validate_params(&p, 1.0, &TheoryBounds::default()).buckets_ok);
    }

    #[test]
    fn zero_gradient_any_b_is_compliant() {
        let p = AteeParams::new(1, 3, 0.5, 40);
        let r = validate_params(&p, 0.0, &TheoryBounds::default());
        assert!(r.buckets_ok);
        assert_eq!(r.min_buckets, 1);
    }

    #[test]
    fn repetition_minimum_both_readings() {
        let p = AteeParams::new(64, 3, 1.0, 40);
        let r = validate_params(&p, 0.0, &TheoryBounds::default());
        // ln(2 * 4 * 40) = ln 320
        assert_eq!(r.min_repetitions_full, 277);
        // ln(2 * 4 * 20) = ln 160
        assert_eq!(r.min_repetitions, 244);
        assert!(!r.repetitions_ok);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn params_validation() {
        assert!(AteeParams::new(0, 3, 1.0, 2).validate().is_err());
        assert!(AteeParams::new(8, 0, 1.0, 2).validate().is_err());
        assert!(AteeParams::new(8, 3, 0.0, 2).validate().is_err());
        assert!(AteeParams::new(8, 3, f64::NAN, 2).validate().is_err());
        assert_eq!(AteeParams::new(360, 3, 1.0, 2).effective_buckets(), 512);
        assert_eq!(AteeParams::new(512, 3, 1.0, 2).effective_buckets(), 512);
    }

    #[test]
    fn distortion_constants() {
        // rho = K / k when k + K <= total
        let (rho, nu) = ht_distortion(20, 60, 20_000);
        assert!((rho - 1.0 / 3.0).abs() < 1e-12);
        assert!((nu - (1.0 + (rho + ((4.0 + rho) * rho).sqrt()) / 2.0)).abs() < 1e-12);
        // keeping everything: no distortion
        let (rho, nu) = ht_distortion(3, 10, 10);
        assert_eq!(rho, 0.0);
        assert_eq!(nu, 1.0);
    }

    #[test]
    fn zero_factors_extract_nothing() {
        let f = GradientFactors::new(8, Order::Two, vec![0.0; 16], vec![1.0; 16]).unwrap();
        let out = atee_extract(&f, &AteeParams::new(32, 3, 1.0, 2), 9).unwrap();
        assert!(out.is_empty());
    }
}
