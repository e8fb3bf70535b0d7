//! The experiment drivers behind each subcommand.

use std::fs;

use log::{info, warn};
use rayon::prelude::*;

use intht_core::atee::{gradient_norm_bound, theory_delta};
use intht_core::hash::derive_seed;
use intht_core::{
    generate, intht_order3_run, intht_run, intht_vr_run, support_metrics, support_recovered,
    validate_params, AteeParams, DataSet, Order, ParamReport, RunOutcome, SparseTensor,
};

use crate::config::{DeltaSetting, Mode, RunConfig};
use crate::error::{HarnessError, Result};
use crate::results::{Cell, IterRow, RunTable, SummaryRow, SweepKind, SweepTable};

const TAG_BK: u64 = 0x4B42;
const TAG_MP: u64 = 0x504D;

/// Output of one run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub table: RunTable,
    /// `(t, wall_ms, peak_rss_kb)` per iteration; kept out of the results file.
    pub timing: Vec<(usize, f64, Option<u64>)>,
    pub theta: SparseTensor,
    pub truth: SparseTensor,
    pub effective_b: usize,
}

impl RunReport {
    pub fn summary(&self) -> &SummaryRow {
        self.table.summary.as_ref().expect("run reports carry a summary")
    }

    /// First iteration with relative error below `rel`.
    pub fn iterations_to(&self, rel: f64) -> Option<usize> {
        self.table.iters.iter().find(|r| r.rel_error < rel).map(|r| r.t)
    }
}

/// Loads the configured data file or generates data from `seed`.
///
/// A loaded file fixes `p`, `n` and the order; they are copied into the
/// returned config.
pub fn dataset(cfg: &RunConfig, seed: u64) -> Result<(RunConfig, DataSet)> {
    let mut cfg = cfg.clone();
    let data = match &cfg.load_data {
        Some(path) => {
            let data = DataSet::load(path)?;
            cfg.p = data.dim();
            cfg.n = Some(data.n());
            cfg.order = data.order();
            cfg.big_k = data.theta_star.len().max(1);
            data
        }
        None => {
            cfg.validate()?;
            generate(&cfg.data_spec(seed))?
        }
    };
    cfg.validate()?;
    if let Some(path) = &cfg.save_data {
        data.save(path)?;
    }
    Ok((cfg, data))
}

fn solve(cfg: &RunConfig, data: &DataSet, seed: u64, init: Option<&SparseTensor>) -> Result<RunOutcome> {
    let solver = cfg.solver(seed);
    let truth = Some(&data.theta_star);
    let out = match (cfg.mode, data.order()) {
        (Mode::Vr, _) => intht_vr_run(&solver, data, truth, init)?,
        (_, Order::Three) => intht_order3_run(&solver, data, truth, init)?,
        (_, Order::Two) => intht_run(&solver, data, truth, init)?,
    };
    Ok(out)
}

fn rel(err: f64, norm: f64) -> f64 {
    if norm > 0.0 {
        err / norm
    } else {
        err
    }
}

/// Peak resident set size in kB, where the platform reports it.
pub fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

/// `run` and `order3`: one run with per-iteration records and a summary.
pub fn execute_run(cfg: &RunConfig) -> Result<RunReport> {
    let (cfg, data) = dataset(cfg, cfg.seed)?;
    let truth = data.theta_star.clone();
    let init = cfg.start_at_truth.then_some(&truth);
    if cfg.mode != Mode::Exact {
        log_delta(&cfg);
    }
    let out = solve(&cfg, &data, cfg.seed, init)?;
    let norm = truth.frobenius_norm();

    let iters: Vec<IterRow> = out
        .records
        .iter()
        .map(|r| IterRow {
            t: r.t,
            frob_error: r.frob_error,
            rel_error: rel(r.frob_error, norm),
            precision: r.support_precision,
            recall: r.support_recall,
            atee_set_size: r.atee_set_size,
            delta: r.delta,
        })
        .collect();
    let rss = peak_rss_kb();
    let n_rec = out.records.len();
    let timing = out
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.t, r.wall_ms, if i + 1 == n_rec { rss } else { None }))
        .collect();

    let (err, precision, recall) = support_metrics(&out.theta, Some(&truth));
    let rel_error = rel(err, norm);
    let recovered = support_recovered(&out.theta, &truth);
    let summary = SummaryRow {
        t: cfg.iters,
        frob_error: err,
        rel_error,
        precision,
        recall,
        success: recovered && rel_error < cfg.tol,
    };
    info!(
        "{} run: T={} rel_error={:.3e} support_recovered={} success={}",
        cfg.mode, cfg.iters, rel_error, recovered, summary.success
    );
    Ok(RunReport {
        table: RunTable {
            iters,
            summary: Some(summary),
        },
        timing,
        theta: out.theta,
        truth,
        effective_b: cfg.b.next_power_of_two(),
    })
}

fn log_delta(cfg: &RunConfig) {
    match cfg.delta {
        DeltaSetting::Auto => info!(
            "delta: {} x root-mean-square sketch bucket, per iteration",
            cfg.delta_factor
        ),
        DeltaSetting::Theory => info!(
            "delta: theory value {:.4e}",
            theory_delta(&cfg.bounds(), cfg.k(), 2 * cfg.k())
        ),
        DeltaSetting::Fixed(v) => info!("delta: fixed {v}"),
    }
}

/// Outcome of one repeat inside a sweep cell.
struct Trial {
    success: bool,
    rel_error: f64,
}

fn trial(cfg: &RunConfig, data_seed: u64) -> Result<Trial> {
    let (cfg, data) = dataset(cfg, data_seed)?;
    let out = solve(&cfg, &data, data_seed, None)?;
    let err = out.theta.frobenius_distance(&data.theta_star);
    Ok(Trial {
        success: support_recovered(&out.theta, &data.theta_star),
        rel_error: rel(err, data.theta_star.frobenius_norm()),
    })
}

/// Sweep grid: rows × columns, `seeds` repeats per cell.
struct Grid {
    kind: SweepKind,
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Successes needed for a cell to count as passing.
    pass: usize,
}

impl Grid {
    fn cell_config(&self, base: &RunConfig, row: usize, col: usize) -> RunConfig {
        let mut cfg = base.clone();
        cfg.load_data = None;
        cfg.save_data = None;
        match self.kind {
            SweepKind::Bk => {
                cfg.big_k = row;
                cfg.k = None;
                cfg.b = col;
            }
            SweepKind::Mp => {
                cfg.p = row;
                cfg.m = col;
                cfg.mode = Mode::Exact;
            }
        }
        cfg
    }

    fn data_seed(&self, base: u64, row: usize, rep: usize) -> u64 {
        let tag = match self.kind {
            SweepKind::Bk => TAG_BK,
            SweepKind::Mp => TAG_MP,
        };
        derive_seed(base, tag, ((row as u64) << 32) | rep as u64)
    }

    fn run_cell(&self, base: &RunConfig, row: usize, col: usize) -> Result<Cell> {
        let cfg = self.cell_config(base, row, col);
        let trials: Vec<Trial> = (0..base.seeds)
            .into_par_iter()
            .map(|rep| trial(&cfg, self.data_seed(base.seed, row, rep)))
            .collect::<Result<_>>()?;
        let cell = self.cell(row, col, &trials);
        let (rk, ck) = match self.kind {
            SweepKind::Bk => ("K", "b"),
            SweepKind::Mp => ("p", "m"),
        };
        info!("{rk}={row} {ck}={col}: {}/{} recovered", cell.successes, cell.runs);
        Ok(cell)
    }

    fn cell(&self, row: usize, col: usize, trials: &[Trial]) -> Cell {
        let successes = trials.iter().filter(|t| t.success).count();
        let mean = trials.iter().map(|t| t.rel_error).sum::<f64>() / trials.len().max(1) as f64;
        Cell {
            row_key: row,
            col_key: col,
            effective_b: (self.kind == SweepKind::Bk).then(|| col.next_power_of_two()),
            successes,
            runs: trials.len(),
            mean_rel_error: mean,
        }
    }

    fn minimal(&self, cells: &[Cell]) -> Vec<(usize, Option<usize>)> {
        self.rows
            .iter()
            .map(|&r| {
                let min = cells
                    .iter()
                    .filter(|c| c.row_key == r && c.successes >= self.pass)
                    .map(|c| c.col_key)
                    .min();
                (r, min)
            })
            .collect()
    }

    /// Every cell, in row-major grid order.
    fn run_all(&self, base: &RunConfig) -> Result<SweepTable> {
        let jobs: Vec<(usize, usize, usize)> = self
            .rows
            .iter()
            .flat_map(|&r| {
                self.cols
                    .iter()
                    .flat_map(move |&c| (0..base.seeds).map(move |rep| (r, c, rep)))
            })
            .collect();
        let trials: Vec<Trial> = jobs
            .par_iter()
            .map(|&(r, c, rep)| {
                let cfg = self.cell_config(base, r, c);
                trial(&cfg, self.data_seed(base.seed, r, rep))
            })
            .collect::<Result<_>>()?;
        let cells: Vec<Cell> = trials
            .chunks(base.seeds)
            .zip(jobs.chunks(base.seeds))
            .map(|(t, j)| self.cell(j[0].0, j[0].1, t))
            .collect();
        let minimal = self.minimal(&cells);
        Ok(SweepTable { cells, minimal })
    }

    /// Per row, columns in ascending order up to the first passing one.
    fn run_until_pass(&self, base: &RunConfig) -> Result<SweepTable> {
        let mut cols = self.cols.clone();
        cols.sort_unstable();
        cols.dedup();
        let per_row: Vec<Vec<Cell>> = self
            .rows
            .par_iter()
            .map(|&r| {
                let mut row = Vec::new();
                for &c in &cols {
                    let cell = self.run_cell(base, r, c)?;
                    let pass = cell.successes >= self.pass;
                    row.push(cell);
                    if pass {
                        break;
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let cells: Vec<Cell> = per_row.into_iter().flatten().collect();
        let minimal = self.minimal(&cells);
        Ok(SweepTable { cells, minimal })
    }
}

fn check_grid(name: &str, values: &[usize]) -> Result<()> {
    if values.is_empty() || values.contains(&0) {
        return Err(HarnessError::config(format!(
            "{name} must be a nonempty list of positive values"
        )));
    }
    Ok(())
}

/// `sweep-bk`: support recovery over `(K, b)` with approximate extraction.
///
/// A cell passes when every repeat recovers the support. With `until_pass`,
/// each `K` stops at its first passing `b` (ascending), which is enough to
/// locate the minimal `b`.
pub fn execute_sweep_bk(cfg: &RunConfig, until_pass: bool) -> Result<SweepTable> {
    check_grid("k-grid", &cfg.k_grid)?;
    check_grid("b-grid", &cfg.b_grid)?;
    if cfg.mode == Mode::Exact {
        warn!("sweep-bk with exact extraction: b has no effect");
    }
    let grid = Grid {
        kind: SweepKind::Bk,
        rows: cfg.k_grid.clone(),
        cols: cfg.b_grid.clone(),
        pass: cfg.seeds,
    };
    for &k in &grid.rows {
        grid.cell_config(cfg, k, grid.cols[0]).validate()?;
    }
    if until_pass {
        grid.run_until_pass(cfg)
    } else {
        grid.run_all(cfg)
    }
}

/// `sweep-mp`: support recovery over `(p, m)` with exact extraction.
///
/// A cell passes with at least 80% successful repeats (4 of 5 by default).
pub fn execute_sweep_mp(cfg: &RunConfig, until_pass: bool) -> Result<SweepTable> {
    check_grid("p-grid", &cfg.p_grid)?;
    check_grid("m-grid", &cfg.m_grid)?;
    let grid = Grid {
        kind: SweepKind::Mp,
        rows: cfg.p_grid.clone(),
        cols: cfg.m_grid.clone(),
        pass: (4 * cfg.seeds).div_ceil(5),
    };
    for &p in &grid.rows {
        for &m in &grid.cols {
            grid.cell_config(cfg, p, m).validate()?;
        }
    }
    if until_pass {
        grid.run_until_pass(cfg)
    } else {
        grid.run_all(cfg)
    }
}

/// `validate-params` output: the report plus the inputs it was computed from.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub params: AteeParams,
    pub grad_norm: f64,
    pub report: ParamReport,
}

pub const PARAM_HEADER: [&str; 12] = [
    "requested_b",
    "effective_b",
    "delta",
    "grad_norm",
    "k_top",
    "min_b",
    "b_ok",
    "d",
    "min_d",
    "min_d_full",
    "d_ok",
    "compliant",
];

impl ParamCheck {
    pub fn record(&self) -> Vec<String> {
        let r = &self.report;
        vec![
            r.requested_buckets.to_string(),
            r.effective_buckets.to_string(),
            format!("{}", self.params.delta),
            format!("{}", self.grad_norm),
            self.params.k_top.to_string(),
            r.min_buckets.to_string(),
            r.buckets_ok.to_string(),
            self.params.repetitions.to_string(),
            r.min_repetitions.to_string(),
            r.min_repetitions_full.to_string(),
            r.repetitions_ok.to_string(),
            r.compliant().to_string(),
        ]
    }
}

/// `validate-params`: checks `(b, d, delta)` against the recovery conditions.
pub fn execute_validate_params(cfg: &RunConfig) -> Result<ParamCheck> {
    cfg.validate()?;
    let bounds = cfg.bounds();
    let k = cfg.k();
    let grad_norm = cfg.grad_norm.unwrap_or_else(|| gradient_norm_bound(&bounds, k));
    if !(grad_norm >= 0.0) || !grad_norm.is_finite() {
        return Err(HarnessError::config("grad-norm must be nonnegative"));
    }
    let delta = match cfg.delta {
        DeltaSetting::Fixed(v) => v,
        DeltaSetting::Theory => theory_delta(&bounds, k, 2 * k),
        DeltaSetting::Auto => {
            warn!("delta=auto depends on the data; checking the theory value instead");
            theory_delta(&bounds, k, 2 * k)
        }
    };
    let mut params = AteeParams::new(cfg.b, cfg.d, delta, 2 * k);
    params.scheme = cfg.scheme;
    params.hash_reuse = cfg.hash_reuse;
    let report = validate_params(&params, grad_norm, &bounds);
    Ok(ParamCheck {
        params,
        grad_norm,
        report,
    })
}
