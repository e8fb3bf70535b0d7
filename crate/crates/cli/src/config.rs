//! Run configuration: defaults, `key=value` files and command-line overrides.
//!
//! Every source goes through [`RunConfig::set`], so a key means the same thing
//! in a config file and as a `--key` flag. Later sources win.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use intht_core::hash::derive_seed;
use intht_core::solver::DEFAULT_DELTA_FACTOR;
use intht_core::{
    CodeScheme, DataSpec, DeltaRule, Extraction, Order, OuterPick, Regime, SolverConfig,
    TheoryBounds,
};

use crate::error::{HarnessError, Result};

const TAG_SOLVER: u64 = 0x534F_4C56;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Atee,
    Exact,
    Vr,
}

impl FromStr for Mode {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atee" => Ok(Mode::Atee),
            "exact" => Ok(Mode::Exact),
            "vr" => Ok(Mode::Vr),
            _ => Err(HarnessError::config(format!(
                "unknown mode '{s}' (expected atee, exact or vr)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Atee => "atee",
            Mode::Exact => "exact",
            Mode::Vr => "vr",
        })
    }
}

/// Significance level setting as written in a config.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaSetting {
    /// Multiple of the root-mean-square sketch bucket, re-estimated per iteration.
    Auto,
    /// From the theory bounds, constant over the run.
    Theory,
    Fixed(f64),
}

impl FromStr for DeltaSetting {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(DeltaSetting::Auto),
            "theory" => Ok(DeltaSetting::Theory),
            _ => {
                let v: f64 = parse_num("delta", s)?;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(HarnessError::config("delta must be positive"));
                }
                Ok(DeltaSetting::Fixed(v))
            }
        }
    }
}

impl fmt::Display for DeltaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSetting::Auto => f.write_str("auto"),
            DeltaSetting::Theory => f.write_str("theory"),
            DeltaSetting::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Which subcommand the defaults are for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Run,
    SweepBk,
    SweepMp,
    Order3,
    ValidateParams,
}

/// All tunables of a run or sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Feature dimension including the constant coordinate.
    pub p: usize,
    /// Sample count; `None` means `20 * m`.
    pub n: Option<usize>,
    pub m: usize,
    pub big_k: usize,
    /// Estimation sparsity; `None` means `3 * big_k`.
    pub k: Option<usize>,
    pub iters: usize,
    pub eta: f64,
    pub b: usize,
    pub d: usize,
    pub delta: DeltaSetting,
    pub delta_factor: f64,
    pub mode: Mode,
    pub order: Order,
    pub regime: Regime,
    pub seed: u64,
    /// Independent repeats per sweep cell.
    pub seeds: usize,
    pub inner: usize,
    pub outer_pick: OuterPick,
    pub scheme: CodeScheme,
    pub hash_reuse: bool,
    pub theory_schedule: bool,
    /// Restricted strong convexity `alpha` for the theory schedule.
    pub alpha: Option<f64>,
    pub smoothness: f64,
    pub theta_bound: f64,
    pub grad_at_target: f64,
    pub failure_control: f64,
    /// Gradient norm estimate for `validate-params`; defaults to the theory bound.
    pub grad_norm: Option<f64>,
    pub include_diagonal: bool,
    pub noise_std: f64,
    /// Success tolerance on `||theta - theta*||_F / ||theta*||_F`.
    pub tol: f64,
    pub start_at_truth: bool,
    pub b_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub p_grid: Vec<usize>,
    pub load_data: Option<PathBuf>,
    pub save_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Run)
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = RunConfig {
            p: 200,
            n: None,
            m: 4000,
            big_k: 20,
            k: None,
            iters: 150,
            eta: 0.2,
            b: 360,
            d: 3,
            delta: DeltaSetting::Auto,
            delta_factor: DEFAULT_DELTA_FACTOR,
            mode: Mode::Atee,
            order: Order::Two,
            regime: Regime::Uniform,
            seed: 0,
            seeds: 3,
            inner: 20,
            outer_pick: OuterPick::Uniform,
            scheme: CodeScheme::PlainBinary,
            hash_reuse: false,
            theory_schedule: false,
            alpha: None,
            smoothness: 1.0,
            theta_bound: 20.0,
            grad_at_target: 0.0,
            failure_control: 4.0,
            grad_norm: None,
            include_diagonal: false,
            noise_std: 0.0,
            tol: 1e-3,
            start_at_truth: false,
            b_grid: vec![30, 60, 120, 240, 360, 480, 600],
            k_grid: vec![1, 5, 10, 15, 20, 25, 30],
            m_grid: vec![1, 2, 3, 5, 8, 12, 18, 27, 40, 60, 80, 99],
            p_grid: vec![10, 40, 160, 640, 1000],
            load_data: None,
            save_data: None,
            out: None,
        };
        match preset {
            Preset::Run | Preset::ValidateParams => {}
            Preset::SweepBk => cfg.m = 2000,
            Preset::SweepMp => {
                cfg.mode = Mode::Exact;
                cfg.regime = Regime::Bernoulli;
                cfg.big_k = 5;
                cfg.seeds = 5;
            }
            Preset::Order3 => {
                cfg.order = Order::Three;
                cfg.p = 30;
                cfg.m = 1000;
                cfg.b = 1024;
            }
        }
        cfg
    }

    /// Applies one `key=value` setting. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "p" => self.p = parse_num(&key, v)?,
            "n" => self.n = Some(parse_num(&key, v)?),
            "m" => self.m = parse_num(&key, v)?,
            "big-k" | "K" => self.big_k = parse_num(&key, v)?,
            "k" => self.k = Some(parse_num(&key, v)?),
            "iters" | "T" => self.iters = parse_num(&key, v)?,
            "eta" => self.eta = parse_num(&key, v)?,
            "b" => self.b = parse_num(&key, v)?,
            "d" => self.d = parse_num(&key, v)?,
            "delta" => self.delta = v.parse()?,
            "delta-factor" => self.delta_factor = parse_num(&key, v)?,
            "mode" => self.mode = v.parse()?,
            "order" => {
                let arity: usize = parse_num(&key, v)?;
                self.order = Order::from_arity(arity)
                    .map_err(|_| HarnessError::config(format!("order must be 2 or 3, got {v}")))?
            }
            "regime" => self.regime = v.parse()?,
            "seed" => self.seed = parse_num(&key, v)?,
            "seeds" => self.seeds = parse_num(&key, v)?,
            "inner" => self.inner = parse_num(&key, v)?,
            "outer-pick" => self.outer_pick = v.parse()?,
            "scheme" => self.scheme = v.parse()?,
            "hash-reuse" => self.hash_reuse = parse_bool(&key, v)?,
            "theory-schedule" => self.theory_schedule = parse_bool(&key, v)?,
            "alpha" => self.alpha = Some(parse_num(&key, v)?),
            "smoothness" | "L" => self.smoothness = parse_num(&key, v)?,
            "theta-bound" | "omega" => self.theta_bound = parse_num(&key, v)?,
            "grad-at-target" => self.grad_at_target = parse_num(&key, v)?,
            "failure-control" | "c" => self.failure_control = parse_num(&key, v)?,
            "grad-norm" => self.grad_norm = Some(parse_num(&key, v)?),
            "include-diagonal" => self.include_diagonal = parse_bool(&key, v)?,
            "noise-std" => self.noise_std = parse_num(&key, v)?,
            "tol" => self.tol = parse_num(&key, v)?,
            "start-at-truth" => self.start_at_truth = parse_bool(&key, v)?,
            "b-grid" => self.b_grid = parse_list(&key, v)?,
            "k-grid" => self.k_grid = parse_list(&key, v)?,
            "m-grid" => self.m_grid = parse_list(&key, v)?,
            "p-grid" => self.p_grid = parse_list(&key, v)?,
            "load-data" => self.load_data = Some(PathBuf::from(v)),
            "save-data" => self.save_data = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(HarnessError::config(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }

    /// Reads a `key=value` file; `#` starts a comment, blank lines are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        self.apply_text(&text)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::config(format!("line {}: expected key=value, got '{line}'", no + 1))
            })?;
            self.set(key, value)
                .map_err(|e| HarnessError::config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(20 * self.m)
    }

    /// Estimation sparsity after the defaults and the theory schedule.
    pub fn k(&self) -> usize {
        if self.theory_schedule {
            if let Some(alpha) = self.alpha {
                let ratio = self.smoothness / alpha;
                return ((self.big_k as f64) * ratio * ratio).ceil() as usize;
            }
        }
        self.k.unwrap_or(3 * self.big_k)
    }

    pub fn eta(&self) -> f64 {
        match (self.theory_schedule, self.alpha) {
            (true, Some(alpha)) => alpha / (2.0 * self.smoothness * self.smoothness),
            _ => self.eta,
        }
    }

    pub fn bounds(&self) -> TheoryBounds {
        TheoryBounds {
            smoothness: self.smoothness,
            theta_bound: self.theta_bound,
            grad_at_target: self.grad_at_target,
            failure_control: self.failure_control,
            ..TheoryBounds::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p", self.p),
            ("m", self.m),
            ("big-k", self.big_k),
            ("b", self.b),
            ("d", self.d),
            ("inner", self.inner),
            ("seeds", self.seeds),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(HarnessError::config(format!("{name} must be positive")));
            }
        }
        if self.p < 2 {
            return Err(HarnessError::config("p must be at least 2 (one feature plus the constant)"));
        }
        if self.n() == 0 {
            return Err(HarnessError::config("n must be positive"));
        }
        if self.m > self.n() {
            return Err(HarnessError::config(format!(
                "batch size m = {} exceeds sample count n = {}",
                self.m,
                self.n()
            )));
        }
        if self.theory_schedule {
            match self.alpha {
                Some(a) if a > 0.0 && a.is_finite() => {}
                _ => {
                    return Err(HarnessError::config(
                        "theory-schedule needs a positive alpha (and smoothness)",
                    ))
                }
            }
            if !(self.smoothness > 0.0) || !self.smoothness.is_finite() {
                return Err(HarnessError::config("smoothness must be positive"));
            }
        }
        if self.k() < self.big_k {
            return Err(HarnessError::config(format!(
                "k = {} is below the true sparsity K = {}",
                self.k(),
                self.big_k
            )));
        }
        if !(self.eta() > 0.0) || !self.eta().is_finite() {
            return Err(HarnessError::config("eta must be positive"));
        }
        if !(self.delta_factor > 0.0) || !self.delta_factor.is_finite() {
            return Err(HarnessError::config("delta-factor must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(HarnessError::config("tol must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(HarnessError::config("noise-std must be nonnegative"));
        }
        let bounds = [
            self.smoothness,
            self.theta_bound,
            self.grad_at_target,
            self.failure_control,
        ];
        if bounds.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(HarnessError::config("theory bounds must be nonnegative"));
        }
        if self.mode == Mode::Vr && self.order == Order::Three {
            log::warn!("variance-reduced mode on order-3 data");
        }
        Ok(())
    }

    pub fn data_spec(&self, seed: u64) -> DataSpec {
        DataSpec {
            include_diagonal: self.include_diagonal,
            noise_std: self.noise_std,
            ..DataSpec::new(self.n(), self.p, self.big_k, self.order, self.regime, seed)
        }
    }

    pub fn delta_rule(&self) -> DeltaRule {
        match self.delta {
            DeltaSetting::Auto => DeltaRule::BatchNorm(self.delta_factor),
            DeltaSetting::Theory => DeltaRule::Theory(self.bounds()),
            DeltaSetting::Fixed(v) => DeltaRule::Fixed(v),
        }
    }

    /// Solver settings; the solver seed is derived from `seed`.
    pub fn solver(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            k: self.k(),
            iters: self.iters,
            eta: self.eta(),
            batch: self.m,
            extraction: match self.mode {
                Mode::Exact => Extraction::Exact,
                Mode::Atee | Mode::Vr => Extraction::Atee,
            },
            buckets: self.b,
            repetitions: self.d,
            delta: self.delta_rule(),
            scheme: self.scheme,
            hash_reuse: self.hash_reuse,
            seed: derive_seed(seed, TAG_SOLVER, 0),
            inner: self.inner,
            outer_pick: self.outer_pick,
            ..SolverConfig::default()
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| HarnessError::config(format!("invalid value '{v}' for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "" | "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(HarnessError::config(format!("invalid boolean '{v}' for {key}"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    let out: Vec<usize> = v
        .split(',')
        .map(|s| parse_num(key, s.trim()))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(HarnessError::config(format!("{key} is empty")));
    }
    Ok(out)
}
