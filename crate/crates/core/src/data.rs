//! Synthetic regression data: features with a constant last coordinate,
//! sparse interaction parameters, and noiseless responses.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Coord, Order, SparseTensor};

pub const DATASET_FORMAT_TAG: &str = "# intht-dataset v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Features Uniform[-1, 1]; parameter magnitudes Uniform[10, 20] with a random sign.
    Uniform,
    /// Features and parameter values Rademacher (+1 / -1).
    Bernoulli,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Uniform => "uniform",
            Regime::Bernoulli => "bernoulli",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Regime::Uniform),
            "bernoulli" => Ok(Regime::Bernoulli),
            _ => Err(Error::config(format!("unknown regime '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub n: usize,
    /// Feature dimension including the constant coordinate.
    pub p: usize,
    /// Nonzeros in the ground truth.
    pub big_k: usize,
    pub order: Order,
    pub regime: Regime,
    pub seed: u64,
    /// Allow repeated feature indices (squared / cubed terms) in the support.
    pub include_diagonal: bool,
    /// Standard deviation of additive Gaussian response noise (0 = noiseless).
    pub noise_std: f64,
}

impl DataSpec {
    pub fn new(n: usize, p: usize, big_k: usize, order: Order, regime: Regime, seed: u64) -> Self {
        DataSpec {
            n,
            p,
            big_k,
            order,
            regime,
            seed,
            include_diagonal: false,
            noise_std: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    dim: usize,
    features: Vec<f64>,
    pub y: Vec<f64>,
    pub theta_star: SparseTensor,
    pub regime: Regime,
    pub seed: u64,
}

impl DataSet {
    /// Assembles a data set from row-major features; responses are given.
    pub fn from_parts(
        dim: usize,
        features: Vec<f64>,
        y: Vec<f64>,
        theta_star: SparseTensor,
        regime: Regime,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || features.len() != dim * y.len() {
            return Err(Error::size(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                y.len()
            )));
        }
        if theta_star.dim() != dim {
            return Err(Error::size("ground truth dimension differs from features"));
        }
        Ok(DataSet {
            dim,
            features,
            y,
            theta_star,
            regime,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> Order {
        self.theta_star.order()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks(self.dim)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "{DATASET_FORMAT_TAG}").map_err(io)?;
        writeln!(w, "p n K order regime seed").map_err(io)?;
        writeln!(
            w,
            "{} {} {} {} {} {}",
            self.dim,
            self.n(),
            self.theta_star.len(),
            self.order(),
            self.regime,
            self.seed
        )
        .map_err(io)?;
        for (x, y) in self.rows().zip(&self.y) {
            let mut line = String::new();
            for v in x {
                line.push_str(&v.to_string());
                line.push(' ');
            }
            line.push_str(&y.to_string());
            writeln!(w, "{line}").map_err(io)?;
        }
        writeln!(w, "theta").map_err(io)?;
        for (c, v) in self.theta_star.iter() {
            let ix: Vec<String> = c.indices().map(|i| i.to_string()).collect();
            writeln!(w, "{} {}", ix.join(" "), v).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let reader = BufReader::new(File::open(path).map_err(io)?);
        let mut lines = reader.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::data("unexpected end of dataset file"))?
                .map_err(io)
        };
        if next()?.trim() != DATASET_FORMAT_TAG {
            return Err(Error::data("missing or unsupported dataset format tag"));
        }
        next()?; // column names
        let header = next()?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 {
            return Err(Error::data(format!("bad header line '{header}'")));
        }
        let num = |s: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::data(format!("bad integer '{s}'")))
        };
        let dim = num(h[0])? as usize;
        let n = num(h[1])? as usize;
        let k = num(h[2])? as usize;
        let order = Order::from_arity(num(h[3])? as usize).map_err(|e| Error::data(e.to_string()))?;
        let regime: Regime = h[4].parse().map_err(|e: Error| Error::data(e.to_string()))?;
        let seed = num(h[5])?;
        let float = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::data(format!("bad number '{s}'")))
        };
        let mut features = Vec::with_capacity(n * dim);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next()?;
            let vals = line.split_whitespace().map(float).collect::<Result<Vec<_>>>()?;
            if vals.len() != dim + 1 {
                return Err(Error::data(format!(
                    "sample line has {} values, expected {}",
                    vals.len(),
                    dim + 1
                )));
            }
            features.extend_from_slice(&vals[..dim]);
            y.push(vals[dim]);
        }
        if next()?.trim() != "theta" {
            return Err(Error::data("missing 'theta' section"));
        }
        let mut entries = Vec::with_capacity(k);
        for _ in 0..k {
            let line = next()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != order.arity() + 1 {
                return Err(Error::data(format!("bad coordinate line '{line}'")));
            }
            let ix = parts[..order.arity()]
                .iter()
                .map(|s| num(s).map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            entries.push((Coord::from_slice(&ix)?, float(parts[order.arity()])?));
        }
        let theta = SparseTensor::from_entries(dim, order, entries)
            .map_err(|e| Error::data(e.to_string()))?;
        DataSet::from_parts(dim, features, y, theta, regime, seed)
            .map_err(|e| Error::data(e.to_string()))
    }
}

/// Model output `sum value * prod x[idx]` over stored entries.
pub fn evaluate_model(theta: &SparseTensor, x: &[f64]) -> Result<f64> {
    theta.evaluate(x)
}

/// Canonical coordinates eligible for the ground-truth support.
///
/// The last feature is the constant 1, so coordinates touching it stand for
/// lower-order (linear, intercept) terms. Without `include_diagonal`, a
/// non-constant feature index may appear at most once.
pub fn candidate_coords(p: usize, order: Order, include_diagonal: bool) -> Vec<Coord> {
    let c = p - 1;
    let ok = |ix: &[usize]| {
        include_diagonal || ix.windows(2).all(|w| w[0] != w[1] || w[0] == c)
    };
    let mut out = Vec::new();
    match order {
        Order::Two => {
            for i in 0..p {
                for j in i..p {
                    if ok(&[i, j]) {
                        out.push(Coord::pair(i, j));
                    }
                }
            }
        }
        Order::Three => {
            for i in 0..p {
                for j in i..p {
                    for k in j..p {
                        if ok(&[i, j, k]) {
                            out.push(Coord::triple(i, j, k));
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn generate(spec: &DataSpec) -> Result<DataSet> {
    if spec.p < 2 {
        return Err(Error::config("p must be at least 2 (one feature plus the constant)"));
    }
    if spec.n == 0 {
        return Err(Error::config("n must be positive"));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::config("noise standard deviation must be nonnegative"));
    }
    let candidates = candidate_coords(spec.p, spec.order, spec.include_diagonal);
    if spec.big_k > candidates.len() {
        return Err(Error::config(format!(
            "K = {} exceeds the {} eligible coordinates",
            spec.big_k,
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), spec.big_k).into_vec();
    picked.sort_unstable();
    let mut theta = SparseTensor::zeros(spec.p, spec.order);
    for idx in picked {
        let v = match spec.regime {
            Regime::Uniform => {
                let mag = rng.random_range(10.0..=20.0);
                if rng.random_bool(0.5) { mag } else { -mag }
            }
            Regime::Bernoulli => {
                if rng.random_bool(0.5) { 1.0 } else { -1.0 }
            }
        };
        theta.set(candidates[idx], v);
    }

    let mut features = Vec::with_capacity(spec.n * spec.p);
    for _ in 0..spec.n {
        for _ in 0..spec.p - 1 {
            let v = match spec.regime {
                Regime::Uniform => rng.random_range(-1.0..=1.0),
                Regime::Bernoulli => {
                    if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                }
            };
            features.push(v);
        }
        features.push(1.0);
    }
    let mut y: Vec<f64> = features
        .chunks(spec.p)
        .map(|x| theta.evaluate_unchecked(x))
        .collect();
    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise_std).map_err(|e| Error::config(e.to_string()))?;
        for v in y.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    DataSet::from_parts(spec.p, features, y, theta, spec.regime, spec.seed)
}

pub fn gen_uniform(n: usize, p: usize, big_k: usize, order: Order, seed: u64) -> Result<DataSet> {
    generate(&DataSpec::new(n, p, big_k, order, Regime::Uniform, seed))
}

pub fn gen_bernoulli(n: usize, p: usize, big_k: usize, seed: u64) -> Result<DataSet> {
    generate(&DataSpec::new(n, p, big_k, Order::Two, Regime::Bernoulli, seed))
}
