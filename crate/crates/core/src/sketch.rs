//! Count-sketches of vectors and compressed products of factor panels.
//!
//! The count-sketch of `A B^T` under the composite hash
//! `h(i,j) = (h1(i) + h2(j)) mod b`, `s(i,j) = s1(i) s2(j)` equals
//! `sum_c cs(a_c, h1) * cs(b_c, h2)` where `*` is circular convolution; the
//! order-3 case convolves a third sketch. Convolutions are done in the
//! frequency domain and the per-column spectra are summed before a single
//! inverse transform.

use crate::codes::IndexCodeTable;
use crate::error::{Error, Result};
use crate::fft::{circular_convolve_real, Complex, FftPlan};
use crate::hash::HashPair;
use crate::tensor::Order;

#[derive(Clone, Debug, PartialEq)]
pub struct SketchVector {
    buckets: Vec<f64>,
}

impl SketchVector {
    pub fn zeros(b: usize) -> Self {
        SketchVector {
            buckets: vec![0.0; b],
        }
    }

    pub fn from_buckets(buckets: Vec<f64>) -> Self {
        SketchVector { buckets }
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn buckets(&self) -> &[f64] {
        &self.buckets
    }

    pub fn into_buckets(self) -> Vec<f64> {
        self.buckets
    }
}

impl std::ops::Index<usize> for SketchVector {
    type Output = f64;
    fn index(&self, q: usize) -> &f64 {
        &self.buckets[q]
    }
}

/// `buckets[h(i)] += s(i) * x[i]`, accumulated in index order.
pub fn count_sketch(x: &[f64], hp: &HashPair) -> Result<SketchVector> {
    if x.len() != hp.dim() {
        return Err(Error::size(format!(
            "vector of length {} sketched with a hash over {} coordinates",
            x.len(),
            hp.dim()
        )));
    }
    let mut out = vec![0.0; hp.buckets()];
    for (i, &v) in x.iter().enumerate() {
        out[hp.bucket(i)] += hp.sign(i) * v;
    }
    Ok(SketchVector { buckets: out })
}

pub fn circular_convolve(u: &SketchVector, v: &SketchVector) -> Result<SketchVector> {
    Ok(SketchVector {
        buckets: circular_convolve_real(&u.buckets, &v.buckets)?,
    })
}

/// Factor panels of a batch gradient: column `c` of the scaled panel is
/// `u_c x_c`, column `c` of the feature panel is `x_c`, and the gradient is
/// `(1/m) sum_c u_c x_c (x) x_c (x) ...` with `order` factors. For order 3 the
/// second and third panels are the same feature panel.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientFactors {
    dim: usize,
    cols: usize,
    order: Order,
    scaled: Vec<f64>,
    features: Vec<f64>,
}

impl GradientFactors {
    /// Panels given column-major (`dim` values per column).
    pub fn new(dim: usize, order: Order, scaled: Vec<f64>, features: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::size("factor panels need at least one row"));
        }
        if scaled.len() != features.len() || scaled.len() % dim != 0 {
            return Err(Error::size(format!(
                "panels of {} and {} values do not form two {dim}-row panels",
                scaled.len(),
                features.len()
            )));
        }
        let cols = scaled.len() / dim;
        Ok(GradientFactors {
            dim,
            cols,
            order,
            scaled,
            features,
        })
    }

    /// Builds the panels from feature rows and per-sample residuals.
    pub fn from_samples<'a>(
        dim: usize,
        order: Order,
        rows: impl IntoIterator<Item = (&'a [f64], f64)>,
    ) -> Result<Self> {
        let mut scaled = Vec::new();
        let mut features = Vec::new();
        for (x, u) in rows {
            if x.len() != dim {
                return Err(Error::size(format!(
                    "sample of length {} for dimension {dim}",
                    x.len()
                )));
            }
            scaled.extend(x.iter().map(|v| u * v));
            features.extend_from_slice(x);
        }
        GradientFactors::new(dim, order, scaled, features)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Batch size `m`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn scaled_col(&self, c: usize) -> &[f64] {
        &self.scaled[c * self.dim..(c + 1) * self.dim]
    }

    pub fn feature_col(&self, c: usize) -> &[f64] {
        &self.features[c * self.dim..(c + 1) * self.dim]
    }

    /// Column `c` of factor `f` (`f = 0` is the scaled panel).
    pub fn factor_col(&self, f: usize, c: usize) -> &[f64] {
        if f == 0 {
            self.scaled_col(c)
        } else {
            self.feature_col(c)
        }
    }

    /// The residual-weighted moment tensor `sum_c u_c x_c (x) x_c (x) ...`,
    /// row-major over `dim^order` entries (not divided by `m`).
    pub fn materialize_product(&self) -> Vec<f64> {
        let p = self.dim;
        match self.order {
            Order::Two => {
                let mut out = vec![0.0; p * p];
                for c in 0..self.cols {
                    let a = self.scaled_col(c);
                    let b = self.feature_col(c);
                    for i in 0..p {
                        let ai = a[i];
                        if ai == 0.0 {
                            continue;
                        }
                        let row = &mut out[i * p..(i + 1) * p];
                        for (o, bj) in row.iter_mut().zip(b) {
                            *o += ai * bj;
                        }
                    }
                }
                out
            }
            Order::Three => {
                let mut out = vec![0.0; p * p * p];
                for c in 0..self.cols {
                    let a = self.scaled_col(c);
                    let b = self.feature_col(c);
                    for i in 0..p {
                        for j in 0..p {
                            let aij = a[i] * b[j];
                            if aij == 0.0 {
                                continue;
                            }
                            let row = &mut out[(i * p + j) * p..(i * p + j + 1) * p];
                            for (o, bk) in row.iter_mut().zip(b) {
                                *o += aij * bk;
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// Frobenius norm of the batch gradient `(1/m) sum_c u_c x_c (x) x_c ...`
    /// from the column Gram matrices, in `O(m^2 p)` without materializing it.
    pub fn gradient_frobenius_norm(&self) -> f64 {
        if self.cols == 0 {
            return 0.0;
        }
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let reps = self.order.arity() as i32 - 1;
        let mut acc = 0.0;
        for c in 0..self.cols {
            for d in 0..=c {
                let aa = dot(self.scaled_col(c), self.scaled_col(d));
                let bb = dot(self.feature_col(c), self.feature_col(d));
                let term = aa * bb.powi(reps);
                acc += if c == d { term } else { 2.0 * term };
            }
        }
        acc.max(0.0).sqrt() / self.cols as f64
    }

    /// Horizontal concatenation; columns of `other` are rescaled by `weight`.
    pub fn concat_weighted(&self, other: &GradientFactors, weight: f64) -> Result<Self> {
        if self.dim != other.dim || self.order != other.order {
            return Err(Error::size("concatenating incompatible factor panels"));
        }
        let mut scaled = self.scaled.clone();
        scaled.extend(other.scaled.iter().map(|v| v * weight));
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        GradientFactors::new(self.dim, self.order, scaled, features)
    }

    /// Copy with every scaled column multiplied by `weight`.
    pub fn scaled_by(&self, weight: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.scaled {
            *v *= weight;
        }
        out
    }
}

/// Reusable FFT plan and scratch space for sketching factor products.
///
/// Rows produced for a code table with `l` bits and `order` factors:
/// row `f * l + r` masks factor `f` to the coordinates whose codeword has bit
/// `r` set; the final row is the unmasked product.
pub struct ProductSketcher {
    plan: FftPlan,
    scratch: Vec<Complex>,
}

impl ProductSketcher {
    pub fn new(buckets: usize) -> Result<Self> {
        Ok(ProductSketcher {
            plan: FftPlan::new(buckets)?,
            scratch: vec![Complex::ZERO; buckets],
        })
    }

    pub fn buckets(&self) -> usize {
        self.plan.len()
    }

    /// Unmasked compressed product of all factors.
    pub fn product(&mut self, f: &GradientFactors, hashes: &[&HashPair]) -> Result<Vec<f64>> {
        let mut rows = self.sketch_rows(f, hashes, None)?;
        Ok(rows.pop().expect("presence row"))
    }

    /// Masked and unmasked rows for one repetition (see the type docs).
    pub fn sketch_rows(
        &mut self,
        f: &GradientFactors,
        hashes: &[&HashPair],
        table: Option<&IndexCodeTable>,
    ) -> Result<Vec<Vec<f64>>> {
        let b = self.plan.len();
        let arity = f.order().arity();
        if hashes.len() != arity {
            return Err(Error::size(format!(
                "{} hash pairs for an order-{arity} product",
                hashes.len()
            )));
        }
        for hp in hashes {
            if hp.buckets() != b {
                return Err(Error::size(format!(
                    "hash with {} buckets in a {b}-bucket product",
                    hp.buckets()
                )));
            }
            if hp.dim() != f.dim() {
                return Err(Error::size(format!(
                    "hash over {} coordinates for {}-row panels",
                    hp.dim(),
                    f.dim()
                )));
            }
        }
        if let Some(t) = table {
            if t.dim() != f.dim() {
                return Err(Error::size("code table dimension differs from panel rows"));
            }
        }
        let l = table.map_or(0, |t| t.len());
        let n_rows = arity * l + 1;
        let per_factor = l + 1;
        let n_real = arity * per_factor;

        // Real sketches for one column, `b` values per slot: factor f occupies
        // slots f*(l+1) .., slot 0 of each block unmasked, slot 1+r masked by
        // code bit r. Spectra keep bins 0..=b/2 only.
        let h = b / 2 + 1;
        let n_slots = n_real + (n_real & 1);
        let mut real = vec![0.0; n_slots * b];
        let mut spectra = vec![Complex::ZERO; n_slots * h];
        let mut acc = vec![Complex::ZERO; n_rows * h];
        let mut partial = vec![Complex::ZERO; h];
        let one = Complex::new(1.0, 0.0);
        let set_bits: Vec<Vec<usize>> = match table {
            Some(t) => (0..f.dim())
                .map(|i| (0..l).filter(|&r| t.bit(i, r)).collect())
                .collect(),
            None => Vec::new(),
        };

        for c in 0..f.cols() {
            // every row carries factor 0, so a zero residual column adds nothing
            if f.scaled_col(c).iter().all(|&v| v == 0.0) {
                continue;
            }
            real.fill(0.0);
            for (fi, hp) in hashes.iter().enumerate() {
                let x = f.factor_col(fi, c);
                let block = &mut real[fi * per_factor * b..(fi + 1) * per_factor * b];
                for (i, &xv) in x.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let q = hp.bucket(i);
                    let v = hp.sign(i) * xv;
                    block[q] += v;
                    if let Some(bits) = set_bits.get(i) {
                        for &r in bits {
                            block[(1 + r) * b + q] += v;
                        }
                    }
                }
            }
            for (src, dst) in real.chunks_exact(2 * b).zip(spectra.chunks_exact_mut(2 * h)) {
                let (x, y) = src.split_at(b);
                let (fx, fy) = dst.split_at_mut(h);
                self.plan.forward_real_pair(x, y, &mut self.scratch, fx, fy);
            }
            let slot = |g: usize| &spectra[g * h..(g + 1) * h];
            // masked rows: mask factor fi, keep the others unmasked
            for fi in 0..arity {
                partial.fill(one);
                for g in (0..arity).filter(|&g| g != fi) {
                    for (z, &w) in partial.iter_mut().zip(slot(g * per_factor)) {
                        *z *= w;
                    }
                }
                if fi == 0 {
                    let row = &mut acc[(n_rows - 1) * h..];
                    for ((a, &u), &z) in row.iter_mut().zip(slot(0)).zip(&partial) {
                        *a += u * z;
                    }
                }
                for r in 0..l {
                    let m = slot(fi * per_factor + 1 + r);
                    let row = &mut acc[(fi * l + r) * h..(fi * l + r + 1) * h];
                    for ((a, &u), &z) in row.iter_mut().zip(m).zip(&partial) {
                        *a += u * z;
                    }
                }
            }
        }

        let mut rows = Vec::with_capacity(n_rows);
        for spec in acc.chunks_exact(h) {
            let mut out = vec![0.0; b];
            self.plan.inverse_real_half(spec, &mut self.scratch, &mut out);
            rows.push(out);
        }
        Ok(rows)
    }
}

/// Count-sketch of `A B^T` under the composite hash of `hp1` and `hp2`.
pub fn compressed_product(
    f: &GradientFactors,
    hp1: &HashPair,
    hp2: &HashPair,
) -> Result<SketchVector> {
    if hp1.buckets() != hp2.buckets() {
        return Err(Error::size(format!(
            "bucket counts {} and {} differ",
            hp1.buckets(),
            hp2.buckets()
        )));
    }
    let f2 = if f.order() == Order::Two {
        std::borrow::Cow::Borrowed(f)
    } else {
        let mut g = f.clone();
        g.order = Order::Two;
        std::borrow::Cow::Owned(g)
    };
    let mut sk = ProductSketcher::new(hp1.buckets())?;
    Ok(SketchVector::from_buckets(sk.product(&f2, &[hp1, hp2])?))
}

/// Count-sketch of `sum_c u_c x_c (x) x_c (x) x_c` under the three-way composite hash.
pub fn compressed_product_order3(
    f: &GradientFactors,
    hp1: &HashPair,
    hp2: &HashPair,
    hp3: &HashPair,
) -> Result<SketchVector> {
    if f.order() != Order::Three {
        return Err(Error::config("order-3 product needs order-3 factors"));
    }
    if hp1.buckets() != hp2.buckets() || hp2.buckets() != hp3.buckets() {
        return Err(Error::size("bucket counts of the three hashes differ"));
    }
    let mut sk = ProductSketcher::new(hp1.buckets())?;
    Ok(SketchVector::from_buckets(sk.product(f, &[hp1, hp2, hp3])?))
}
