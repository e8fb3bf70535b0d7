//! Sparse order-2 / order-3 parameter tensors and their coordinates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Entries with magnitude below this are treated as exact zeros and dropped.
pub const ZERO_CUTOFF: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Order {
    Two,
    Three,
}

impl Order {
    pub fn arity(self) -> usize {
        match self {
            Order::Two => 2,
            Order::Three => 3,
        }
    }

    pub fn from_arity(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Order::Two),
            3 => Ok(Order::Three),
            _ => Err(Error::config(format!("order must be 2 or 3, got {n}"))),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.arity())
    }
}

/// An index pair or triple. Ordering is lexicographic on the indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    idx: [u32; 3],
    order: Order,
}

impl Coord {
    pub fn pair(i: usize, j: usize) -> Self {
        Coord {
            idx: [i as u32, j as u32, 0],
            order: Order::Two,
        }
    }

    pub fn triple(i: usize, j: usize, k: usize) -> Self {
        Coord {
            idx: [i as u32, j as u32, k as u32],
            order: Order::Three,
        }
    }

    pub fn from_slice(ix: &[usize]) -> Result<Self> {
        match *ix {
            [i, j] => Ok(Coord::pair(i, j)),
            [i, j, k] => Ok(Coord::triple(i, j, k)),
            _ => Err(Error::size(format!("coordinate of arity {}", ix.len()))),
        }
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.idx[..self.order.arity()].iter().map(|&v| v as usize)
    }

    pub fn get(&self, axis: usize) -> usize {
        debug_assert!(axis < self.order.arity());
        self.idx[axis] as usize
    }

    /// Sorted-index representative (`i <= j <= k`) of a symmetric coordinate.
    pub fn canonical(&self) -> Self {
        let mut c = *self;
        c.idx[..self.order.arity()].sort_unstable();
        c
    }

    pub fn is_canonical(&self) -> bool {
        self.idx[..self.order.arity()].windows(2).all(|w| w[0] <= w[1])
    }

    pub fn max_index(&self) -> usize {
        self.indices().max().unwrap_or(0)
    }

    /// Product of the addressed coordinates of `x`.
    #[inline]
    pub fn monomial(&self, x: &[f64]) -> f64 {
        match self.order {
            Order::Two => x[self.idx[0] as usize] * x[self.idx[1] as usize],
            Order::Three => {
                x[self.idx[0] as usize] * x[self.idx[1] as usize] * x[self.idx[2] as usize]
            }
        }
    }
}

impl fmt::Debug for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.order {
            Order::Two => write!(f, "({},{})", self.idx[0], self.idx[1]),
            Order::Three => write!(f, "({},{},{})", self.idx[0], self.idx[1], self.idx[2]),
        }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(":"))
    }
}

/// Coordinate-indexed sparse tensor with no stored zeros.
///
/// The optimizer keeps order-2 parameters on canonical coordinates
/// (`i <= j`), so `x^T Theta x` is the sum of `value * x_i * x_j` over entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor {
    dim: usize,
    order: Order,
    entries: BTreeMap<Coord, f64>,
}

impl SparseTensor {
    pub fn zeros(dim: usize, order: Order) -> Self {
        SparseTensor {
            dim,
            order,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries(
        dim: usize,
        order: Order,
        entries: impl IntoIterator<Item = (Coord, f64)>,
    ) -> Result<Self> {
        let mut t = SparseTensor::zeros(dim, order);
        for (c, v) in entries {
            t.check_coord(&c)?;
            t.set(c, v);
        }
        Ok(t)
    }

    fn check_coord(&self, c: &Coord) -> Result<()> {
        if c.order() != self.order {
            return Err(Error::size(format!(
                "coordinate {c:?} has order {}, tensor has order {}",
                c.order(),
                self.order
            )));
        }
        if c.max_index() >= self.dim {
            return Err(Error::size(format!(
                "coordinate {c:?} out of range for dimension {}",
                self.dim
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, c: &Coord) -> f64 {
        self.entries.get(c).copied().unwrap_or(0.0)
    }

    /// Sets an entry; values below [`ZERO_CUTOFF`] in magnitude remove it.
    pub fn set(&mut self, c: Coord, v: f64) {
        if v.abs() < ZERO_CUTOFF {
            self.entries.remove(&c);
        } else {
            self.entries.insert(c, v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coord, f64)> + '_ {
        self.entries.iter().map(|(c, v)| (*c, *v))
    }

    pub fn support(&self) -> BTreeSet<Coord> {
        self.entries.keys().copied().collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `||self - other||_F` over the union of supports.
    pub fn frobenius_distance(&self, other: &SparseTensor) -> f64 {
        let mut acc = 0.0;
        for (c, v) in &self.entries {
            let d = v - other.get(c);
            acc += d * d;
        }
        for (c, v) in &other.entries {
            if !self.entries.contains_key(c) {
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    /// `sum value * prod x[idx]` over stored entries.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::size(format!(
                "feature vector has length {}, tensor dimension is {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.evaluate_unchecked(x))
    }

    #[inline]
    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|(c, v)| v * c.monomial(x)).sum()
    }
}

/// Ranks `(coord, value)` pairs by decreasing magnitude, ties by increasing coordinate,
/// and returns the first `k`.
pub fn top_k_by_magnitude(
    items: impl IntoIterator<Item = (Coord, f64)>,
    k: usize,
) -> Vec<(Coord, f64)> {
    let mut all: Vec<(Coord, f64)> = items.into_iter().collect();
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &(Coord, f64), b: &(Coord, f64)| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    };
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

/// Keeps the `k` largest-magnitude entries (ties: smaller coordinate first).
pub fn hard_threshold(t: &SparseTensor, k: usize) -> SparseTensor {
    hard_threshold_entries(t.dim, t.order, t.iter(), k)
}

/// Hard thresholding of an arbitrary (possibly dense) entry list.
pub fn hard_threshold_entries(
    dim: usize,
    order: Order,
    entries: impl IntoIterator<Item = (Coord, f64)>,
    k: usize,
) -> SparseTensor {
    let mut out = SparseTensor::zeros(dim, order);
    for (c, v) in top_k_by_magnitude(entries, k) {
        out.set(c, v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_sorts_indices() {
        assert_eq!(Coord::pair(5, 2).canonical(), Coord::pair(2, 5));
        assert_eq!(Coord::triple(3, 1, 2).canonical(), Coord::triple(1, 2, 3));
        assert!(Coord::pair(1, 1).is_canonical());
        assert!(!Coord::triple(0, 2, 1).is_canonical());
    }

    #[test]
    fn no_stored_zeros() {
        let mut t = SparseTensor::zeros(4, Order::Two);
        t.set(Coord::pair(0, 1), 0.0);
        t.set(Coord::pair(0, 2), 1e-301);
        assert!(t.is_empty());
        t.set(Coord::pair(0, 1), 2.0);
        t.set(Coord::pair(0, 1), 0.0);
        assert!(t.is_empty());
    }

    #[test]
    fn hard_threshold_examples() {
        let t = SparseTensor::from_entries(
            4,
            Order::Two,
            [
                (Coord::pair(0, 0), 3.0),
                (Coord::pair(0, 1), -5.0),
                (Coord::pair(1, 1), 1.0),
                (Coord::pair(2, 2), 0.0),
            ],
        )
        .unwrap();
        let h = hard_threshold(&t, 2);
        assert_eq!(h.len(), 2);
        assert_eq!(h.get(&Coord::pair(0, 1)), -5.0);
        assert_eq!(h.get(&Coord::pair(0, 0)), 3.0);

        // already k-sparse
        assert_eq!(hard_threshold(&h, 2), h);
        assert_eq!(hard_threshold(&h, 5), h);

        let tie = SparseTensor::from_entries(
            3,
            Order::Two,
            [(Coord::pair(0, 1), 2.0), (Coord::pair(0, 2), -2.0)],
        )
        .unwrap();
        let h1 = hard_threshold(&tie, 1);
        assert_eq!(h1.support().into_iter().collect::<Vec<_>>(), vec![Coord::pair(0, 1)]);
        assert!(hard_threshold(&tie, 0).is_empty());
    }

    #[test]
    fn evaluate_checks_dimension() {
        let t = SparseTensor::from_entries(3, Order::Two, [(Coord::pair(1, 2), 3.0)]).unwrap();
        assert!(matches!(t.evaluate(&[1.0, 2.0]), Err(Error::Size(_))));
        assert_eq!(t.evaluate(&[0.0, 2.0, 5.0]).unwrap(), 30.0);
    }

    #[test]
    fn rejects_out_of_range_coords() {
        assert!(SparseTensor::from_entries(3, Order::Two, [(Coord::pair(1, 3), 1.0)]).is_err());
        assert!(SparseTensor::from_entries(3, Order::Two, [(Coord::triple(0, 0, 0), 1.0)]).is_err());
    }

    #[test]
    fn frobenius_distance_symmetric() {
        let a = SparseTensor::from_entries(3, Order::Two, [(Coord::pair(0, 1), 3.0)]).unwrap();
        let b = SparseTensor::from_entries(3, Order::Two, [(Coord::pair(1, 2), 4.0)]).unwrap();
        assert_eq!(a.frobenius_distance(&b), 5.0);
        assert_eq!(b.frobenius_distance(&a), 5.0);
        assert_eq!(a.frobenius_distance(&a), 0.0);
    }
}
