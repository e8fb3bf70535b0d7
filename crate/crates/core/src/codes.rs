//! Index codewords: encoding coordinates as bit strings, decoding noisy bit
//! strings, and majority voting across sketch repetitions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Coord, Order};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeScheme {
    /// `ceil(log2 p)` bits, most significant first. No error correction.
    PlainBinary,
    /// Every plain-binary bit repeated `r` times; majority decoding per group.
    Repetition(usize),
}

impl fmt::Display for CodeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeScheme::PlainBinary => write!(f, "binary"),
            CodeScheme::Repetition(r) => write!(f, "rep{r}"),
        }
    }
}

impl FromStr for CodeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "plain-binary" => Ok(CodeScheme::PlainBinary),
            _ => {
                let r = s
                    .strip_prefix("repetition-")
                    .or_else(|| s.strip_prefix("rep"))
                    .and_then(|r| r.parse::<usize>().ok())
                    .ok_or_else(|| Error::config(format!("unknown code scheme '{s}'")))?;
                if r == 0 {
                    return Err(Error::config("repetition factor must be positive"));
                }
                Ok(CodeScheme::Repetition(r))
            }
        }
    }
}

/// Bits needed to write every index below `p` in binary.
pub fn index_bits(p: usize) -> usize {
    (usize::BITS - (p - 1).leading_zeros()) as usize
}

/// The `p x l` table mapping index `i` to its codeword (row `i`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexCodeTable {
    dim: usize,
    logical_bits: usize,
    scheme: CodeScheme,
    bits: Vec<u8>,
}

impl IndexCodeTable {
    pub fn build(p: usize, scheme: CodeScheme) -> Result<Self> {
        if p < 2 {
            return Err(Error::config(format!("code table needs p >= 2, got {p}")));
        }
        if let CodeScheme::Repetition(0) = scheme {
            return Err(Error::config("repetition factor must be positive"));
        }
        let logical_bits = index_bits(p);
        let rep = match scheme {
            CodeScheme::PlainBinary => 1,
            CodeScheme::Repetition(r) => r,
        };
        let len = logical_bits * rep;
        let mut bits = Vec::with_capacity(p * len);
        for i in 0..p {
            for bit in (0..logical_bits).rev() {
                let v = ((i >> bit) & 1) as u8;
                bits.extend(std::iter::repeat(v).take(rep));
            }
        }
        Ok(IndexCodeTable {
            dim: p,
            logical_bits,
            scheme,
            bits,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scheme(&self) -> CodeScheme {
        self.scheme
    }

    /// Codeword length `l`.
    pub fn len(&self) -> usize {
        self.bits.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let l = self.len();
        &self.bits[i * l..(i + 1) * l]
    }

    #[inline]
    pub fn bit(&self, i: usize, r: usize) -> bool {
        self.bits[i * self.len() + r] != 0
    }

    /// Concatenated codewords of the coordinate's indices.
    pub fn encode(&self, c: &Coord) -> Vec<u8> {
        c.indices().flat_map(|i| self.row(i).iter().copied()).collect()
    }

    /// Decodes one `l`-bit block to an index, or `None` outside the correction radius.
    pub fn decode_index(&self, block: &[u8]) -> Option<usize> {
        debug_assert_eq!(block.len(), self.len());
        let mut value = 0usize;
        match self.scheme {
            CodeScheme::PlainBinary => {
                for &b in block {
                    value = (value << 1) | b as usize;
                }
            }
            CodeScheme::Repetition(r) => {
                for group in block.chunks(r) {
                    let ones = group.iter().filter(|&&b| b != 0).count();
                    let zeros = r - ones;
                    let bit = match ones.cmp(&zeros) {
                        std::cmp::Ordering::Greater => 1,
                        std::cmp::Ordering::Less => 0,
                        std::cmp::Ordering::Equal => return None,
                    };
                    value = (value << 1) | bit;
                }
            }
        }
        (value < self.dim).then_some(value)
    }
}

/// Thresholds the columns of a `rows x buckets` sketch array at `delta / 2` in magnitude.
///
/// `rows[r][q]` is entry `(r, q)`; the result holds one codeword per bucket.
pub fn binarify(rows: &[Vec<f64>], delta: f64) -> Vec<Vec<u8>> {
    let buckets = rows.first().map_or(0, |r| r.len());
    let half = delta / 2.0;
    (0..buckets)
        .map(|q| rows.iter().map(|row| (row[q].abs() > half) as u8).collect())
        .collect()
}

/// Splits a codeword into `order` blocks and decodes each block to an index.
pub fn decode(word: &[u8], table: &IndexCodeTable, order: Order) -> Option<Coord> {
    let l = table.len();
    if word.len() != l * order.arity() {
        return None;
    }
    let mut ix = [0usize; 3];
    for (axis, block) in word.chunks(l).enumerate() {
        ix[axis] = table.decode_index(block)?;
    }
    Some(match order {
        Order::Two => Coord::pair(ix[0], ix[1]),
        Order::Three => Coord::triple(ix[0], ix[1], ix[2]),
    })
}

/// Per-coordinate occurrence counts across `d` repetitions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecodedVotes {
    counts: BTreeMap<Coord, usize>,
    repetitions: usize,
}

impl DecodedVotes {
    pub fn new(repetitions: usize) -> Self {
        DecodedVotes {
            counts: BTreeMap::new(),
            repetitions,
        }
    }

    /// Records one repetition's decoded set; a coordinate counts once per repetition.
    pub fn add_repetition(&mut self, decoded: impl IntoIterator<Item = Coord>) {
        let unique: std::collections::BTreeSet<Coord> = decoded.into_iter().collect();
        for c in unique {
            *self.counts.entry(c).or_insert(0) += 1;
        }
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn count(&self, c: &Coord) -> usize {
        self.counts.get(c).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coord, usize)> + '_ {
        self.counts.iter().map(|(c, n)| (*c, *n))
    }

    pub fn from_counts(repetitions: usize, counts: impl IntoIterator<Item = (Coord, usize)>) -> Self {
        DecodedVotes {
            counts: counts.into_iter().filter(|(_, n)| *n > 0).collect(),
            repetitions,
        }
    }
}

/// Coordinates seen in at least half of the repetitions, ordered by vote
/// count (descending) then coordinate.
pub fn majority_filter(votes: &DecodedVotes) -> Vec<(Coord, usize)> {
    let d = votes.repetitions;
    let mut kept: Vec<(Coord, usize)> = votes.iter().filter(|(_, n)| 2 * n >= d).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    kept
}
