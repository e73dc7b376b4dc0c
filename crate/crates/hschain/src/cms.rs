//! Count-min sketch: an r×w counter grid giving overestimate-only frequency
//! queries, with the pair-emission form used by the distributed reduce.
//! Counters are 64-bit so a fitted model survives billions of points; memory
//! is Θ(r·w) regardless of how many keys are inserted.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::hash::{derive_seed, h64};

/// Canonical byte encoding of a bin identifier: a little-endian u32 length
/// prefix followed by each coordinate as a little-endian i64. Injective on
/// integer vectors and deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinKey(Vec<u8>);

impl BinKey {
    pub fn encode(coords: &[i64]) -> BinKey {
        let mut bytes = Vec::with_capacity(4 + 8 * coords.len());
        bytes.extend_from_slice(&(coords.len() as u32).to_le_bytes());
        for c in coords {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        BinKey(bytes)
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> BinKey {
        BinKey(bytes.to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn decode(&self) -> Vec<i64> {
        let n = u32::from_le_bytes(self.0[..4].try_into().unwrap()) as usize;
        (0..n)
            .map(|i| i64::from_le_bytes(self.0[4 + 8 * i..12 + 8 * i].try_into().unwrap()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountMinSketch {
    rows: usize,
    cols: usize,
    row_seeds: Vec<u64>,
    counts: Vec<u64>, // row-major, rows * cols
}

impl CountMinSketch {
    /// Empty sketch with per-row hash seeds derived from `seed`.
    pub fn new(rows: usize, cols: usize, seed: u64) -> CountMinSketch {
        assert!(rows >= 1 && cols >= 1, "CMS dimensions must be >= 1");
        let row_seeds = (0..rows as u64).map(|i| derive_seed(seed, i)).collect();
        CountMinSketch { rows, cols, row_seeds, counts: vec![0; rows * cols] }
    }

    pub fn with_parts(rows: usize, cols: usize, row_seeds: Vec<u64>, counts: Vec<u64>) -> Result<Self> {
        if row_seeds.len() != rows || counts.len() != rows * cols {
            return Err(Error::Model("count-min sketch dimensions mismatch".into()));
        }
        Ok(CountMinSketch { rows, cols, row_seeds, counts })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_seeds(&self) -> &[u64] {
        &self.row_seeds
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    fn col(&self, row: usize, key: &[u8]) -> usize {
        (h64(self.row_seeds[row], key) % self.cols as u64) as usize
    }

    /// The ((row, col), 1) pairs a key contributes, one per row. This is the
    /// emission format consumed by reduce_by_key during fitting.
    pub fn all_cols(&self, key: &BinKey) -> Vec<((u32, u32), u64)> {
        self.all_cols_bytes(key.as_bytes())
    }

    pub fn all_cols_bytes(&self, key: &[u8]) -> Vec<((u32, u32), u64)> {
        (0..self.rows)
            .map(|r| ((r as u32, self.col(r, key) as u32), 1u64))
            .collect()
    }

    /// Increment the key's counter in every row.
    pub fn insert(&mut self, key: &BinKey) {
        for r in 0..self.rows {
            let c = self.col(r, key.as_bytes());
            self.counts[r * self.cols + c] += 1;
        }
    }

    /// Minimum count across rows; an overestimate of the key's true count.
    #[inline]
    pub fn query(&self, key: &[u8]) -> u64 {
        let mut min = u64::MAX;
        for r in 0..self.rows {
            let c = self.col(r, key);
            let v = self.counts[r * self.cols + c];
            if v < min {
                min = v;
            }
        }
        min
    }

    /// Load reduced totals into the counter grid.
    pub fn load(&mut self, totals: &HashMap<(u32, u32), u64>) -> Result<()> {
        for (&(r, c), &v) in totals {
            let (r, c) = (r as usize, c as usize);
            if r >= self.rows || c >= self.cols {
                return Err(Error::Data(format!(
                    "counter ({r},{c}) outside {}x{} grid",
                    self.rows, self.cols
                )));
            }
            self.counts[r * self.cols + c] += v;
        }
        Ok(())
    }

    /// True iff no two distinct keys of `keys` share a column in any row.
    /// Under this predicate every query over the inserted stream is exact.
    pub fn collision_free<'a>(&self, keys: impl IntoIterator<Item = &'a BinKey>) -> bool {
        let mut per_row: Vec<std::collections::HashSet<usize>> =
            (0..self.rows).map(|_| Default::default()).collect();
        for key in keys {
            for r in 0..self.rows {
                if !per_row[r].insert(self.col(r, key.as_bytes())) {
                    return false;
                }
            }
        }
        true
    }
}

/// Sum pair contributions by key; independent of arrival order and
/// partitioning. The distributed path does the same thing through
/// `Engine::reduce_by_key`.
pub fn merge_counts(
    pairs: impl IntoIterator<Item = ((u32, u32), u64)>,
) -> HashMap<(u32, u32), u64> {
    let mut out: HashMap<(u32, u32), u64> = HashMap::new();
    for (k, v) in pairs {
        *out.entry(k).or_insert(0) += v;
    }
    out
}
