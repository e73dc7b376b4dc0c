//! Grid-cell outlier injection for 2-d data: histogram the inliers on a fixed
//! grid, mark every empty cell whose 8 neighbours are also empty, then draw
//! outliers by picking a marked cell uniformly and a uniform position inside
//! it. The marked set is never materialized; draws use order statistics over
//! the sorted complement (occupied cells dilated by one), so generation is
//! exact and deterministic.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBounds {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl GridBounds {
    /// Bounding box of the points expanded by one cell on every side.
    pub fn around(points: &[(f64, f64)], cell: f64) -> Result<GridBounds> {
        if points.is_empty() {
            return Err(Error::EmptyDataset("no points to bound".into()));
        }
        let mut b = GridBounds {
            min_x: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            min_y: f64::INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for &(x, y) in points {
            b.min_x = b.min_x.min(x);
            b.max_x = b.max_x.max(x);
            b.min_y = b.min_y.min(y);
            b.max_y = b.max_y.max(y);
        }
        Ok(GridBounds {
            min_x: b.min_x - cell,
            max_x: b.max_x + cell,
            min_y: b.min_y - cell,
            max_y: b.max_y + cell,
        })
    }
}

/// Occupancy histogram of 2-d points over a fixed-size cell grid.
#[derive(Debug)]
pub struct GridIndex {
    cell: f64,
    bounds: GridBounds,
    nx: i64,
    ny: i64,
    occupied: HashSet<(i64, i64)>,
}

impl GridIndex {
    pub fn from_points(points: &[(f64, f64)], cell: f64, bounds: GridBounds) -> Result<GridIndex> {
        if !(cell > 0.0) {
            return Err(Error::Config("cell size must be positive".into()));
        }
        if bounds.max_x <= bounds.min_x || bounds.max_y <= bounds.min_y {
            return Err(Error::Config("degenerate grid bounds".into()));
        }
        let nx = ((bounds.max_x - bounds.min_x) / cell).ceil() as i64;
        let ny = ((bounds.max_y - bounds.min_y) / cell).ceil() as i64;
        if nx < 1 || ny < 1 || (nx as i128) * (ny as i128) > (1i128 << 62) {
            return Err(Error::Config("grid too large for the given cell size".into()));
        }
        let mut index = GridIndex { cell, bounds, nx, ny, occupied: HashSet::new() };
        for &(x, y) in points {
            let c = index.cell_of(x, y);
            index.occupied.insert(c);
        }
        Ok(index)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn bounds(&self) -> GridBounds {
        self.bounds
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        let ix = (((x - self.bounds.min_x) / self.cell).floor() as i64).clamp(0, self.nx - 1);
        let iy = (((y - self.bounds.min_y) / self.cell).floor() as i64).clamp(0, self.ny - 1);
        (ix, iy)
    }

    pub fn is_occupied(&self, cell: (i64, i64)) -> bool {
        self.occupied.contains(&cell)
    }

    /// Empty cell whose immediate 8 neighbours are also empty (cells outside
    /// the bounds count as empty).
    pub fn is_markable(&self, cell: (i64, i64)) -> bool {
        for dx in -1..=1 {
            for dy in -1..=1 {
                if self.occupied.contains(&(cell.0 + dx, cell.1 + dy)) {
                    return false;
                }
            }
        }
        true
    }

    fn cell_index(&self, cell: (i64, i64)) -> u64 {
        (cell.0 * self.ny + cell.1) as u64
    }

    fn cell_at_index(&self, idx: u64) -> (i64, i64) {
        ((idx / self.ny as u64) as i64, (idx % self.ny as u64) as i64)
    }

    /// Sorted indices of in-bounds cells that are occupied or neighbour an
    /// occupied cell; the complement is exactly the marked set.
    fn dilated_indices(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::with_capacity(self.occupied.len() * 9);
        for &(cx, cy) in &self.occupied {
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let (x, y) = (cx + dx, cy + dy);
                    if x >= 0 && x < self.nx && y >= 0 && y < self.ny {
                        out.push(self.cell_index((x, y)));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Inject `count` outliers into 2-d inliers. The output keeps the original
/// points first (labeled inlier, unmodified) followed by the injected points
/// (labeled outlier).
pub fn inject_grid_outliers(
    inliers: &[(f64, f64)],
    count: usize,
    cell_size: f64,
    bounds: Option<GridBounds>,
    seed: u64,
) -> Result<Vec<((f64, f64), bool)>> {
    let bounds = match bounds {
        Some(b) => b,
        None => GridBounds::around(inliers, cell_size)?,
    };
    let index = GridIndex::from_points(inliers, cell_size, bounds)?;
    let dilated = index.dilated_indices();
    let total = (index.nx as u64) * (index.ny as u64);
    let markable = total - dilated.len() as u64;
    if markable == 0 {
        return Err(Error::Data("no markable grid cell (every cell touches an inlier)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<((f64, f64), bool)> = Vec::with_capacity(inliers.len() + count);
    out.extend(inliers.iter().map(|p| (*p, false)));
    for _ in 0..count {
        // j-th marked cell, via rank arithmetic over the sorted dilated set:
        // idx is marked iff idx - |dilated <= idx| == j; monotone in idx.
        let j = (rng.random::<f64>() * markable as f64) as u64;
        let (mut lo, mut hi) = (0u64, total - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            let rank = dilated.partition_point(|&d| d <= mid) as u64;
            if mid - rank >= j + 1 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let cell = index.cell_at_index(lo);
        debug_assert!(index.is_markable(cell));
        let x = bounds.min_x + (cell.0 as f64 + rng.random::<f64>()) * cell_size;
        let y = bounds.min_y + (cell.1 as f64 + rng.random::<f64>()) * cell_size;
        out.push(((x, y), true));
    }
    Ok(out)
}

/// Clustered 2-d inliers: a mixture of `clusters` isotropic Gaussians with
/// centers drawn uniformly in [-extent, extent]^2.
pub fn clustered_inliers(
    n: usize,
    clusters: usize,
    extent: f64,
    spread: f64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(f64, f64)> = (0..clusters.max(1))
        .map(|_| {
            (
                (rng.random::<f64>() * 2.0 - 1.0) * extent,
                (rng.random::<f64>() * 2.0 - 1.0) * extent,
            )
        })
        .collect();
    let noise = Normal::new(0.0, spread).unwrap();
    (0..n)
        .map(|_| {
            let (cx, cy) = centers[rng.random_range(0..centers.len())];
            (cx + noise.sample(&mut rng), cy + noise.sample(&mut rng))
        })
        .collect()
}
