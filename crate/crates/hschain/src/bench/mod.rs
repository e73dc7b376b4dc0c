//! Benchmark generators and ranking/classification metrics.

mod gmm;
mod grid;
mod metrics;

pub use gmm::{fit_diag_gmm, sample_gmm_benchmark, synth_source_spec, GmmSpec};
pub use grid::{clustered_inliers, inject_grid_outliers, GridBounds, GridIndex};
pub use metrics::{auprc, auroc, f1};

use crate::data::{Name, SparsePoint};
use crate::error::Result;

/// Dense rows with 0/1 labels into sparse points named f0..f{d-1}, ids by row
/// index.
pub fn rows_to_points(rows: &[(Vec<f64>, bool)]) -> Result<Vec<SparsePoint>> {
    let d = rows.first().map(|(r, _)| r.len()).unwrap_or(0);
    let names: Vec<Name> = (0..d).map(|i| Name::from(format!("f{i}"))).collect();
    rows.iter()
        .enumerate()
        .map(|(i, (row, label))| {
            let real: Vec<(Name, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (names[j].clone(), *v))
                .collect();
            Ok(SparsePoint::new(i.to_string(), real, vec![])?.with_label(*label as u8))
        })
        .collect()
}
