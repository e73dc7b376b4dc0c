//! Domain types and dataset ingestion shared by all other modules.

mod parse;

pub use parse::{
    parse_dense_csv, parse_sparse_kv, parse_update, write_dense_csv, write_sparse_kv, CsvOptions,
};

use std::sync::Arc;

use crate::error::{Error, Result};

/// Interned feature name. Names may not contain `:` (reserved as the
/// name/value separator inside projection hashes) or `,`.
pub type Name = Arc<str>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Real,
    Categorical,
}

/// Ordered feature names with their kinds; stable for the duration of a run.
#[derive(Debug, Clone)]
pub struct DatasetSchema {
    features: Vec<(Name, FeatureKind)>,
}

impl DatasetSchema {
    pub fn new(features: Vec<(Name, FeatureKind)>) -> Result<DatasetSchema> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &features {
            validate_feature_name(name)?;
            if !seen.insert(name.clone()) {
                return Err(Error::Data(format!("duplicate feature name {name:?} in schema")));
            }
        }
        Ok(DatasetSchema { features })
    }

    pub fn all_real(names: impl IntoIterator<Item = String>) -> Result<DatasetSchema> {
        Self::new(names.into_iter().map(|n| (Name::from(n), FeatureKind::Real)).collect())
    }

    pub fn features(&self) -> &[(Name, FeatureKind)] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

pub(crate) fn validate_feature_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::Data("empty feature name".into()));
    }
    if name.contains(':') || name.contains(',') {
        return Err(Error::Data(format!("feature name {name:?} contains a reserved character")));
    }
    Ok(())
}

/// A mixed-type point: sparse real-valued features plus categorical features,
/// with a stable string id. An optional ground-truth label rides alongside as
/// a tag; it is invisible to fitting and scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePoint {
    id: String,
    real: Vec<(Name, f64)>,
    cat: Vec<(Name, Name)>,
    label: Option<u8>,
}

impl SparsePoint {
    /// Build a point, sorting features by name and enforcing the invariants:
    /// non-empty id, finite real values, a name in at most one of the maps.
    pub fn new(
        id: impl Into<String>,
        real: Vec<(Name, f64)>,
        cat: Vec<(Name, Name)>,
    ) -> Result<SparsePoint> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Data("point id must be non-empty".into()));
        }
        let mut real = real;
        let mut cat = cat;
        real.sort_by(|a, b| a.0.cmp(&b.0));
        cat.sort_by(|a, b| a.0.cmp(&b.0));
        let mut seen = std::collections::HashSet::new();
        for (name, v) in &real {
            validate_feature_name(name)?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value for feature {name:?}")));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Data(format!("feature {name:?} appears more than once")));
            }
        }
        for (name, _) in &cat {
            validate_feature_name(name)?;
            if !seen.insert(name.clone()) {
                return Err(Error::Data(format!("feature {name:?} appears more than once")));
            }
        }
        Ok(SparsePoint { id, real, cat, label: None })
    }

    pub fn with_label(mut self, label: u8) -> SparsePoint {
        self.label = Some(label);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Real-valued features, sorted by name.
    pub fn real_features(&self) -> &[(Name, f64)] {
        &self.real
    }

    /// Categorical features, sorted by name.
    pub fn cat_features(&self) -> &[(Name, Name)] {
        &self.cat
    }

    pub fn label(&self) -> Option<u8> {
        self.label
    }

    pub fn real_value(&self, name: &str) -> Option<f64> {
        self.real
            .binary_search_by(|(n, _)| n.as_ref().cmp(name))
            .ok()
            .map(|i| self.real[i].1)
    }
}

/// One incremental change to one feature of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateTriple {
    pub id: String,
    pub feature: String,
    pub op: UpdateOp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOp {
    /// Finite additive delta to a real-valued feature.
    NumericDelta(f64),
    /// Categorical value substitution; `old` is None for a newly-arising
    /// feature.
    Substitution { old: Option<String>, new: String },
}
