//! Hashed sparse random projection of mixed-type points into K-dimensional
//! sketches, plus constant-time sketch updates for stream deltas.
//!
//! Component k of a sketch is `Σ_real h_k(name)·value + Σ_cat h_k(name:value)`
//! where `h_k` maps a string to {+1, −1, 0} with probabilities 1/6, 1/6, 2/3.
//! The same family supports O(K) incremental updates: a numeric delta adds
//! `h_k(name)·δ`, a categorical substitution adds `h_k(name:new) −
//! h_k(name:old)` (the old term is zero for a newly-arising feature), so a
//! never-seen feature needs no schema change.

use dashmap::DashMap;

use crate::data::{Name, SparsePoint, UpdateOp, UpdateTriple};
use crate::hash::h64;

/// Hash one string to {+1, −1, 0} with probabilities 1/6, 1/6, 2/3.
/// The bias from 2^64 mod 6 != 0 is below 3e-19 and ignored.
#[inline]
pub fn hash_component(seed: u64, s: &str) -> i8 {
    match h64(seed, s.as_bytes()) % 6 {
        0 => 1,
        1 => -1,
        _ => 0,
    }
}

/// K-dimensional sketch of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    pub id: String,
    pub values: Vec<f64>,
}

impl Sketch {
    pub fn zero(id: impl Into<String>, k: usize) -> Sketch {
        Sketch { id: id.into(), values: vec![0.0; k] }
    }
}

/// Immutable projector, safely shareable across workers. Name hashes for
/// numerical features are computed once per run and memoized; categorical
/// name:value strings are hashed per occurrence.
pub struct HashProjector {
    seeds: Vec<u64>,
    name_memo: DashMap<Name, Box<[i8]>>,
}

impl HashProjector {
    /// Projector with seeds 0..k, shared by every worker of a run.
    pub fn new(k: usize) -> HashProjector {
        Self::with_seeds((0..k as u64).collect())
    }

    pub fn with_seeds(seeds: Vec<u64>) -> HashProjector {
        assert!(!seeds.is_empty(), "projection dimension must be >= 1");
        HashProjector { seeds, name_memo: DashMap::new() }
    }

    pub fn k(&self) -> usize {
        self.seeds.len()
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    fn name_hashes(&self, name: &Name) -> dashmap::mapref::one::Ref<'_, Name, Box<[i8]>> {
        if let Some(h) = self.name_memo.get(name) {
            return h;
        }
        let hs: Box<[i8]> =
            self.seeds.iter().map(|&sd| hash_component(sd, name)).collect();
        self.name_memo.entry(name.clone()).or_insert(hs).downgrade()
    }

    #[inline]
    fn add_cat(&self, values: &mut [f64], name: &str, value: &str, sign: f64) {
        let mut s = String::with_capacity(name.len() + value.len() + 1);
        s.push_str(name);
        s.push(':');
        s.push_str(value);
        for (k, &seed) in self.seeds.iter().enumerate() {
            let h = hash_component(seed, &s);
            if h != 0 {
                values[k] += sign * h as f64;
            }
        }
    }

    /// Project a point into a K-dimensional sketch. Pure: the result depends
    /// only on (point, seeds). An empty point yields the zero sketch.
    pub fn project(&self, point: &SparsePoint) -> Sketch {
        let mut values = vec![0.0; self.k()];
        for (name, v) in point.real_features() {
            let hs = self.name_hashes(name);
            for (k, &h) in hs.iter().enumerate() {
                if h != 0 {
                    values[k] += h as f64 * v;
                }
            }
        }
        for (name, value) in point.cat_features() {
            self.add_cat(&mut values, name, value, 1.0);
        }
        Sketch { id: point.id().to_string(), values }
    }

    /// Apply one update triple to a sketch in place, in O(K).
    pub fn update_sketch(&self, sketch: &mut Sketch, triple: &UpdateTriple) {
        debug_assert_eq!(sketch.values.len(), self.k());
        match &triple.op {
            UpdateOp::NumericDelta(delta) => {
                let name = Name::from(triple.feature.as_str());
                let hs = self.name_hashes(&name);
                for (k, &h) in hs.iter().enumerate() {
                    if h != 0 {
                        sketch.values[k] += h as f64 * delta;
                    }
                }
            }
            UpdateOp::Substitution { old, new } => {
                self.add_cat(&mut sketch.values, &triple.feature, new, 1.0);
                if let Some(old) = old {
                    self.add_cat(&mut sketch.values, &triple.feature, old, -1.0);
                }
            }
        }
    }
}
