//! Shared test utilities: an exact-dictionary histogram oracle that mirrors
//! the chain/scoring contract through an independent code path (direct
//! closed-form binning, perfect-hash counting, no count-min sketch and no
//! engine), plus synthetic data generators.

// Each integration-test binary compiles this module separately and uses a
// different subset of it.
#![allow(dead_code)]

use std::collections::HashMap;


use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hschain::chain::{EnsembleModel, HalfSpaceChain};
use hschain::data::{Name, SparsePoint};
use hschain::projector::Sketch;

/// Exact per-level histogram for one chain's parameters.
pub struct ExactChain {
    deltas: Vec<f64>,
    features: Vec<usize>,
    shifts: Vec<f64>,
    level_counts: Vec<HashMap<Vec<i64>, u64>>,
}

impl ExactChain {
    pub fn from_chain(chain: &HalfSpaceChain) -> ExactChain {
        ExactChain {
            deltas: chain.deltas().to_vec(),
            features: chain.features().to_vec(),
            shifts: chain.shifts().to_vec(),
            level_counts: vec![HashMap::new(); chain.levels()],
        }
    }

    /// Bin coordinates at one level, via the closed form: for each component
    /// with o >= 1 occurrences among levels 0..=l, the coordinate is
    /// floor(((s + shift_at_first_occurrence) / delta) * 2^(o-1)); components
    /// never sampled stay 0. Doubling by powers of two is exact in binary
    /// floating point, so this matches the incremental recurrence bitwise.
    pub fn bin_at_level(&self, sketch: &Sketch, level: usize) -> Vec<i64> {
        let k = self.deltas.len();
        let mut coords = vec![0i64; k];
        let mut occurrences: HashMap<usize, (u32, f64)> = HashMap::new(); // f -> (count, first shift)
        for l in 0..=level {
            let f = self.features[l];
            let e = occurrences.entry(f).or_insert((0, self.shifts[l]));
            e.0 += 1;
        }
        for (&f, &(occ, first_shift)) in &occurrences {
            let base = (sketch.values[f] + first_shift) / self.deltas[f];
            coords[f] = (base * (2.0f64).powi(occ as i32 - 1)).floor() as i64;
        }
        coords
    }

    pub fn fit<'a>(&mut self, sketches: impl IntoIterator<Item = &'a Sketch>) {
        for s in sketches {
            for l in 0..self.features.len() {
                let bin = self.bin_at_level(s, l);
                *self.level_counts[l].entry(bin).or_insert(0) += 1;
            }
        }
    }

    pub fn count_at(&self, level: usize, bin: &[i64]) -> u64 {
        self.level_counts[level].get(bin).copied().unwrap_or(0)
    }

    pub fn level_bins(&self, level: usize) -> &HashMap<Vec<i64>, u64> {
        &self.level_counts[level]
    }

    /// min over levels of 2^l * exact count, levels numbered 1..L.
    pub fn score(&self, sketch: &Sketch) -> f64 {
        let mut best = f64::INFINITY;
        for l in 0..self.features.len() {
            let count = self.count_at(l, &self.bin_at_level(sketch, l));
            if count == 0 {
                return 0.0;
            }
            let extrapolated = (2.0f64).powi(l as i32 + 1) * count as f64;
            if extrapolated < best {
                best = extrapolated;
            }
        }
        best
    }
}

/// Exact ensemble score: average of per-chain oracle scores.
pub struct ExactEnsemble {
    pub chains: Vec<ExactChain>,
}

impl ExactEnsemble {
    pub fn fit(model: &EnsembleModel, sketches: &[Sketch]) -> ExactEnsemble {
        let chains = model
            .chains
            .iter()
            .map(|c| {
                let mut oracle = ExactChain::from_chain(c);
                oracle.fit(sketches.iter());
                oracle
            })
            .collect();
        ExactEnsemble { chains }
    }

    pub fn score(&self, sketch: &Sketch) -> f64 {
        let sum: f64 = self.chains.iter().map(|c| c.score(sketch)).sum();
        sum / self.chains.len() as f64
    }
}

/// Mixed-type synthetic points: `d_real` real features drawn from a few
/// per-feature Gaussian modes plus `d_cat` categorical features with small
/// vocabularies.
pub fn synthetic_points(n: usize, d_real: usize, d_cat: usize, seed: u64) -> Vec<SparsePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real_names: Vec<Name> = (0..d_real).map(|i| Name::from(format!("r{i}"))).collect();
    let cat_names: Vec<Name> = (0..d_cat).map(|i| Name::from(format!("c{i}"))).collect();
    let vocab: Vec<Name> = (0..5).map(|i| Name::from(format!("v{i}"))).collect();
    (0..n)
        .map(|i| {
            let real: Vec<(Name, f64)> = real_names
                .iter()
                .enumerate()
                .filter_map(|(j, name)| {
                    let mode = (i + j) % 3;
                    let v = mode as f64 * 4.0 + rng.random::<f64>() * 2.0 - 1.0;
                    (v != 0.0).then(|| (name.clone(), v))
                })
                .collect();
            let cat: Vec<(Name, Name)> = cat_names
                .iter()
                .map(|name| {
                    let v = &vocab[rng.random_range(0..vocab.len())];
                    (name.clone(), v.clone())
                })
                .collect();
            SparsePoint::new(format!("p{i}"), real, cat).unwrap()
        })
        .collect()
}

