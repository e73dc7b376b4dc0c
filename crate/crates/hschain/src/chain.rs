//! Half-space chains: per-level binning of sketches and the distributed fit
//! that populates one count-min sketch per level.
//!
//! A chain of depth L halves a randomly chosen projected dimension at each
//! level. Bin ids are computed incrementally over a running real vector z
//! (all zeros initially): the first time feature f is sampled,
//! `z[f] = (s[f] + shift) / Δ[f]`; every repeat occurrence doubles `z[f]`.
//! The bin id emitted at level l is the floor of the whole current z vector,
//! so points agreeing on every sampled component share bins no matter what
//! their unsampled components hold. The uniform shift in (0, Δ[f]) is applied
//! only at the first occurrence, keeping the repeat update a single multiply;
//! it remedies ties for nearby points around fixed bin boundaries.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cms::{BinKey, CountMinSketch};
use crate::config::RunConfig;
use crate::engine::{Engine, PartitionedDataset, WireSize};
use crate::error::{Error, Result};
use crate::hash::{derive_seed, h64};
use crate::projector::Sketch;

const SAMPLE_STREAM: u64 = 0x5a17;
const CMS_STREAM: u64 = 0xc375;

/// One ensemble member: bin widths, per-level split features and shifts, and
/// one count-min sketch per level.
#[derive(Debug, Clone)]
pub struct HalfSpaceChain {
    deltas: Arc<Vec<f64>>,
    features: Vec<usize>,
    shifts: Vec<f64>,
    first_occurrence: Vec<bool>,
    sketches: Vec<CountMinSketch>,
}

impl HalfSpaceChain {
    /// Draw per-level split features (uniform with replacement over [0, K))
    /// and shifts from a ChaCha stream seeded by `rng_seed`. Deterministic
    /// given the seed.
    pub fn init(
        rng_seed: u64,
        deltas: Arc<Vec<f64>>,
        levels: usize,
        cms_rows: usize,
        cms_cols: usize,
    ) -> HalfSpaceChain {
        let k = deltas.len();
        assert!(k >= 1 && levels >= 1);
        debug_assert!(deltas.iter().all(|d| *d > 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut features = Vec::with_capacity(levels);
        let mut shifts = Vec::with_capacity(levels);
        for _ in 0..levels {
            let f = rng.random_range(0..k);
            features.push(f);
            let delta = deltas[f];
            let shift = loop {
                let v = rng.random::<f64>() * delta;
                if v > 0.0 && v < delta {
                    break v;
                }
            };
            shifts.push(shift);
        }
        let sketches = (0..levels)
            .map(|l| {
                CountMinSketch::new(cms_rows, cms_cols, derive_seed(rng_seed, CMS_STREAM + l as u64))
            })
            .collect();
        let first_occurrence = first_occurrence_flags(&features, k);
        HalfSpaceChain { deltas, features, shifts, first_occurrence, sketches }
    }

    pub fn with_parts(
        deltas: Arc<Vec<f64>>,
        features: Vec<usize>,
        shifts: Vec<f64>,
        sketches: Vec<CountMinSketch>,
    ) -> Result<HalfSpaceChain> {
        if features.len() != shifts.len() || features.len() != sketches.len() {
            return Err(Error::Model("chain level arrays disagree on length".into()));
        }
        if features.iter().any(|f| *f >= deltas.len()) {
            return Err(Error::Model("chain split feature out of range".into()));
        }
        let first_occurrence = first_occurrence_flags(&features, deltas.len());
        Ok(HalfSpaceChain { deltas, features, shifts, first_occurrence, sketches })
    }

    pub fn k(&self) -> usize {
        self.deltas.len()
    }

    pub fn levels(&self) -> usize {
        self.features.len()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn level_sketch(&self, level: usize) -> &CountMinSketch {
        &self.sketches[level]
    }

    pub(crate) fn level_sketch_mut(&mut self, level: usize) -> &mut CountMinSketch {
        &mut self.sketches[level]
    }

    /// Walk the bin-id recurrence, calling `visit(level, key_bytes)` with the
    /// canonical key encoding at every level. One scratch buffer is reused;
    /// per level only the changed coordinate is re-encoded, so the work per
    /// level is O(1) beyond hashing.
    pub fn walk_levels(&self, sketch: &Sketch, mut visit: impl FnMut(usize, &[u8])) {
        let k = self.k();
        debug_assert_eq!(sketch.values.len(), k);
        let mut z = vec![0.0f64; k];
        let mut key = Vec::with_capacity(4 + 8 * k);
        key.extend_from_slice(&(k as u32).to_le_bytes());
        key.resize(4 + 8 * k, 0);
        for (l, (&f, &first)) in self.features.iter().zip(&self.first_occurrence).enumerate() {
            z[f] = if first {
                (sketch.values[f] + self.shifts[l]) / self.deltas[f]
            } else {
                2.0 * z[f]
            };
            let coord = z[f].floor() as i64;
            key[4 + 8 * f..12 + 8 * f].copy_from_slice(&coord.to_le_bytes());
            visit(l, &key);
        }
    }

    /// Bin identifier per level for one sketch.
    pub fn bin_ids(&self, sketch: &Sketch) -> Vec<BinKey> {
        let mut out = Vec::with_capacity(self.levels());
        self.walk_levels(sketch, |_, key| out.push(BinKey::from_bytes(key)));
        out
    }

    /// All level keys in one contiguous buffer (fit-path representation; one
    /// allocation per point instead of one per level).
    pub fn bin_ids_flat(&self, sketch: &Sketch) -> LevelKeys {
        let stride = 4 + 8 * self.k();
        let mut bytes = Vec::with_capacity(stride * self.levels());
        self.walk_levels(sketch, |_, key| bytes.extend_from_slice(key));
        LevelKeys { bytes, stride }
    }
}

/// Per-level bin keys of one sketch, stored back to back.
#[derive(Debug, Clone)]
pub struct LevelKeys {
    bytes: Vec<u8>,
    stride: usize,
}

impl LevelKeys {
    pub fn level(&self, l: usize) -> &[u8] {
        &self.bytes[l * self.stride..(l + 1) * self.stride]
    }

    pub fn levels(&self) -> usize {
        self.bytes.len() / self.stride
    }
}

fn first_occurrence_flags(features: &[usize], k: usize) -> Vec<bool> {
    let mut seen = vec![false; k];
    features
        .iter()
        .map(|&f| {
            let first = !seen[f];
            seen[f] = true;
            first
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct MinMax {
    min: f64,
    max: f64,
}

impl WireSize for MinMax {
    fn wire_size(&self) -> usize {
        16
    }
}

/// Per-component bin widths: half the global range of the projected data,
/// combined from per-partition extremes. Components with zero range are
/// repaired to Δ = 1.0 (a constant feature contributes a constant bin
/// coordinate and no density information).
pub fn compute_bin_widths(engine: &Engine, data: &PartitionedDataset<Sketch>) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("cannot compute bin widths".into()));
    }
    let k = data.iter().next().expect("non-empty").values.len();
    let pairs = engine.flat_map(data, "fit.widths.emit", |s| {
        s.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u32, MinMax { min: v, max: v }))
            .collect()
    });
    let reduced = engine.reduce_by_key(&pairs, "fit.widths.reduce", |a, b| MinMax {
        min: a.min.min(b.min),
        max: a.max.max(b.max),
    });
    let extremes = engine.collect_as_map(&reduced)?;
    let mut deltas = vec![1.0f64; k];
    for (i, delta) in deltas.iter_mut().enumerate() {
        let mm = extremes
            .get(&(i as u32))
            .ok_or_else(|| Error::Data(format!("no extremes for component {i}")))?;
        let half = (mm.max - mm.min) / 2.0;
        if half > 0.0 {
            *delta = half;
        }
    }
    Ok(deltas)
}

/// Fit one chain: Bernoulli-sample the sketches, materialize bin ids once,
/// then per level emit ((row, col), 1) pairs, reduce them by key and load the
/// totals into the level's count-min sketch. Returns the sampled count.
pub fn fit_chain(
    engine: &Engine,
    data: &PartitionedDataset<Sketch>,
    chain: &mut HalfSpaceChain,
    sample_rate: f64,
    sample_seed: u64,
) -> Result<u64> {
    let sampled = engine.sample(data, "fit.sample", sample_rate, sample_seed, |s| s.id.as_str())?;
    if sampled.is_empty() {
        return Err(Error::EmptySample);
    }
    let levels = chain.levels();
    let mut totals = Vec::with_capacity(levels);
    {
        let chain_ref: &HalfSpaceChain = chain;
        let bin_ids = engine.map(&sampled, "fit.binids", |s| chain_ref.bin_ids_flat(s));
        for l in 0..levels {
            let cms = chain_ref.level_sketch(l);
            let pairs =
                engine.flat_map(&bin_ids, "fit.cms.emit", |ids| cms.all_cols_bytes(ids.level(l)));
            let reduced = engine.reduce_by_key(&pairs, "fit.cms.reduce", |a, b| a + b);
            totals.push(engine.collect_as_map(&reduced)?);
        }
    }
    for (l, t) in totals.iter().enumerate() {
        chain.level_sketch_mut(l).load(t)?;
    }
    Ok(sampled.len() as u64)
}

/// A fitted ensemble plus everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub projection_dims: usize,
    pub levels: usize,
    pub cms_rows: usize,
    pub cms_cols: usize,
    pub run_seed: u64,
    pub sample_rate: f64,
    pub projector_seeds: Vec<u64>,
    pub deltas: Arc<Vec<f64>>,
    pub chains: Vec<HalfSpaceChain>,
}

impl EnsembleModel {
    pub fn chain_count(&self) -> usize {
        self.chains.len()
    }
}

/// Per-run fit summary for reporting.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FitSummary {
    pub points: u64,
    pub sampled_per_chain: Vec<u64>,
}

/// Fit M chains. Chain m draws every random choice from a seed derived as
/// H64(run_seed ⊕ m), so the model is byte-identical regardless of thread
/// scheduling; chains fit concurrently on the engine pool.
pub fn fit_ensemble(
    engine: &Engine,
    data: &PartitionedDataset<Sketch>,
    config: &RunConfig,
) -> Result<(EnsembleModel, FitSummary)> {
    config.validate()?;
    let deltas = Arc::new(compute_bin_widths(engine, data)?);
    if deltas.len() != config.projection_dims {
        return Err(Error::SketchLength { expected: config.projection_dims, got: deltas.len() });
    }
    let fitted: Result<Vec<(HalfSpaceChain, u64)>> = engine.install(|| {
        (0..config.chains as u64)
            .into_par_iter()
            .map(|m| {
                let chain_seed = h64(config.run_seed, &m.to_le_bytes());
                let mut chain = HalfSpaceChain::init(
                    chain_seed,
                    deltas.clone(),
                    config.levels,
                    config.cms_rows,
                    config.cms_cols,
                );
                let sample_seed = derive_seed(chain_seed, SAMPLE_STREAM);
                let sampled = fit_chain(engine, data, &mut chain, config.sample_rate, sample_seed)?;
                Ok((chain, sampled))
            })
            .collect()
    });
    let fitted = fitted?;
    let sampled_per_chain: Vec<u64> = fitted.iter().map(|(_, n)| *n).collect();
    let chains = fitted.into_iter().map(|(c, _)| c).collect();
    let model = EnsembleModel {
        projection_dims: config.projection_dims,
        levels: config.levels,
        cms_rows: config.cms_rows,
        cms_cols: config.cms_cols,
        run_seed: config.run_seed,
        sample_rate: config.sample_rate,
        projector_seeds: (0..config.projection_dims as u64).collect(),
        deltas,
        chains,
    };
    let summary = FitSummary { points: data.len() as u64, sampled_per_chain };
    Ok((model, summary))
}
