//! In-process shared-nothing execution engine.
//!
//! Data lives in immutable [`PartitionedDataset`]s; the dataset's identity is
//! the multiset of its elements, never the partition boundaries. Workers are
//! a bounded thread pool, user functions must be pure, and the only
//! cross-worker exchange is the merge phase of [`Engine::reduce_by_key`],
//! which pre-combines within each partition before "shuffling". The shuffle
//! is modeled as serialized byte transfer: every reduce records the number of
//! pre-combine pairs, post-combine records and bytes exchanged, exported per
//! stage via [`Engine::metrics`].

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hash::{h64, to_unit, StableHasher, StableMap};

/// Immutable partitioned collection.
#[derive(Debug, Clone)]
pub struct PartitionedDataset<T> {
    partitions: Vec<Vec<T>>,
}

impl<T> PartitionedDataset<T> {
    pub fn from_partitions(partitions: Vec<Vec<T>>) -> Self {
        let partitions = if partitions.is_empty() { vec![Vec::new()] } else { partitions };
        PartitionedDataset { partitions }
    }

    /// Chunk `items` into `partitions` contiguous slices, preserving order.
    pub fn from_items(items: Vec<T>, partitions: usize) -> Self {
        let p = partitions.max(1);
        let n = items.len();
        let chunk = n.div_ceil(p).max(1);
        let mut parts: Vec<Vec<T>> = Vec::with_capacity(p);
        let mut it = items.into_iter();
        for _ in 0..p {
            parts.push(it.by_ref().take(chunk).collect());
        }
        PartitionedDataset { partitions: parts }
    }

    pub fn repartition(self, partitions: usize) -> Self {
        let items: Vec<T> = self.partitions.into_iter().flatten().collect();
        Self::from_items(items, partitions)
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn len(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in partition order; for contiguously chunked data this is the
    /// original input order.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.partitions.iter().flatten()
    }

    pub fn into_items(self) -> Vec<T> {
        self.partitions.into_iter().flatten().collect()
    }

    pub fn partitions(&self) -> &[Vec<T>] {
        &self.partitions
    }
}

/// Read-only value shared with all workers.
#[derive(Debug)]
pub struct Broadcast<T>(Arc<T>);

impl<T> Broadcast<T> {
    pub fn new(value: Arc<T>) -> Self {
        Broadcast(value)
    }

    pub fn value(&self) -> &T {
        &self.0
    }
}

impl<T> Clone for Broadcast<T> {
    fn clone(&self) -> Self {
        Broadcast(self.0.clone())
    }
}

/// Byte size of a record when serialized for exchange between workers.
pub trait WireSize {
    fn wire_size(&self) -> usize;
}

macro_rules! fixed_wire {
    ($($t:ty),*) => {
        $(impl WireSize for $t {
            fn wire_size(&self) -> usize { std::mem::size_of::<$t>() }
        })*
    };
}
fixed_wire!(u8, u16, u32, u64, i8, i16, i32, i64, f32, f64, usize);

impl WireSize for String {
    fn wire_size(&self) -> usize {
        8 + self.len()
    }
}

impl<A: WireSize, B: WireSize> WireSize for (A, B) {
    fn wire_size(&self) -> usize {
        self.0.wire_size() + self.1.wire_size()
    }
}

impl<T: WireSize> WireSize for Vec<T> {
    fn wire_size(&self) -> usize {
        8 + self.iter().map(WireSize::wire_size).sum::<usize>()
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct StageMetrics {
    pub invocations: u64,
    pub wall_ms: f64,
    pub input_records: u64,
    pub output_records: u64,
    /// Pairs entering a reduce before per-partition pre-combining.
    pub pre_combine_pairs: u64,
    /// Records exchanged after pre-combining.
    pub post_combine_records: u64,
    pub shuffled_bytes: u64,
}

pub struct Engine {
    pool: rayon::ThreadPool,
    threads: usize,
    metrics: Mutex<std::collections::BTreeMap<String, StageMetrics>>,
}

impl Engine {
    pub fn new(threads: usize) -> Result<Engine> {
        if threads == 0 {
            return Err(Error::Config("worker count must be >= 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Engine { pool, threads, metrics: Mutex::new(Default::default()) })
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Run `op` inside the engine's worker pool.
    pub fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        self.pool.install(op)
    }

    fn record(&self, stage: &str, update: impl FnOnce(&mut StageMetrics)) {
        let mut m = self.metrics.lock().unwrap();
        update(m.entry(stage.to_string()).or_default());
    }

    pub fn metrics(&self) -> std::collections::BTreeMap<String, StageMetrics> {
        self.metrics.lock().unwrap().clone()
    }

    pub fn metrics_json(&self) -> serde_json::Value {
        serde_json::to_value(self.metrics()).expect("metrics serialize")
    }

    pub fn reset_metrics(&self) {
        self.metrics.lock().unwrap().clear();
    }

    pub fn map<T, U, F>(&self, ds: &PartitionedDataset<T>, stage: &str, f: F) -> PartitionedDataset<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync,
    {
        self.try_map(ds, stage, |t| Ok::<U, String>(f(t)))
            .expect("infallible map")
    }

    pub fn try_map<T, U, F, E>(
        &self,
        ds: &PartitionedDataset<T>,
        stage: &str,
        f: F,
    ) -> Result<PartitionedDataset<U>>
    where
        T: Sync,
        U: Send,
        E: ToString + Send,
        F: Fn(&T) -> std::result::Result<U, E> + Sync,
    {
        let start = Instant::now();
        let results: Vec<std::result::Result<Vec<U>, (usize, usize, String)>> = self.pool.install(|| {
            ds.partitions
                .par_iter()
                .enumerate()
                .map(|(pi, part)| {
                    let mut out = Vec::with_capacity(part.len());
                    for (i, t) in part.iter().enumerate() {
                        match f(t) {
                            Ok(u) => out.push(u),
                            Err(e) => return Err((pi, i, e.to_string())),
                        }
                    }
                    Ok(out)
                })
                .collect()
        });
        let mut partitions = Vec::with_capacity(results.len());
        let mut failure: Option<(usize, usize, String)> = None;
        for r in results {
            match r {
                Ok(p) => partitions.push(p),
                Err(fail) => {
                    if failure.as_ref().map_or(true, |f| fail.0 < f.0) {
                        failure = Some(fail);
                    }
                }
            }
        }
        if let Some((partition, index, msg)) = failure {
            return Err(Error::Stage { stage: stage.to_string(), partition, index, msg });
        }
        let out = PartitionedDataset { partitions };
        self.record(stage, |m| {
            m.invocations += 1;
            m.wall_ms += start.elapsed().as_secs_f64() * 1e3;
            m.input_records += ds.len() as u64;
            m.output_records += out.len() as u64;
        });
        Ok(out)
    }

    pub fn flat_map<T, U, F>(
        &self,
        ds: &PartitionedDataset<T>,
        stage: &str,
        f: F,
    ) -> PartitionedDataset<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> Vec<U> + Sync,
    {
        let start = Instant::now();
        let partitions: Vec<Vec<U>> = self.pool.install(|| {
            ds.partitions
                .par_iter()
                .map(|part| part.iter().flat_map(&f).collect())
                .collect()
        });
        let out = PartitionedDataset { partitions };
        self.record(stage, |m| {
            m.invocations += 1;
            m.wall_ms += start.elapsed().as_secs_f64() * 1e3;
            m.input_records += ds.len() as u64;
            m.output_records += out.len() as u64;
        });
        out
    }

    /// Combine all values per key. `combine` must be associative and
    /// commutative; each partition is pre-combined locally before the merge,
    /// so the exchanged volume is bounded by distinct keys per partition.
    pub fn reduce_by_key<K, V, F>(
        &self,
        ds: &PartitionedDataset<(K, V)>,
        stage: &str,
        combine: F,
    ) -> PartitionedDataset<(K, V)>
    where
        K: Eq + Hash + Clone + Send + Sync + WireSize,
        V: Clone + Send + Sync + WireSize,
        F: Fn(V, V) -> V + Sync,
    {
        let start = Instant::now();
        let nparts = ds.partition_count();
        let locals: Vec<StableMap<K, V>> = self.pool.install(|| {
            ds.partitions
                .par_iter()
                .map(|part| {
                    let mut acc: StableMap<K, V> = StableMap::default();
                    for (k, v) in part {
                        match acc.remove(k) {
                            Some(prev) => {
                                acc.insert(k.clone(), combine(prev, v.clone()));
                            }
                            None => {
                                acc.insert(k.clone(), v.clone());
                            }
                        }
                    }
                    acc
                })
                .collect()
        });
        let pre_pairs: u64 = ds.len() as u64;
        let mut post_records = 0u64;
        let mut bytes = 0u64;
        let mut merged: StableMap<K, V> = StableMap::default();
        for local in locals {
            post_records += local.len() as u64;
            for (k, v) in local {
                bytes += (k.wire_size() + v.wire_size()) as u64;
                match merged.remove(&k) {
                    Some(prev) => {
                        merged.insert(k, combine(prev, v));
                    }
                    None => {
                        merged.insert(k, v);
                    }
                }
            }
        }
        let mut partitions: Vec<Vec<(K, V)>> = (0..nparts).map(|_| Vec::new()).collect();
        for (k, v) in merged {
            let mut hasher = StableHasher::default();
            k.hash(&mut hasher);
            let slot = (hasher.finish() % nparts as u64) as usize;
            partitions[slot].push((k, v));
        }
        let out = PartitionedDataset { partitions };
        self.record(stage, |m| {
            m.invocations += 1;
            m.wall_ms += start.elapsed().as_secs_f64() * 1e3;
            m.input_records += pre_pairs;
            m.output_records += out.len() as u64;
            m.pre_combine_pairs += pre_pairs;
            m.post_combine_records += post_records;
            m.shuffled_bytes += bytes;
        });
        out
    }

    /// Gather all pairs into a driver-side map. A duplicate key signals a
    /// missing reduce and is an error.
    pub fn collect_as_map<K, V>(&self, ds: &PartitionedDataset<(K, V)>) -> Result<HashMap<K, V>>
    where
        K: Eq + Hash + Clone + Debug,
        V: Clone,
    {
        let mut out = HashMap::with_capacity(ds.len());
        for (k, v) in ds.iter() {
            if out.insert(k.clone(), v.clone()).is_some() {
                return Err(Error::DuplicateKey(format!("{k:?}")));
            }
        }
        Ok(out)
    }

    /// Per-element Bernoulli sampling keyed by (seed, element id), so the
    /// sample is independent of partitioning.
    pub fn sample<T, F>(
        &self,
        ds: &PartitionedDataset<T>,
        stage: &str,
        rate: f64,
        seed: u64,
        id_of: F,
    ) -> Result<PartitionedDataset<T>>
    where
        T: Clone + Send + Sync,
        F: for<'a> Fn(&'a T) -> &'a str + Sync,
    {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::Config(format!("sample rate {rate} out of range (0, 1]")));
        }
        let start = Instant::now();
        let partitions: Vec<Vec<T>> = self.pool.install(|| {
            ds.partitions
                .par_iter()
                .map(|part| {
                    part.iter()
                        .filter(|t| to_unit(h64(seed, id_of(t).as_bytes())) < rate)
                        .cloned()
                        .collect()
                })
                .collect()
        });
        let out = PartitionedDataset { partitions };
        self.record(stage, |m| {
            m.invocations += 1;
            m.wall_ms += start.elapsed().as_secs_f64() * 1e3;
            m.input_records += ds.len() as u64;
            m.output_records += out.len() as u64;
        });
        Ok(out)
    }

    pub fn broadcast<T>(&self, value: T) -> Broadcast<T> {
        Broadcast(Arc::new(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> Engine {
        Engine::new(2).unwrap()
    }

    fn ints(n: usize, parts: usize) -> PartitionedDataset<i64> {
        PartitionedDataset::from_items((0..n as i64).collect(), parts)
    }

    #[test]
    fn map_identity_and_increment() {
        let e = engine();
        let ds = PartitionedDataset::from_items(vec![1i64, 2, 3], 2);
        let same = e.map(&ds, "t", |x| *x);
        assert_eq!(same.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
        let inc = e.map(&ds, "t", |x| x + 1);
        assert_eq!(inc.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn map_multiset_invariant_under_repartition() {
        let e = engine();
        let mut base: Vec<i64> = ints(101, 1).into_items();
        for parts in [1usize, 2, 7, 16] {
            let ds = ints(101, parts);
            let mut got: Vec<i64> = e.map(&ds, "t", |x| x * 3).into_items();
            got.sort_unstable();
            let mut want: Vec<i64> = base.iter().map(|x| x * 3).collect();
            want.sort_unstable();
            assert_eq!(got, want);
        }
        base.sort_unstable();
    }

    #[test]
    fn try_map_reports_stage_partition_index() {
        let e = engine();
        let ds = PartitionedDataset::from_items(vec![1i64, 2, 3, 4], 2);
        let err = e
            .try_map(&ds, "boom", |x| if *x == 3 { Err("bad".to_string()) } else { Ok(*x) })
            .unwrap_err();
        match err {
            Error::Stage { stage, partition, index, msg } => {
                assert_eq!(stage, "boom");
                assert_eq!(partition, 1);
                assert_eq!(index, 0);
                assert_eq!(msg, "bad");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn flat_map_singleton_is_map_and_empty_clears() {
        let e = engine();
        let ds = ints(10, 3);
        let wrapped = e.flat_map(&ds, "t", |x| vec![*x]);
        assert_eq!(wrapped.iter().copied().collect::<Vec<_>>(), ds.iter().copied().collect::<Vec<_>>());
        let none = e.flat_map(&ds, "t", |_| Vec::<i64>::new());
        assert_eq!(none.len(), 0);
    }

    #[test]
    fn flat_map_cardinality() {
        let e = engine();
        let ds = ints(50, 4);
        let r = 7;
        let out = e.flat_map(&ds, "t", |x| vec![*x; r]);
        assert_eq!(out.len(), 50 * r);
    }

    #[test]
    fn reduce_examples() {
        let e = engine();
        let ds = PartitionedDataset::from_items(
            vec![("a".to_string(), 1i64), ("a".to_string(), 2), ("b".to_string(), 5)],
            2,
        );
        let reduced = e.reduce_by_key(&ds, "t", |a, b| a + b);
        let map = e.collect_as_map(&reduced).unwrap();
        assert_eq!(map["a"], 3);
        assert_eq!(map["b"], 5);

        let distinct = PartitionedDataset::from_items(vec![(1u32, 1u64), (2, 1), (3, 1)], 2);
        let reduced = e.reduce_by_key(&distinct, "t", |a, b| a + b);
        assert_eq!(reduced.len(), 3);
    }

    #[test]
    fn reduce_invariant_under_partitioning_and_order() {
        let e = engine();
        let pairs: Vec<(u32, u64)> = (0..200).map(|i| (i % 13, (i as u64) + 1)).collect();
        let mut reference: Vec<(u32, u64)> = {
            let ds = PartitionedDataset::from_items(pairs.clone(), 1);
            e.reduce_by_key(&ds, "t", |a, b| a + b).into_items()
        };
        reference.sort_unstable();
        for parts in [2usize, 5, 32] {
            let mut shuffled = pairs.clone();
            shuffled.reverse();
            let ds = PartitionedDataset::from_items(shuffled, parts);
            let mut got = e.reduce_by_key(&ds, "t", |a, b| a + b).into_items();
            got.sort_unstable();
            assert_eq!(got, reference);
        }
    }

    #[test]
    fn collect_as_map_duplicate_key_errors() {
        let e = engine();
        let ds = PartitionedDataset::from_items(vec![(1u32, 1u64), (1, 2)], 2);
        assert!(matches!(e.collect_as_map(&ds), Err(Error::DuplicateKey(_))));
        let empty: PartitionedDataset<(u32, u64)> = PartitionedDataset::from_items(vec![], 1);
        assert!(e.collect_as_map(&empty).unwrap().is_empty());
    }

    #[test]
    fn sample_rate_one_is_identity() {
        let e = engine();
        let ds = PartitionedDataset::from_items((0..100).map(|i| i.to_string()).collect(), 4);
        let s = e.sample(&ds, "t", 1.0, 9, |t| t.as_str()).unwrap();
        assert_eq!(s.len(), 100);
    }

    #[test]
    fn sample_rate_out_of_range_errors() {
        let e = engine();
        let ds = PartitionedDataset::from_items(vec!["a".to_string()], 1);
        assert!(e.sample(&ds, "t", 0.0, 9, |t| t.as_str()).is_err());
        assert!(e.sample(&ds, "t", 1.5, 9, |t| t.as_str()).is_err());
    }

    #[test]
    fn sample_binomial_bound() {
        let e = engine();
        let n = 100_000usize;
        let rate = 0.5;
        let ds = PartitionedDataset::from_items((0..n).map(|i| i.to_string()).collect(), 8);
        let s = e.sample(&ds, "t", rate, 1234, |t| t.as_str()).unwrap();
        let mean = n as f64 * rate;
        let sigma = (n as f64 * rate * (1.0 - rate)).sqrt();
        assert!((s.len() as f64 - mean).abs() < 5.0 * sigma, "sampled {}", s.len());
    }

    #[test]
    fn sample_independent_of_partitioning() {
        let e = engine();
        let items: Vec<String> = (0..5000).map(|i| format!("id{i}")).collect();
        let mut reference: Vec<String> = e
            .sample(&PartitionedDataset::from_items(items.clone(), 1), "t", 0.3, 7, |t| t.as_str())
            .unwrap()
            .into_items();
        reference.sort();
        for parts in [3usize, 8, 17] {
            let ds = PartitionedDataset::from_items(items.clone(), parts);
            let mut got = e.sample(&ds, "t", 0.3, 7, |t| t.as_str()).unwrap().into_items();
            got.sort();
            assert_eq!(got, reference);
        }
    }

    #[test]
    fn reduce_metrics_account_pairs_and_bytes() {
        let e = engine();
        let pairs: Vec<((u32, u32), u64)> = (0..60).map(|i| ((i % 3, i % 2), 1u64)).collect();
        let ds = PartitionedDataset::from_items(pairs, 4);
        let _ = e.reduce_by_key(&ds, "acct", |a, b| a + b);
        let m = e.metrics();
        let s = &m["acct"];
        assert_eq!(s.pre_combine_pairs, 60);
        // 6 distinct keys, present in each of 4 partitions at most.
        assert!(s.post_combine_records >= 6 && s.post_combine_records <= 24);
        assert_eq!(s.shuffled_bytes, s.post_combine_records * 16);
        assert_eq!(s.output_records, 6);
    }

    #[test]
    fn broadcast_shares_value() {
        let e = engine();
        let b = e.broadcast(vec![1, 2, 3]);
        let b2 = b.clone();
        assert_eq!(b.value(), b2.value());
    }

    #[test]
    fn scheduling_independence_of_thread_count() {
        let ds = ints(10_000, 16);
        let run = |threads: usize| -> Vec<i64> {
            let e = Engine::new(threads).unwrap();
            let mapped = e.map(&ds, "t", |x| x * 7 + 1);
            let pairs = e.flat_map(&mapped, "t", |x| vec![((x % 11) as u32, 1u64)]);
            let mut out = e.reduce_by_key(&pairs, "t", |a, b| a + b).into_items()
                .into_iter()
                .map(|(k, v)| (k as i64) << 32 | v as i64)
                .collect::<Vec<_>>();
            out.sort_unstable();
            out
        };
        assert_eq!(run(1), run(8));
    }
}
