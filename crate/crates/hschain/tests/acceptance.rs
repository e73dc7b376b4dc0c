//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured values. Heavy detection-quality runs are desk-scale analogs
//! with regenerated data.

mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use common::{synthetic_points, ExactChain};
use hschain::bench;
use hschain::chain::{fit_ensemble, EnsembleModel};
use hschain::cms::{BinKey, CountMinSketch};
use hschain::config::RunConfig;
use hschain::data::{parse_update, Name, SparsePoint, UpdateOp, UpdateTriple};
use hschain::engine::{Engine, PartitionedDataset};
use hschain::hash::derive_seed;
use hschain::projector::{hash_component, HashProjector, Sketch};
use hschain::scoring::{score_ensemble, score_point_chain, ScoreRecord};
use hschain::streaming::StreamScorer;

fn project_points(points: &[SparsePoint], k: usize) -> Vec<Sketch> {
    let projector = HashProjector::new(k);
    points.iter().map(|p| projector.project(p)).collect()
}

fn fit_and_score(
    engine: &Engine,
    sketches: Vec<Sketch>,
    cfg: &RunConfig,
) -> (Arc<EnsembleModel>, Vec<ScoreRecord>) {
    let ds = PartitionedDataset::from_items(sketches, cfg.effective_partitions());
    let (model, _) = fit_ensemble(engine, &ds, cfg).unwrap();
    let model = Arc::new(model);
    let scores = score_ensemble(engine, &ds, &model).unwrap().into_items();
    (model, scores)
}

#[test]
fn acceptance_c01_oracle_equivalence() {
    let start = Instant::now();
    let n = 10_000;
    let cfg = RunConfig {
        projection_dims: 10,
        chains: 4,
        levels: 8,
        cms_rows: 10,
        cms_cols: 100_000,
        sample_rate: 1.0,
        contamination: None,
        run_seed: 101,
        threads: 2,
        partitions: 8,
    };
    let points = synthetic_points(n, 8, 2, 42);
    let sketches = project_points(&points, cfg.projection_dims);
    let engine = Engine::new(cfg.threads).unwrap();
    let ds = PartitionedDataset::from_items(sketches.clone(), cfg.partitions);
    let (model, _) = fit_ensemble(&engine, &ds, &cfg).unwrap();

    let mut bins_checked = 0u64;
    for chain in &model.chains {
        let mut oracle = ExactChain::from_chain(chain);
        oracle.fit(sketches.iter());
        // Verify the chosen width really is collision-free: every inserted
        // bin's count-min estimate equals the exact dictionary count.
        for level in 0..cfg.levels {
            for (bin, &exact_count) in oracle.level_bins(level) {
                let key = BinKey::encode(bin);
                assert_eq!(
                    chain.level_sketch(level).query(key.as_bytes()),
                    exact_count,
                    "collision at level {level}"
                );
                bins_checked += 1;
            }
        }
        for sketch in &sketches {
            let got = score_point_chain(sketch, chain);
            let want = oracle.score(sketch);
            assert_eq!(got.to_bits(), want.to_bits(), "sketch {}", sketch.id);
        }
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 30.0, "runtime {dt:.1}s exceeds 30s");
    println!(
        "[acceptance] C1 oracle-equivalence: PASS ({n} points x {} chains bitwise-equal, {bins_checked} bins collision-verified, {dt:.1}s)",
        cfg.chains
    );
}

#[test]
fn acceptance_c02_partition_and_scheduling_invariance() {
    let start = Instant::now();
    let n = 100_000;
    let points = synthetic_points(n, 8, 2, 7);
    let sketches = project_points(&points, 10);
    let run = |partitions: usize, threads: usize| -> Vec<f64> {
        let cfg = RunConfig {
            projection_dims: 10,
            chains: 8,
            levels: 10,
            cms_rows: 10,
            cms_cols: 100,
            sample_rate: 0.5,
            contamination: None,
            run_seed: 2024,
            threads,
            partitions,
        };
        let engine = Engine::new(threads).unwrap();
        let (_, scores) = fit_and_score(&engine, sketches.clone(), &cfg);
        scores.into_iter().map(|r| r.score).collect()
    };
    let reference = run(1, 1);
    let mut max_rel = 0.0f64;
    for &partitions in &[1usize, 4, 16] {
        for &threads in &[1usize, 8] {
            if (partitions, threads) == (1, 1) {
                continue;
            }
            let got = run(partitions, threads);
            assert_eq!(got.len(), reference.len());
            for (a, b) in got.iter().zip(&reference) {
                let rel = (a - b).abs() / b.abs().max(1.0);
                max_rel = max_rel.max(rel);
                assert!(rel <= 1e-9, "partitions={partitions} threads={threads}: {a} vs {b}");
            }
        }
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 120.0, "runtime {dt:.1}s exceeds 2min");
    println!(
        "[acceptance] C2 partition/scheduling-invariance: PASS ({n} points, partitions {{1,4,16}} x threads {{1,8}}, max rel diff {max_rel:.1e}, {dt:.1}s)"
    );
}

/// Randomized triple sequences assembling mixed-type points, with numeric
/// deltas split into parts, categorical substitution chains and
/// newly-arising features.
fn triple_sequences(n: usize, seed: u64) -> (Vec<SparsePoint>, Vec<UpdateTriple>) {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut per_point: Vec<Vec<UpdateTriple>> = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("s{i}");
        let mut triples = Vec::new();
        let mut real: HashMap<String, f64> = HashMap::new();
        let numeric_features = rng.random_range(1..5usize);
        for j in 0..numeric_features {
            // Some names are shared across points, some unique to this point
            // (never seen at fit time by most chains' sampled data).
            let name = if rng.random::<f64>() < 0.7 {
                format!("n{}", (i + j) % 25)
            } else {
                format!("fresh{i}_{j}")
            };
            let parts = rng.random_range(1..4usize);
            for _ in 0..parts {
                let delta = rng.random::<f64>() * 4.0 - 2.0;
                triples.push(UpdateTriple {
                    id: id.clone(),
                    feature: name.clone(),
                    op: UpdateOp::NumericDelta(delta),
                });
                *real.entry(name.clone()).or_insert(0.0) += delta;
            }
        }
        let mut cat: Vec<(Name, Name)> = Vec::new();
        for j in 0..rng.random_range(0..3usize) {
            let name = format!("c{j}");
            let hops = rng.random_range(1..4usize);
            let mut prev: Option<String> = None;
            let mut current = String::new();
            for h in 0..hops {
                current = format!("v{}", rng.random_range(0..9u32) + h as u32 * 10);
                triples.push(UpdateTriple {
                    id: id.clone(),
                    feature: name.clone(),
                    op: UpdateOp::Substitution { old: prev.clone(), new: current.clone() },
                });
                prev = Some(current.clone());
            }
            cat.push((Name::from(name), Name::from(current)));
        }
        let real_vec: Vec<(Name, f64)> = real
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(k, v)| (Name::from(k), v))
            .collect();
        points.push(SparsePoint::new(id, real_vec, cat).unwrap());
        per_point.push(triples);
    }
    // Interleave across points, preserving each point's own order.
    let mut cursors: Vec<usize> = vec![0; n];
    let mut pending: Vec<usize> = (0..n).collect();
    let mut interleaved = Vec::new();
    while !pending.is_empty() {
        pending.shuffle(&mut rng);
        let mut still = Vec::new();
        for &p in &pending {
            interleaved.push(per_point[p][cursors[p]].clone());
            cursors[p] += 1;
            if cursors[p] < per_point[p].len() {
                still.push(p);
            }
        }
        pending = still;
    }
    (points, interleaved)
}

#[test]
fn acceptance_c03_streaming_batch_equivalence() {
    let start = Instant::now();
    let n = 1000;
    let (points, triples) = triple_sequences(n, 33);
    let cfg = RunConfig {
        projection_dims: 12,
        chains: 8,
        levels: 8,
        cms_rows: 10,
        cms_cols: 100,
        sample_rate: 1.0,
        contamination: None,
        run_seed: 303,
        threads: 2,
        partitions: 4,
    };
    let sketches = project_points(&points, cfg.projection_dims);
    let engine = Engine::new(cfg.threads).unwrap();
    let ds = PartitionedDataset::from_items(sketches, cfg.partitions);
    let (model, _) = fit_ensemble(&engine, &ds, &cfg).unwrap();
    let model = Arc::new(model);
    let batch = score_ensemble(&engine, &ds, &model).unwrap().into_items();

    let mut scorer = StreamScorer::new(model, 2 * n);
    let mut last: HashMap<String, f64> = HashMap::new();
    for t in &triples {
        let r = scorer.process_update(t);
        last.insert(r.id, r.score);
    }
    let mut max_rel = 0.0f64;
    for r in &batch {
        let streamed = last[&r.id];
        let rel = (streamed - r.score).abs() / r.score.abs().max(1.0);
        max_rel = max_rel.max(rel);
        assert!(rel <= 1e-9, "id {}: stream {streamed} vs batch {}", r.id, r.score);
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 30.0, "runtime {dt:.1}s exceeds 30s");
    println!(
        "[acceptance] C3 streaming/batch-equivalence: PASS ({n} points, {} triples, max rel diff {max_rel:.1e}, {dt:.1}s)",
        triples.len()
    );
}

#[test]
fn acceptance_c04_hash_distribution() {
    let start = Instant::now();
    let n = 1_000_000usize;
    let strings: Vec<String> = (0..n)
        .map(|i| format!("{:x}{:x}", derive_seed(1, i as u64), derive_seed(2, i as u64)))
        .collect();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut counts = [0usize; 3];
        for s in &strings {
            match hash_component(seed, s) {
                1 => counts[0] += 1,
                -1 => counts[1] += 1,
                _ => counts[2] += 1,
            }
        }
        let freqs = [
            counts[0] as f64 / n as f64,
            counts[1] as f64 / n as f64,
            counts[2] as f64 / n as f64,
        ];
        let targets = [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0];
        for (f, t) in freqs.iter().zip(&targets) {
            let dev = (f - t).abs();
            worst = worst.max(dev);
            assert!(dev < 0.01, "seed {seed}: frequency {f} vs {t}");
        }
    }
    let dt = start.elapsed().as_secs_f64();
    println!(
        "[acceptance] C4 hash-distribution: PASS (1e6 strings x 50 seeds, worst deviation {worst:.5} < 0.01, {dt:.1}s)"
    );
}

#[test]
fn acceptance_c05_cms_overestimate() {
    let start = Instant::now();
    let mut collision_free_streams = 0usize;
    let mut colliding_streams = 0usize;
    for stream in 0..1000u64 {
        let rows = 1 + (derive_seed(40, stream) % 5) as usize;
        let cols = [16usize, 64, 256, 2048][(derive_seed(41, stream) % 4) as usize];
        let distinct = 1 + (derive_seed(42, stream) % 40) as usize;
        let inserts = 1 + (derive_seed(43, stream) % 200) as usize;
        let mut cms = CountMinSketch::new(rows, cols, derive_seed(44, stream));
        let mut exact: HashMap<i64, u64> = HashMap::new();
        for i in 0..inserts {
            let v = (derive_seed(45, stream * 1_000_003 + i as u64) % distinct as u64) as i64;
            cms.insert(&BinKey::encode(&[v, v * 7 - 3]));
            *exact.entry(v).or_insert(0) += 1;
        }
        let keys: Vec<BinKey> = exact.keys().map(|v| BinKey::encode(&[*v, *v * 7 - 3])).collect();
        let free = cms.collision_free(keys.iter());
        if free {
            collision_free_streams += 1;
        } else {
            colliding_streams += 1;
        }
        for (v, &count) in &exact {
            let key = BinKey::encode(&[*v, *v * 7 - 3]);
            let estimate = cms.query(key.as_bytes());
            assert!(estimate >= count, "undercount in stream {stream}");
            if free {
                assert_eq!(estimate, count, "inexact collision-free stream {stream}");
            }
        }
    }
    assert!(collision_free_streams > 100, "only {collision_free_streams} collision-free streams");
    assert!(colliding_streams > 100, "only {colliding_streams} colliding streams");
    let dt = start.elapsed().as_secs_f64();
    println!(
        "[acceptance] C5 cms-overestimate: PASS (1000 streams: {collision_free_streams} collision-free all-exact, {colliding_streams} colliding never-undercount, {dt:.1}s)"
    );
}

#[test]
fn acceptance_c06_gmm_benchmark_auroc() {
    let start = Instant::now();
    let (n, d) = (40_000usize, 500usize);
    let mut aurocs = Vec::new();
    for seed in 0..3u64 {
        let source_spec = bench::synth_source_spec(d, 5, derive_seed(600 + seed, 1));
        let (source, _) =
            bench::sample_gmm_benchmark(&source_spec, 3500, 0.0, 1.0, 1.0, derive_seed(600 + seed, 2))
                .unwrap();
        let source_rows: Vec<Vec<f64>> = source.into_iter().map(|(r, _)| r).collect();
        let spec = bench::fit_diag_gmm(&source_rows, 5, 20, derive_seed(600 + seed, 3)).unwrap();
        let (rows, _) =
            bench::sample_gmm_benchmark(&spec, n, 0.1, 0.10, 5.0, derive_seed(600 + seed, 4))
                .unwrap();
        let labels: Vec<bool> = rows.iter().map(|(_, l)| *l).collect();
        let points = bench::rows_to_points(&rows).unwrap();
        let cfg = RunConfig {
            projection_dims: 50,
            chains: 100,
            levels: 20,
            cms_rows: 10,
            cms_cols: 100,
            sample_rate: 0.1,
            contamination: None,
            run_seed: derive_seed(600 + seed, 5),
            threads: 2,
            partitions: 8,
        };
        let sketches = project_points(&points, cfg.projection_dims);
        drop(points);
        let engine = Engine::new(cfg.threads).unwrap();
        let (_, scores) = fit_and_score(&engine, sketches, &cfg);
        let outlierness: Vec<f64> = scores.iter().map(|r| r.outlierness()).collect();
        let auroc = bench::auroc(&outlierness, &labels).unwrap();
        aurocs.push(auroc);
    }
    let mean = aurocs.iter().sum::<f64>() / aurocs.len() as f64;
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 600.0, "runtime {dt:.1}s exceeds 10min");
    assert!(mean >= 0.75, "mean AUROC {mean:.3} below 0.75 (per-seed {aurocs:?})");
    println!(
        "[acceptance] C6 gmm-benchmark: PASS (n={n} d={d} K=50 M=100 L=20 rate=0.1, AUROC per seed {:?}, mean {mean:.3} >= 0.75, {dt:.0}s)",
        aurocs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
}

#[test]
fn acceptance_c07_grid_benchmark_auroc() {
    let start = Instant::now();
    let (n_inliers, n_outliers) = (1_000_000usize, 1000usize);
    let mut aurocs = Vec::new();
    for seed in 0..3u64 {
        let inliers =
            bench::clustered_inliers(n_inliers, 8, 50.0, 1.0, derive_seed(700 + seed, 1));
        let labeled = bench::inject_grid_outliers(
            &inliers,
            n_outliers,
            0.01,
            None,
            derive_seed(700 + seed, 2),
        )
        .unwrap();
        drop(inliers);
        let labels: Vec<bool> = labeled.iter().map(|(_, l)| *l).collect();
        let rows: Vec<(Vec<f64>, bool)> =
            labeled.iter().map(|((x, y), l)| (vec![*x, *y], *l)).collect();
        drop(labeled);
        let points = bench::rows_to_points(&rows).unwrap();
        drop(rows);
        // Low-d data wants a low-d projection: with K=3 the L=10 splitting
        // budget gives each component enough halvings to resolve clusters.
        let cfg = RunConfig {
            projection_dims: 3,
            chains: 10,
            levels: 10,
            cms_rows: 10,
            cms_cols: 100,
            sample_rate: 0.05,
            contamination: None,
            run_seed: derive_seed(700 + seed, 3),
            threads: 2,
            partitions: 8,
        };
        let sketches = project_points(&points, cfg.projection_dims);
        drop(points);
        let engine = Engine::new(cfg.threads).unwrap();
        let (_, scores) = fit_and_score(&engine, sketches, &cfg);
        let outlierness: Vec<f64> = scores.iter().map(|r| r.outlierness()).collect();
        aurocs.push(bench::auroc(&outlierness, &labels).unwrap());
    }
    let mean = aurocs.iter().sum::<f64>() / aurocs.len() as f64;
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 600.0, "runtime {dt:.1}s exceeds 10min");
    assert!(mean >= 0.90, "mean AUROC {mean:.3} below 0.90 (per-seed {aurocs:?})");
    println!(
        "[acceptance] C7 grid-benchmark: PASS (1e6 inliers + 1e3 injected, M=10 L=10, AUROC per seed {:?}, mean {mean:.3} >= 0.90, {dt:.0}s)",
        aurocs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
}

#[test]
fn acceptance_c08_linear_scaling() {
    let cfg = RunConfig {
        projection_dims: 10,
        chains: 8,
        levels: 10,
        cms_rows: 10,
        cms_cols: 100,
        sample_rate: 1.0,
        contamination: None,
        run_seed: 808,
        threads: 2,
        partitions: 8,
    };
    let pipeline = |points: &[SparsePoint]| -> f64 {
        let t = Instant::now();
        let engine = Engine::new(cfg.threads).unwrap();
        let sketches = project_points(points, cfg.projection_dims);
        let (_, scores) = fit_and_score(&engine, sketches, &cfg);
        assert_eq!(scores.len(), points.len());
        t.elapsed().as_secs_f64()
    };
    // Warm up allocator and thread pool before timing.
    let warmup = synthetic_points(20_000, 8, 0, 1);
    pipeline(&warmup);
    let mut times = Vec::new();
    for &n in &[100_000usize, 200_000, 400_000] {
        let points = synthetic_points(n, 8, 0, 88);
        times.push((n, pipeline(&points)));
    }
    let r1 = times[1].1 / times[0].1;
    let r2 = times[2].1 / times[1].1;
    assert!(r1 <= 2.5, "time(2n)/time(n) = {r1:.2} > 2.5 ({times:?})");
    assert!(r2 <= 2.5, "time(4n)/time(2n) = {r2:.2} > 2.5 ({times:?})");
    println!(
        "[acceptance] C8 linear-scaling: PASS (times {:?}s, doubling ratios {r1:.2} and {r2:.2} <= 2.5)",
        times.iter().map(|(n, t)| format!("n={n}:{t:.2}")).collect::<Vec<_>>()
    );
}

#[test]
fn acceptance_c09_shuffle_accounting() {
    let start = Instant::now();
    let settings = [(4usize, 5usize, 6usize, 2000usize), (8, 10, 4, 1000), (2, 3, 10, 3000)];
    let mut report = Vec::new();
    for &(chains, rows, levels, n) in &settings {
        let cfg = RunConfig {
            projection_dims: 6,
            chains,
            levels,
            cms_rows: rows,
            cms_cols: 64,
            sample_rate: 1.0,
            contamination: None,
            run_seed: 909,
            threads: 2,
            partitions: 4,
        };
        let points = synthetic_points(n, 5, 1, 9);
        let sketches = project_points(&points, cfg.projection_dims);
        let engine = Engine::new(cfg.threads).unwrap();
        let ds = PartitionedDataset::from_items(sketches, cfg.partitions);
        let (_, summary) = fit_ensemble(&engine, &ds, &cfg).unwrap();
        assert!(summary.sampled_per_chain.iter().all(|&s| s == n as u64));
        let metrics = engine.metrics();
        let pairs = metrics["fit.cms.reduce"].pre_combine_pairs;
        let expected = (chains * rows * levels * n) as u64;
        assert_eq!(pairs, expected, "M={chains} r={rows} L={levels} n={n}");
        // Post-combine exchange is bounded by the CMS size per partition.
        let post = metrics["fit.cms.reduce"].post_combine_records;
        let bound = (chains * levels * cfg.partitions * rows * cfg.cms_cols) as u64;
        assert!(post <= bound);
        report.push(format!("M={chains},r={rows},L={levels},n={n}:{pairs}"));
    }
    let dt = start.elapsed().as_secs_f64();
    println!(
        "[acceptance] C9 shuffle-accounting: PASS (pre-combine pairs exactly MrLn for {}; {dt:.1}s)",
        report.join(" ")
    );
}

#[test]
fn acceptance_c10_constant_time_streaming() {
    let start = Instant::now();
    // Fixed (K, r, L, M, N); updates to an id space much larger than the
    // cache so evictions happen at a steady rate.
    let cfg = RunConfig {
        projection_dims: 8,
        chains: 4,
        levels: 8,
        cms_rows: 5,
        cms_cols: 64,
        sample_rate: 1.0,
        contamination: None,
        run_seed: 1010,
        threads: 2,
        partitions: 4,
    };
    let points = synthetic_points(5000, 6, 1, 55);
    let sketches = project_points(&points, cfg.projection_dims);
    let engine = Engine::new(cfg.threads).unwrap();
    let ds = PartitionedDataset::from_items(sketches, cfg.partitions);
    let (model, _) = fit_ensemble(&engine, &ds, &cfg).unwrap();
    let mut scorer = StreamScorer::new(Arc::new(model), 1000);

    let total = 1_000_000usize;
    let window = 100_000usize;
    let triples: Vec<UpdateTriple> = (0..total)
        .map(|i| {
            let h = derive_seed(10_000, i as u64);
            let id = format!("u{}", h % 5000);
            if h % 10 == 0 {
                UpdateTriple {
                    id,
                    feature: "tag".into(),
                    op: UpdateOp::Substitution { old: None, new: format!("t{}", h % 7) },
                }
            } else {
                UpdateTriple {
                    id,
                    feature: format!("n{}", h % 6),
                    op: UpdateOp::NumericDelta((h % 100) as f64 / 25.0 - 2.0),
                }
            }
        })
        .collect();

    let mut window_times = Vec::new();
    for chunk in triples.chunks(window) {
        let t = Instant::now();
        for triple in chunk {
            std::hint::black_box(scorer.process_update(triple));
        }
        window_times.push(t.elapsed().as_secs_f64());
    }
    let first = window_times[0] / window as f64;
    let last = *window_times.last().unwrap() / window as f64;
    let ratio = last / first;
    let dt = start.elapsed().as_secs_f64();
    assert!(
        ratio <= 2.0,
        "mean latency over updates 9e5..1e6 is {ratio:.2}x the first 1e5 window"
    );
    println!(
        "[acceptance] C10 constant-time-streaming: PASS (1e6 updates, first-window {:.2}us/update, last-window {:.2}us/update, ratio {ratio:.2} <= 2, {dt:.0}s)",
        first * 1e6,
        last * 1e6
    );
}

// Smoke-check that the parsed paper-format examples drive the streaming path
// end to end (ties C3's machinery to the text format).
#[test]
fn acceptance_update_format_examples() {
    let t = parse_update("u1,URL,+3").unwrap();
    assert_eq!(t.op, UpdateOp::NumericDelta(3.0));
    let t = parse_update("u2,loc,NYC:Austin").unwrap();
    assert_eq!(
        t.op,
        UpdateOp::Substitution { old: Some("NYC".into()), new: "Austin".into() }
    );
    let t = parse_update("u3,color,:red").unwrap();
    assert_eq!(t.op, UpdateOp::Substitution { old: None, new: "red".into() });
}
