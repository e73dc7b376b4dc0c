//! Outlier scores from fitted chains: per level the count-min estimate of the
//! point's bin count is extrapolated by 2^l (levels run 1..L) to make counts
//! comparable across levels; the smallest extrapolated count is the chain's
//! score and the ensemble averages over chains. Lower score = more outlying.

use std::io::Write;
use std::sync::Arc;

use crate::chain::{EnsembleModel, HalfSpaceChain};
use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};
use crate::projector::Sketch;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub id: String,
    /// Extrapolated min-count averaged over chains; >= 0, lower = more
    /// outlying.
    pub score: f64,
    /// Predicted outlier flag, set when a contamination ranking was applied.
    pub label: Option<bool>,
}

impl ScoreRecord {
    /// Orientation consumed by ranking metrics: higher = more outlying.
    pub fn outlierness(&self) -> f64 {
        -self.score
    }
}

/// Score one sketch against one fitted chain: min over levels of
/// 2^l * query(bin id at level l). A zero count short-circuits to 0 (the
/// point is maximally outlying; no smoothing is added).
pub fn score_point_chain(sketch: &Sketch, chain: &HalfSpaceChain) -> f64 {
    let mut best = f64::INFINITY;
    let mut done = false;
    chain.walk_levels(sketch, |level, key| {
        if done {
            return;
        }
        let count = chain.level_sketch(level).query(key);
        if count == 0 {
            best = 0.0;
            done = true;
            return;
        }
        let extrapolated = (2.0f64).powi(level as i32 + 1) * count as f64;
        if extrapolated < best {
            best = extrapolated;
        }
    });
    best
}

/// Ensemble score for every sketch. The model is passed to workers once as a
/// broadcast; scoring never mutates it, so repeated runs are identical and
/// the result is independent of partitioning and thread count.
pub fn score_ensemble(
    engine: &Engine,
    data: &PartitionedDataset<Sketch>,
    model: &Arc<EnsembleModel>,
) -> Result<PartitionedDataset<ScoreRecord>> {
    let bc = engine.broadcast(Arc::clone(model));
    let k = model.projection_dims;
    engine.try_map(data, "score", move |sketch| {
        if sketch.values.len() != k {
            return Err(format!(
                "sketch {} has length {}, model expects {}",
                sketch.id,
                sketch.values.len(),
                k
            ));
        }
        let model = bc.value();
        let sum: f64 = model.chains.iter().map(|c| score_point_chain(sketch, c)).sum();
        Ok(ScoreRecord {
            id: sketch.id.clone(),
            score: sum / model.chains.len() as f64,
            label: None,
        })
    })
}

/// Label the ceil(contamination * n) lowest-scoring records as outliers.
/// Ties break by id order, so the labeling is deterministic.
pub fn rank_and_label(records: &[ScoreRecord], contamination: f64) -> Result<Vec<bool>> {
    if !(contamination > 0.0 && contamination < 1.0) {
        return Err(Error::Config("contamination must be in (0, 1)".into()));
    }
    let n = records.len();
    let flagged = (contamination * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .score
            .total_cmp(&records[b].score)
            .then_with(|| records[a].id.cmp(&records[b].id))
    });
    let mut labels = vec![false; n];
    for &i in order.iter().take(flagged) {
        labels[i] = true;
    }
    Ok(labels)
}

/// TSV output: `id<TAB>score<TAB>outlierness`, one row per record in input
/// order, plus a label column when predictions are given.
pub fn write_scores_tsv<'a>(
    mut w: impl Write,
    records: impl IntoIterator<Item = &'a ScoreRecord>,
) -> std::io::Result<()> {
    let mut wrote_header = false;
    for r in records {
        if !wrote_header {
            writeln!(w, "{}", tsv_header(r.label.is_some()))?;
            wrote_header = true;
        }
        writeln!(w, "{}", tsv_line(r))?;
    }
    if !wrote_header {
        writeln!(w, "{}", tsv_header(false))?;
    }
    Ok(())
}

pub fn tsv_header(with_label: bool) -> &'static str {
    if with_label {
        "id\tscore\toutlierness\tlabel"
    } else {
        "id\tscore\toutlierness"
    }
}

pub fn tsv_line(r: &ScoreRecord) -> String {
    match r.label {
        Some(l) => format!("{}\t{}\t{}\t{}", r.id, r.score, r.outlierness(), l as u8),
        None => format!("{}\t{}\t{}", r.id, r.score, r.outlierness()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cms::CountMinSketch;
    use crate::config::RunConfig;

    fn sketch(id: &str, values: &[f64]) -> Sketch {
        Sketch { id: id.into(), values: values.to_vec() }
    }

    /// Chain whose every counter at level l holds `counts[l]`, so any point
    /// queries exactly `counts[l]` there.
    fn chain_with_uniform_counts(counts: &[u64]) -> HalfSpaceChain {
        let deltas = Arc::new(vec![1.0]);
        let sketches = counts
            .iter()
            .map(|&c| {
                let rows = 2;
                let cols = 4;
                CountMinSketch::with_parts(rows, cols, vec![1, 2], vec![c; rows * cols]).unwrap()
            })
            .collect();
        HalfSpaceChain::with_parts(deltas, vec![0; counts.len()], vec![0.5; counts.len()], sketches)
            .unwrap()
    }

    #[test]
    fn singleton_bins_score_two() {
        let chain = chain_with_uniform_counts(&[1, 1, 1]);
        assert_eq!(score_point_chain(&sketch("p", &[0.0]), &chain), 2.0);
    }

    #[test]
    fn pinned_extrapolation_example() {
        // Per-level counts (4, 1, 1): min(2*4, 4*1, 8*1) = 4.
        let chain = chain_with_uniform_counts(&[4, 1, 1]);
        assert_eq!(score_point_chain(&sketch("p", &[0.0]), &chain), 4.0);
    }

    #[test]
    fn zero_count_scores_zero() {
        let chain = chain_with_uniform_counts(&[5, 0, 7]);
        assert_eq!(score_point_chain(&sketch("p", &[0.0]), &chain), 0.0);
    }

    #[test]
    fn identical_points_collision_free_single_level() {
        let e = Engine::new(2).unwrap();
        let items: Vec<Sketch> = (0..8).map(|i| sketch(&i.to_string(), &[3.0])).collect();
        let ds = PartitionedDataset::from_items(items, 2);
        let cfg = RunConfig {
            projection_dims: 1,
            chains: 1,
            levels: 1,
            cms_rows: 4,
            cms_cols: 4096,
            sample_rate: 1.0,
            contamination: None,
            run_seed: 5,
            threads: 2,
            partitions: 2,
        };
        let (model, _) = crate::chain::fit_ensemble(&e, &ds, &cfg).unwrap();
        let model = Arc::new(model);
        let scores = score_ensemble(&e, &ds, &model).unwrap();
        for r in scores.iter() {
            assert_eq!(r.score, 16.0);
        }
    }

    #[test]
    fn ensemble_averages_chains() {
        let a = chain_with_uniform_counts(&[1]); // score 2
        let b = chain_with_uniform_counts(&[3]); // score 6
        let model = EnsembleModel {
            projection_dims: 1,
            levels: 1,
            cms_rows: 2,
            cms_cols: 4,
            run_seed: 0,
            sample_rate: 1.0,
            projector_seeds: vec![0],
            deltas: Arc::new(vec![1.0]),
            chains: vec![a.clone(), b],
        };
        let e = Engine::new(1).unwrap();
        let ds = PartitionedDataset::from_items(vec![sketch("p", &[0.0])], 1);
        let single = EnsembleModel { chains: vec![a], ..model.clone() };
        let one = score_ensemble(&e, &ds, &Arc::new(single)).unwrap();
        assert_eq!(one.iter().next().unwrap().score, 2.0);
        let two = score_ensemble(&e, &ds, &Arc::new(model)).unwrap();
        assert_eq!(two.iter().next().unwrap().score, (2.0 + 6.0) / 2.0);
    }

    #[test]
    fn wrong_sketch_length_errors() {
        let model = EnsembleModel {
            projection_dims: 2,
            levels: 1,
            cms_rows: 2,
            cms_cols: 4,
            run_seed: 0,
            sample_rate: 1.0,
            projector_seeds: vec![0, 1],
            deltas: Arc::new(vec![1.0, 1.0]),
            chains: vec![chain_with_uniform_counts(&[1])],
        };
        let e = Engine::new(1).unwrap();
        let ds = PartitionedDataset::from_items(vec![sketch("p", &[0.0])], 1);
        assert!(matches!(
            score_ensemble(&e, &ds, &Arc::new(model)),
            Err(Error::Stage { .. })
        ));
    }

    #[test]
    fn rank_and_label_examples() {
        let recs: Vec<ScoreRecord> = [2.0, 4.0, 6.0, 8.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| ScoreRecord { id: i.to_string(), score: s, label: None })
            .collect();
        let labels = rank_and_label(&recs, 0.5).unwrap();
        assert_eq!(labels, vec![true, true, false, false]);
        // Ceiling guarantees at least one outlier for any valid contamination.
        let labels = rank_and_label(&recs, 0.01).unwrap();
        assert_eq!(labels.iter().filter(|l| **l).count(), 1);
        assert!(rank_and_label(&recs, 0.0).is_err());
    }

    #[test]
    fn rank_and_label_permutation_invariant_set() {
        let mut recs: Vec<ScoreRecord> = (0..20)
            .map(|i| ScoreRecord { id: format!("p{i}"), score: ((i * 7) % 13) as f64, label: None })
            .collect();
        let labels = rank_and_label(&recs, 0.3).unwrap();
        let set: std::collections::HashSet<String> = recs
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l)
            .map(|(r, _)| r.id.clone())
            .collect();
        recs.reverse();
        let labels2 = rank_and_label(&recs, 0.3).unwrap();
        let set2: std::collections::HashSet<String> = recs
            .iter()
            .zip(&labels2)
            .filter(|(_, l)| **l)
            .map(|(r, _)| r.id.clone())
            .collect();
        assert_eq!(set, set2);
    }

    #[test]
    fn tsv_shape() {
        let mut buf = Vec::new();
        write_scores_tsv(&mut buf, &[] as &[ScoreRecord]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "id\tscore\toutlierness\n");
        let mut buf = Vec::new();
        let r = ScoreRecord { id: "a".into(), score: 2.5, label: Some(true) };
        write_scores_tsv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "id\tscore\toutlierness\tlabel\na\t2.5\t-2.5\t1\n");
    }
}
