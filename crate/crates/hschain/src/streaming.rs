//! Streaming front-end: apply delta updates to cached sketches and return the
//! updated outlier score against a frozen model, in constant time per update.
//!
//! A size-N LRU cache holds the sketches of recently updated ids (O(NK)
//! space). A cache miss starts from the zero sketch, including for ids whose
//! entry was evicted earlier; the constant-space contract forbids unbounded
//! state, so scores for evicted ids drift until their features are replayed.
//! Incoming updates never touch the fitted counts.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::chain::EnsembleModel;
use crate::data::parse_update;
use crate::data::UpdateTriple;
use crate::error::Result;
use crate::projector::{HashProjector, Sketch};
use crate::scoring::{score_point_chain, tsv_header, tsv_line, ScoreRecord};

/// Fixed-capacity LRU map from point id to sketch. Doubly-linked list over an
/// arena; get/insert/evict are O(1).
pub struct SketchCache {
    capacity: usize,
    map: HashMap<String, usize>,
    nodes: Vec<Node>,
    head: usize, // most recently used
    tail: usize, // least recently used
    free: Vec<usize>,
}

struct Node {
    id: String,
    sketch: Sketch,
    prev: usize,
    next: usize,
}

const NIL: usize = usize::MAX;

impl SketchCache {
    pub fn new(capacity: usize) -> SketchCache {
        assert!(capacity >= 1, "cache capacity must be >= 1");
        SketchCache {
            capacity,
            map: HashMap::with_capacity(capacity),
            nodes: Vec::with_capacity(capacity),
            head: NIL,
            tail: NIL,
            free: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn contains(&self, id: &str) -> bool {
        self.map.contains_key(id)
    }

    fn unlink(&mut self, i: usize) {
        let (prev, next) = (self.nodes[i].prev, self.nodes[i].next);
        if prev != NIL {
            self.nodes[prev].next = next;
        } else {
            self.head = next;
        }
        if next != NIL {
            self.nodes[next].prev = prev;
        } else {
            self.tail = prev;
        }
    }

    fn push_front(&mut self, i: usize) {
        self.nodes[i].prev = NIL;
        self.nodes[i].next = self.head;
        if self.head != NIL {
            self.nodes[self.head].prev = i;
        }
        self.head = i;
        if self.tail == NIL {
            self.tail = i;
        }
    }

    /// Fetch the id's sketch, refreshing its recency; on a miss insert a zero
    /// sketch of length `k`, evicting the least recently used entry if full.
    pub fn fetch_or_zero(&mut self, id: &str, k: usize) -> &mut Sketch {
        if let Some(&i) = self.map.get(id) {
            self.unlink(i);
            self.push_front(i);
            return &mut self.nodes[i].sketch;
        }
        if self.map.len() == self.capacity {
            let lru = self.tail;
            self.unlink(lru);
            let old = std::mem::take(&mut self.nodes[lru].id);
            self.map.remove(&old);
            self.free.push(lru);
        }
        let node = Node {
            id: id.to_string(),
            sketch: Sketch::zero(id, k),
            prev: NIL,
            next: NIL,
        };
        let i = match self.free.pop() {
            Some(slot) => {
                self.nodes[slot] = node;
                slot
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        };
        self.map.insert(id.to_string(), i);
        self.push_front(i);
        &mut self.nodes[i].sketch
    }

    /// Ids from most to least recently used (test hook).
    pub fn ids_by_recency(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.map.len());
        let mut i = self.head;
        while i != NIL {
            out.push(self.nodes[i].id.clone());
            i = self.nodes[i].next;
        }
        out
    }
}

/// Single-threaded update loop state: frozen model, projector and LRU cache.
pub struct StreamScorer {
    model: Arc<EnsembleModel>,
    projector: HashProjector,
    cache: SketchCache,
}

impl StreamScorer {
    pub fn new(model: Arc<EnsembleModel>, cache_size: usize) -> StreamScorer {
        let projector = HashProjector::with_seeds(model.projector_seeds.clone());
        StreamScorer { model, projector, cache: SketchCache::new(cache_size) }
    }

    pub fn cache(&self) -> &SketchCache {
        &self.cache
    }

    /// Apply one triple to the id's cached sketch (zero on miss) and re-score
    /// against the frozen model: O(K) for the sketch update, O(KrLM) for the
    /// score.
    pub fn process_update(&mut self, triple: &UpdateTriple) -> ScoreRecord {
        let k = self.model.projection_dims;
        let sketch = self.cache.fetch_or_zero(&triple.id, k);
        self.projector.update_sketch(sketch, triple);
        let sum: f64 = self.model.chains.iter().map(|c| score_point_chain(sketch, c)).sum();
        ScoreRecord {
            id: triple.id.clone(),
            score: sum / self.model.chains.len() as f64,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct StreamStats {
    pub processed: u64,
    pub failed: u64,
}

/// Read triples line by line, write one TSV record per valid line in input
/// order. Parse failures are reported to `errors` and the stream continues.
pub fn run_stream(
    model: Arc<EnsembleModel>,
    cache_size: usize,
    input: impl BufRead,
    mut output: impl Write,
    mut errors: impl Write,
) -> Result<StreamStats> {
    let mut scorer = StreamScorer::new(model, cache_size);
    let mut stats = StreamStats { processed: 0, failed: 0 };
    writeln!(output, "{}", tsv_header(false)).map_err(|e| crate::Error::io("<stream>", e))?;
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| crate::Error::io("<stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_update(&line) {
            Ok(triple) => {
                let record = scorer.process_update(&triple);
                writeln!(output, "{}", tsv_line(&record))
                    .map_err(|e| crate::Error::io("<stream>", e))?;
                stats.processed += 1;
            }
            Err(e) => {
                writeln!(errors, "line {}: {e}", lineno + 1)
                    .map_err(|e| crate::Error::io("<stream>", e))?;
                stats.failed += 1;
            }
        }
    }
    Ok(stats)
}
