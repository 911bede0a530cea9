//! Hierarchical agglomeration of fragments over a region adjacency graph.
//!
//! Initial edge scores are discretized into `k` bins, so the cheapest edge
//! can be found with a bucket queue and merged-edge scores are quantiles of
//! small histograms. When a merge makes two edges to a common neighbor
//! coincide, the two histograms are summed into one edge, which is marked
//! stale, and the other edge is marked deleted. Stale edges are rescored
//! only when popped. This is sound because a merged score is never below the
//! smaller of its parts, so a stale edge always sits at or below its true bin.
//!
//! Queue order is `(bin, edge index)`, which makes the lazy bucket queue and
//! the eager binary-heap baseline ([`naive_agglomerate`]) produce identical
//! histories.

pub mod histogram;
pub mod rag;
mod queue;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{Read, Write};
use std::mem;
use std::path::Path;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub use histogram::{bin_of, merge_score, Bins, MergeFunction, ScoreHistogram, DEFAULT_BINS};
pub use rag::{build_rag, Rag, RagEdge, RagNode};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;
use queue::BucketQueue;

/// One contraction: `absorbed` joined `survivor` at `score`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub survivor: u64,
    pub absorbed: u64,
    pub score: f64,
}

/// Merges in the order they happened; scores never decrease.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergeHistory {
    merges: Vec<Merge>,
}

impl MergeHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_merges(merges: Vec<Merge>) -> Result<Self> {
        let mut history = MergeHistory::new();
        for m in merges {
            history.push(m)?;
        }
        Ok(history)
    }

    pub fn push(&mut self, merge: Merge) -> Result<()> {
        if let Some(last) = self.merges.last() {
            if merge.score < last.score {
                return Err(Error::NonMonotoneHistory { previous: last.score, current: merge.score });
            }
        }
        self.merges.push(merge);
        Ok(())
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// CSV with header `survivor,absorbed,score`, scores to 6 decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let wrap = |e: csv::Error| Error::History(e.to_string());
        out.write_record(["survivor", "absorbed", "score"]).map_err(wrap)?;
        for m in &self.merges {
            out.write_record([m.survivor.to_string(), m.absorbed.to_string(), format!("{:.6}", m.score)])
                .map_err(wrap)?;
        }
        out.flush().map_err(|e| Error::History(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let headers = input.headers().map_err(|e| Error::History(e.to_string()))?;
        if headers != vec!["survivor", "absorbed", "score"] {
            return Err(Error::History(format!("unexpected header {headers:?}")));
        }
        let mut merges = Vec::new();
        for record in input.deserialize::<Merge>() {
            merges.push(record.map_err(|e| Error::History(e.to_string()))?);
        }
        Self::from_merges(merges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EdgeState {
    Clean,
    Stale,
    Deleted,
}

struct WorkEdge {
    ends: [u32; 2],
    histogram: ScoreHistogram,
    state: EdgeState,
    /// Bin of the edge's live queue entry (a lower bound while stale).
    key: u32,
    generation: u32,
}

/// Neighbor slot to edge. Short lists are scanned inline; long ones are
/// hashed.
enum Adjacency {
    Inline(SmallVec<[(u32, u32); 6]>),
    Hashed(FxHashMap<u32, u32>),
}

const INLINE_DEGREE: usize = 16;

impl Default for Adjacency {
    fn default() -> Self {
        Adjacency::Inline(SmallVec::new())
    }
}

impl Adjacency {
    fn len(&self) -> usize {
        match self {
            Adjacency::Inline(v) => v.len(),
            Adjacency::Hashed(m) => m.len(),
        }
    }

    fn get(&self, neighbor: u32) -> Option<u32> {
        match self {
            Adjacency::Inline(v) => v.iter().find(|&&(n, _)| n == neighbor).map(|&(_, e)| e),
            Adjacency::Hashed(m) => m.get(&neighbor).copied(),
        }
    }

    fn insert(&mut self, neighbor: u32, edge: u32) {
        match self {
            Adjacency::Inline(v) => {
                if let Some(entry) = v.iter_mut().find(|(n, _)| *n == neighbor) {
                    entry.1 = edge;
                } else if v.len() < INLINE_DEGREE {
                    v.push((neighbor, edge));
                } else {
                    let mut m: FxHashMap<u32, u32> = v.drain(..).collect();
                    m.insert(neighbor, edge);
                    *self = Adjacency::Hashed(m);
                }
            }
            Adjacency::Hashed(m) => {
                m.insert(neighbor, edge);
            }
        }
    }

    fn remove(&mut self, neighbor: u32) {
        match self {
            Adjacency::Inline(v) => {
                if let Some(i) = v.iter().position(|&(n, _)| n == neighbor) {
                    v.swap_remove(i);
                }
            }
            Adjacency::Hashed(m) => {
                m.remove(&neighbor);
            }
        }
    }

    fn into_entries(self) -> SmallVec<[(u32, u32); 6]> {
        match self {
            Adjacency::Inline(v) => v,
            Adjacency::Hashed(m) => m.into_iter().collect(),
        }
    }
}

struct Slot {
    label: u64,
    size: u64,
    adjacency: Adjacency,
}

/// Mutable graph shared by both agglomeration strategies.
struct Contraction {
    slots: Vec<Slot>,
    edges: Vec<WorkEdge>,
}

impl Contraction {
    fn new(rag: &Rag, function: MergeFunction) -> Result<Self> {
        let mut slots: Vec<Slot> = rag
            .nodes()
            .iter()
            .map(|n| Slot { label: n.label, size: n.size, adjacency: Adjacency::default() })
            .collect();
        let mut edges = Vec::with_capacity(rag.edges().len());
        for (i, e) in rag.edges().iter().enumerate() {
            slots[e.a as usize].adjacency.insert(e.b, i as u32);
            slots[e.b as usize].adjacency.insert(e.a, i as u32);
            edges.push(WorkEdge {
                ends: [e.a, e.b],
                key: merge_score(&e.histogram, function)?,
                histogram: e.histogram.clone(),
                state: EdgeState::Clean,
                generation: 0,
            });
        }
        Ok(Contraction { slots, edges })
    }

    /// Contracts `edge`. Returns `(survivor, absorbed)` labels and appends
    /// `(kept, deleted)` for each pair of edges fused by the merge.
    fn contract(&mut self, edge: u32, fused: &mut Vec<(u32, u32)>) -> (u64, u64) {
        let [p, q] = self.edges[edge as usize].ends;
        self.edges[edge as usize].state = EdgeState::Deleted;
        let (sp, sq) = (&self.slots[p as usize], &self.slots[q as usize]);
        let p_survives = sp.size > sq.size || (sp.size == sq.size && sp.label < sq.label);
        let (survivor, absorbed) = if p_survives { (sp.label, sq.label) } else { (sq.label, sp.label) };
        let size = sp.size + sq.size;

        // the slot with the larger adjacency carries on, whichever label wins
        let (keep, gone) = if sp.adjacency.len() >= sq.adjacency.len() { (p, q) } else { (q, p) };
        let gone_adjacency = mem::take(&mut self.slots[gone as usize].adjacency);
        self.slots[keep as usize].adjacency.remove(gone);
        for (neighbor, e) in gone_adjacency.into_entries() {
            if neighbor == keep {
                continue;
            }
            self.slots[neighbor as usize].adjacency.remove(gone);
            match self.slots[keep as usize].adjacency.get(neighbor) {
                Some(other) => {
                    let (kept, deleted) = (e.min(other), e.max(other));
                    let histogram = mem::take(&mut self.edges[deleted as usize].histogram);
                    self.edges[deleted as usize].state = EdgeState::Deleted;
                    let k = &mut self.edges[kept as usize];
                    k.histogram.absorb(&histogram);
                    k.state = EdgeState::Stale;
                    k.ends = [keep, neighbor];
                    self.slots[keep as usize].adjacency.insert(neighbor, kept);
                    self.slots[neighbor as usize].adjacency.insert(keep, kept);
                    fused.push((kept, deleted));
                }
                None => {
                    self.edges[e as usize].ends = [keep, neighbor];
                    self.slots[keep as usize].adjacency.insert(neighbor, e);
                    self.slots[neighbor as usize].adjacency.insert(keep, e);
                }
            }
        }
        let slot = &mut self.slots[keep as usize];
        slot.label = survivor;
        slot.size = size;
        (survivor, absorbed)
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

/// Linear-time agglomeration with a bucket queue and lazy rescoring. Merges
/// until the cheapest edge's score (its bin centre) reaches `threshold`.
pub fn agglomerate(rag: &Rag, function: MergeFunction, threshold: f64) -> Result<MergeHistory> {
    check_threshold(threshold)?;
    let bins = rag.bins();
    let mut graph = Contraction::new(rag, function)?;
    let mut queue = BucketQueue::new(bins.count());
    for (i, e) in graph.edges.iter().enumerate() {
        queue.push(e.key, i as u32, 0);
    }

    let mut history = MergeHistory::new();
    let mut fused = Vec::new();
    while let Some((bin, e, generation)) = queue.pop() {
        let edge = &mut graph.edges[e as usize];
        if edge.state == EdgeState::Deleted || edge.generation != generation {
            continue;
        }
        if edge.state == EdgeState::Stale {
            let score = merge_score(&edge.histogram, function)?;
            debug_assert!(score >= bin, "stale edge rescored from bin {bin} down to {score}");
            edge.state = EdgeState::Clean;
            edge.key = score;
            edge.generation += 1;
            queue.push(score, e, edge.generation);
            continue;
        }
        let score = bins.value(bin);
        if score >= threshold {
            break;
        }
        let (survivor, absorbed) = graph.contract(e, &mut fused);
        history.push(Merge { survivor, absorbed, score })?;
        for (kept, deleted) in fused.drain(..) {
            let lower = graph.edges[deleted as usize].key;
            let k = &mut graph.edges[kept as usize];
            if lower < k.key {
                k.key = lower;
                k.generation += 1;
                queue.push(lower, kept, k.generation);
            }
        }
    }
    Ok(history)
}

/// Baseline with a binary heap and eager rescoring of fused edges.
pub fn naive_agglomerate(rag: &Rag, function: MergeFunction, threshold: f64) -> Result<MergeHistory> {
    check_threshold(threshold)?;
    let bins = rag.bins();
    let mut graph = Contraction::new(rag, function)?;
    let mut heap: BinaryHeap<Reverse<(u32, u32, u32)>> =
        graph.edges.iter().enumerate().map(|(i, e)| Reverse((e.key, i as u32, 0))).collect();

    let mut history = MergeHistory::new();
    let mut fused = Vec::new();
    while let Some(Reverse((bin, e, generation))) = heap.pop() {
        let edge = &graph.edges[e as usize];
        if edge.state == EdgeState::Deleted || edge.generation != generation {
            continue;
        }
        let score = bins.value(bin);
        if score >= threshold {
            break;
        }
        let (survivor, absorbed) = graph.contract(e, &mut fused);
        history.push(Merge { survivor, absorbed, score })?;
        for (kept, _) in fused.drain(..) {
            let k = &mut graph.edges[kept as usize];
            k.key = merge_score(&k.histogram, function)?;
            k.state = EdgeState::Clean;
            k.generation += 1;
            heap.push(Reverse((k.key, kept, k.generation)));
        }
    }
    Ok(history)
}

/// Maps every label touched by a merge scored below `threshold` to its
/// representative (the last surviving label of its component).
pub fn replay(history: &MergeHistory, threshold: f64) -> FxHashMap<u64, u64> {
    let mut parent: FxHashMap<u64, u64> = FxHashMap::default();
    fn find(parent: &mut FxHashMap<u64, u64>, mut x: u64) -> u64 {
        let mut path = Vec::new();
        while let Some(&p) = parent.get(&x) {
            if p == x {
                break;
            }
            path.push(x);
            x = p;
        }
        for node in path {
            parent.insert(node, x);
        }
        x
    }
    for m in history.merges().iter().take_while(|m| m.score < threshold) {
        let (s, a) = (find(&mut parent, m.survivor), find(&mut parent, m.absorbed));
        if s != a {
            parent.insert(a, s);
            parent.entry(s).or_insert(s);
        }
    }
    let keys: Vec<u64> = parent.keys().copied().collect();
    keys.into_iter().map(|k| (k, find(&mut parent, k))).collect()
}

/// Relabels fragments after replaying every merge scored below `threshold`.
pub fn extract_segmentation(fragments: &LabelVolume, history: &MergeHistory, threshold: f64) -> LabelVolume {
    let map = replay(history, threshold);
    let data = fragments
        .data()
        .iter()
        .map(|&l| if l == 0 { 0 } else { map.get(&l).copied().unwrap_or(l) })
        .collect();
    LabelVolume::new(fragments.shape(), data).expect("same shape")
}
