use rustc_hash::FxHashMap;

use super::histogram::{Bins, ScoreHistogram};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{AffinityVolume, LabelVolume};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RagNode {
    pub label: u64,
    /// Voxel count.
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RagEdge {
    /// Node indices, `a < b`.
    pub a: u32,
    pub b: u32,
    pub histogram: ScoreHistogram,
}

/// Region adjacency graph over fragments. Nodes are ordered by label and
/// edges by their endpoint labels; an edge's index is its identity during
/// agglomeration and breaks ties between equal scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Rag {
    bins: Bins,
    nodes: Vec<RagNode>,
    edges: Vec<RagEdge>,
}

impl Rag {
    /// Builds a graph from explicit nodes `(label, size)` and edges
    /// `(label, label, initial score)`.
    pub fn from_parts(nodes: &[(u64, u64)], edges: &[(u64, u64, f64)], bins: Bins) -> Result<Rag> {
        let mut nodes: Vec<RagNode> = nodes.iter().map(|&(label, size)| RagNode { label, size }).collect();
        nodes.sort_unstable_by_key(|n| n.label);
        if nodes.windows(2).any(|w| w[0].label == w[1].label) {
            return Err(Error::Config("duplicate node label in RAG".into()));
        }
        let index: FxHashMap<u64, u32> = nodes.iter().enumerate().map(|(i, n)| (n.label, i as u32)).collect();
        let mut keyed = Vec::with_capacity(edges.len());
        for &(u, v, score) in edges {
            let (Some(&a), Some(&b)) = (index.get(&u), index.get(&v)) else {
                return Err(Error::Config(format!("RAG edge ({u}, {v}) references an unknown node")));
            };
            if a == b {
                return Err(Error::Config(format!("RAG edge ({u}, {v}) is a self-loop")));
            }
            keyed.push((a.min(b), a.max(b), bins.bin_of(score)?));
        }
        keyed.sort_unstable();
        if keyed.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::Config("duplicate RAG edge".into()));
        }
        let edges = keyed
            .into_iter()
            .map(|(a, b, bin)| RagEdge { a, b, histogram: ScoreHistogram::single(bin) })
            .collect();
        Ok(Rag { bins, nodes, edges })
    }

    pub fn bins(&self) -> Bins {
        self.bins
    }

    pub fn nodes(&self) -> &[RagNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RagEdge] {
        &self.edges
    }

    /// Endpoint labels of an edge.
    pub fn edge_labels(&self, edge: usize) -> (u64, u64) {
        let e = &self.edges[edge];
        (self.nodes[e.a as usize].label, self.nodes[e.b as usize].label)
    }
}

/// One edge per pair of distinct nonzero fragments sharing at least one grid
/// edge, with initial score `1 - max(affinity)` over the shared grid edges.
/// Grid edges touching label 0 are ignored.
pub fn build_rag<F: Real>(fragments: &LabelVolume, aff: &AffinityVolume<F>, bins: Bins) -> Result<Rag> {
    aff.check_shape(fragments.shape())?;
    let shape = aff.shape();
    let labels = fragments.data();
    let values = aff.data();

    let mut sizes: FxHashMap<u64, u64> = FxHashMap::default();
    for &l in labels.iter().filter(|&&l| l != 0) {
        *sizes.entry(l).or_insert(0) += 1;
    }
    let mut strongest: FxHashMap<(u64, u64), f64> = FxHashMap::default();
    for (edge, u, v) in shape.edges() {
        let (a, b) = (labels[u], labels[v]);
        if a == 0 || b == 0 || a == b {
            continue;
        }
        let value = values[edge.flat(shape)].as_f64();
        let best = strongest.entry((a.min(b), a.max(b))).or_insert(value);
        if value > *best {
            *best = value;
        }
    }
    let nodes: Vec<(u64, u64)> = sizes.into_iter().collect();
    let edges: Vec<(u64, u64, f64)> = strongest.into_iter().map(|((a, b), max)| (a, b, 1.0 - max)).collect();
    Rag::from_parts(&nodes, &edges, bins)
}
