//! Constrained MALIS loss.
//!
//! For every voxel pair the maximin edge (the weakest edge on the strongest
//! path) is an edge of the maximal spanning forest, so one Kruskal sweep over
//! the edges sorted by descending affinity finds all of them. When an edge
//! unites two components, every pair split across the two components has it
//! as maximin edge; per-component label histograms give the number of
//! same-label and different-label pairs in `O(min(|C1|, |C2|))`.
//!
//! Pairs with at least one background (label 0) voxel contribute no loss.
//! Background voxels still take part in connectivity.
//!
//! Edges with equal affinity are ordered by ascending [`EdgeId::flat`] index,
//! both here and in the brute-force oracle.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::mem;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::unionfind::DisjointSets;
use crate::volume::{AffinityVolume, EdgeId, EdgeVolume, LabelVolume, Shape3};

/// Default voxel limit of [`brute_force_malis`].
pub const ORACLE_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    /// Edges between regions or touching background clamped to 0; same-label
    /// pairs penalized.
    Positive,
    /// Edges inside regions clamped to 1; different-label pairs penalized.
    Negative,
    /// Original affinities; all labeled pairs penalized.
    Unconstrained,
}

/// One edge of the maximal spanning forest and the voxel pairs it separates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MaximinEdge<F> {
    #[serde(skip)]
    pub edge: EdgeId,
    pub flat: usize,
    pub affinity: F,
    pub pos_pairs: u64,
    pub neg_pairs: u64,
    /// Pairs with at least one background voxel, counted by neither side.
    pub background_pairs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaximinDecomposition<F> {
    /// Spanning-forest edges in the order they were added.
    pub edges: Vec<MaximinEdge<F>>,
}

impl<F: Real> MaximinDecomposition<F> {
    pub fn pos_pairs(&self) -> u64 {
        self.edges.iter().map(|e| e.pos_pairs).sum()
    }

    pub fn neg_pairs(&self) -> u64 {
        self.edges.iter().map(|e| e.neg_pairs).sum()
    }

    pub fn background_pairs(&self) -> u64 {
        self.edges.iter().map(|e| e.background_pairs).sum()
    }

    /// Sum of affinities over the spanning forest.
    pub fn total_affinity(&self) -> F {
        self.edges.iter().fold(F::zero(), |acc, e| acc + e.affinity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MalisResult<F> {
    /// Sum over penalized pairs (not normalized).
    pub loss: F,
    /// Derivative of `loss` with respect to each stored affinity.
    pub gradient: EdgeVolume<F>,
}

impl<F: Real> MalisResult<F> {
    fn zeros(shape: Shape3) -> Self {
        MalisResult { loss: F::zero(), gradient: EdgeVolume::zeros(shape) }
    }

    fn add(mut self, other: &MalisResult<F>) -> Self {
        self.loss = self.loss + other.loss;
        for (g, &o) in self.gradient.data_mut().iter_mut().zip(other.gradient.data()) {
            *g = *g + o;
        }
        self
    }
}

fn check_shapes<F: Real>(aff: &AffinityVolume<F>, gt: &LabelVolume) -> Result<()> {
    aff.check_shape(gt.shape())
}

/// Flat indices of in-bounds edges, strongest first, ties by ascending index.
fn kruskal_order<F: Real>(shape: Shape3, values: &[F]) -> Vec<u32> {
    let mut order: Vec<u32> = shape.edges().map(|(e, _, _)| e.flat(shape) as u32).collect();
    order.sort_by(|&a, &b| {
        values[b as usize]
            .partial_cmp(&values[a as usize])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Label histogram of a component; background voxels are not listed.
#[derive(Default)]
struct Component {
    labeled: u64,
    counts: FxHashMap<u64, u64>,
}

/// Kruskal sweep over `values` (the possibly constrained affinities).
fn decompose<F: Real>(shape: Shape3, values: &[F], gt: &[u64]) -> Vec<MaximinEdge<F>> {
    let n = shape.len();
    let mut sets = DisjointSets::new(n);
    let mut comps: Vec<Component> = gt
        .iter()
        .map(|&label| {
            let mut c = Component::default();
            if label != 0 {
                c.labeled = 1;
                c.counts.insert(label, 1);
            }
            c
        })
        .collect();

    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for flat in kruskal_order(shape, values) {
        let flat = flat as usize;
        let edge = EdgeId::from_flat(flat, shape).expect("in-bounds edge");
        let pred = shape.predecessor(edge.voxel, edge.axis).expect("in-bounds edge");
        let (ra, rb) = (sets.find(pred), sets.find(edge.voxel));
        if ra == rb {
            continue;
        }
        let size_product = (sets.size_of(ra) as u64) * (sets.size_of(rb) as u64);
        let (root, child) = sets.union(ra, rb).expect("distinct roots");

        let mut small = mem::take(&mut comps[child]);
        let mut large = mem::take(&mut comps[root]);
        if small.counts.len() > large.counts.len() {
            mem::swap(&mut small, &mut large);
        }
        let mut pos = 0u64;
        for (&label, &count) in &small.counts {
            let entry = large.counts.entry(label).or_insert(0);
            pos += *entry * count;
            *entry += count;
        }
        let labeled_product = small.labeled * large.labeled;
        large.labeled += small.labeled;
        comps[root] = large;

        out.push(MaximinEdge {
            edge,
            flat,
            affinity: values[flat],
            pos_pairs: pos,
            neg_pairs: labeled_product - pos,
            background_pairs: size_product - labeled_product,
        });
        if out.len() + 1 == n {
            break;
        }
    }
    out
}

/// Maximal spanning forest of `aff` with per-edge pair counts against `gt`.
pub fn maximin_decompose<F: Real>(
    aff: &AffinityVolume<F>,
    gt: &LabelVolume,
) -> Result<MaximinDecomposition<F>> {
    check_shapes(aff, gt)?;
    Ok(MaximinDecomposition { edges: decompose(aff.shape(), aff.data(), gt.data()) })
}

/// The affinities used for path selection in `pass`.
fn constrained_values<F: Real>(aff: &AffinityVolume<F>, gt: &LabelVolume, pass: Pass) -> Vec<F> {
    let shape = aff.shape();
    let labels = gt.data();
    let mut values = aff.data().to_vec();
    if pass == Pass::Unconstrained {
        return values;
    }
    for (edge, u, v) in shape.edges() {
        let (a, b) = (labels[u], labels[v]);
        let same = a != 0 && a == b;
        let flat = edge.flat(shape);
        match pass {
            Pass::Positive if !same => values[flat] = F::zero(),
            Pass::Negative if same => values[flat] = F::one(),
            _ => {}
        }
    }
    values
}

fn two<F: Real>() -> F {
    F::one() + F::one()
}

/// Loss and gradient of a single pass.
///
/// The gradient is taken with respect to the original affinity of each
/// maximin edge, even where the pass clamped the value used to find it.
pub fn malis_pass<F: Real>(aff: &AffinityVolume<F>, gt: &LabelVolume, pass: Pass) -> Result<MalisResult<F>> {
    check_shapes(aff, gt)?;
    let shape = aff.shape();
    let values = constrained_values(aff, gt, pass);
    let original = aff.data();
    let mut result = MalisResult::zeros(shape);
    for rec in decompose(shape, &values, gt.data()) {
        let a = original[rec.flat];
        let (pos, neg) = match pass {
            Pass::Positive => (rec.pos_pairs, 0),
            Pass::Negative => (0, rec.neg_pairs),
            Pass::Unconstrained => (rec.pos_pairs, rec.neg_pairs),
        };
        let (pos, neg) = (F::from_u64(pos).unwrap(), F::from_u64(neg).unwrap());
        let miss = F::one() - a;
        result.loss = result.loss + pos * miss * miss + neg * a * a;
        result.gradient.data_mut()[rec.flat] = two::<F>() * (neg * a - pos * miss);
    }
    Ok(result)
}

/// Sum of the positive and negative passes.
pub fn constrained_malis<F: Real>(aff: &AffinityVolume<F>, gt: &LabelVolume) -> Result<MalisResult<F>> {
    let positive = malis_pass(aff, gt, Pass::Positive)?;
    let negative = malis_pass(aff, gt, Pass::Negative)?;
    Ok(positive.add(&negative))
}

/// [`brute_force_malis_with_limit`] with the default [`ORACLE_LIMIT`].
pub fn brute_force_malis<F: Real>(aff: &AffinityVolume<F>, gt: &LabelVolume, pass: Pass) -> Result<MalisResult<F>> {
    brute_force_malis_with_limit(aff, gt, pass, ORACLE_LIMIT)
}

/// Quadratic reference: for every voxel pair, the maximin edge is found by a
/// minimax-path search from each source voxel over edge ranks, without any
/// spanning-tree reasoning.
pub fn brute_force_malis_with_limit<F: Real>(
    aff: &AffinityVolume<F>,
    gt: &LabelVolume,
    pass: Pass,
    limit: usize,
) -> Result<MalisResult<F>> {
    check_shapes(aff, gt)?;
    let shape = aff.shape();
    let n = shape.len();
    if n > limit {
        return Err(Error::OracleTooLarge { voxels: n, limit });
    }
    let labels = gt.data();
    let original = aff.data();

    // Clamped values, recomputed here rather than shared with the fast path.
    let mut edges: Vec<(usize, usize, usize, F)> = Vec::new();
    for (edge, u, v) in shape.edges() {
        let flat = edge.flat(shape);
        let same = labels[u] != 0 && labels[u] == labels[v];
        let value = match pass {
            Pass::Positive if !same => F::zero(),
            Pass::Negative if same => F::one(),
            _ => original[flat],
        };
        edges.push((flat, u, v, value));
    }
    // Rank 0 is the strongest edge; a path's bottleneck is its largest rank.
    let mut ranked: Vec<usize> = (0..edges.len()).collect();
    ranked.sort_by(|&i, &j| {
        let (a, b) = (&edges[i], &edges[j]);
        b.3.partial_cmp(&a.3).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
    });
    let mut rank_of = vec![0usize; edges.len()];
    for (rank, &i) in ranked.iter().enumerate() {
        rank_of[i] = rank;
    }
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, &(_, u, v, _)) in edges.iter().enumerate() {
        adjacency[u].push((v, rank_of[i]));
        adjacency[v].push((u, rank_of[i]));
    }

    let mut result = MalisResult::zeros(shape);
    let mut best = vec![usize::MAX; n];
    for source in 0..n {
        best.fill(usize::MAX);
        let mut heap = BinaryHeap::new();
        // The source itself is reached with an empty path.
        heap.push(Reverse((0usize, source, true)));
        let mut done = vec![false; n];
        while let Some(Reverse((bottleneck, v, is_source))) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            if !is_source {
                best[v] = bottleneck;
            }
            for &(w, rank) in &adjacency[v] {
                if !done[w] {
                    let through = if is_source { rank } else { bottleneck.max(rank) };
                    heap.push(Reverse((through, w, false)));
                }
            }
        }
        for target in source + 1..n {
            let (a, b) = (labels[source], labels[target]);
            if a == 0 || b == 0 || best[target] == usize::MAX {
                continue;
            }
            let same = a == b;
            let penalized = match pass {
                Pass::Positive => same,
                Pass::Negative => !same,
                Pass::Unconstrained => true,
            };
            if !penalized {
                continue;
            }
            let flat = edges[ranked[best[target]]].0;
            let value = original[flat];
            let grad = &mut result.gradient.data_mut()[flat];
            if same {
                let miss = F::one() - value;
                result.loss = result.loss + miss * miss;
                *grad = *grad - two::<F>() * miss;
            } else {
                result.loss = result.loss + value * value;
                *grad = *grad + two::<F>() * value;
            }
        }
    }
    Ok(result)
}

/// Brute-force sum of both passes.
pub fn brute_force_constrained_malis<F: Real>(aff: &AffinityVolume<F>, gt: &LabelVolume) -> Result<MalisResult<F>> {
    brute_force_constrained_malis_with_limit(aff, gt, ORACLE_LIMIT)
}

pub fn brute_force_constrained_malis_with_limit<F: Real>(
    aff: &AffinityVolume<F>,
    gt: &LabelVolume,
    limit: usize,
) -> Result<MalisResult<F>> {
    let positive = brute_force_malis_with_limit(aff, gt, Pass::Positive, limit)?;
    let negative = brute_force_malis_with_limit(aff, gt, Pass::Negative, limit)?;
    Ok(positive.add(&negative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Axis;

    fn chain(labels: &[u64], affs: &[f64]) -> (AffinityVolume<f64>, LabelVolume) {
        let shape = Shape3::new(1, 1, labels.len()).unwrap();
        let aff = AffinityVolume::from_fn(shape, |e, _, _| {
            assert_eq!(e.axis, Axis::X);
            affs[e.voxel - 1]
        })
        .unwrap();
        (aff, LabelVolume::new(shape, labels.to_vec()).unwrap())
    }

    fn x_edge(voxel: usize) -> usize {
        2 * 3 + voxel
    }

    #[test]
    fn chain_decomposition() {
        let (aff, gt) = chain(&[1, 1, 1], &[0.8, 0.5]);
        let d = maximin_decompose(&aff, &gt).unwrap();
        let got: Vec<_> = d.edges.iter().map(|e| (e.flat, e.affinity, e.pos_pairs, e.neg_pairs)).collect();
        assert_eq!(got, vec![(x_edge(1), 0.8, 1, 0), (x_edge(2), 0.5, 2, 0)]);

        let (aff, gt) = chain(&[1, 2], &[0.6]);
        let d = maximin_decompose(&aff, &gt).unwrap();
        assert_eq!((d.edges[0].pos_pairs, d.edges[0].neg_pairs), (0, 1));
    }

    #[test]
    fn background_pairs_are_excluded() {
        let (aff, gt) = chain(&[1, 0, 1], &[0.9, 0.9]);
        let d = maximin_decompose(&aff, &gt).unwrap();
        let got: Vec<_> = d.edges.iter().map(|e| (e.flat, e.pos_pairs, e.neg_pairs, e.background_pairs)).collect();
        // equal affinities: lower flat index first
        assert_eq!(got, vec![(x_edge(1), 0, 0, 1), (x_edge(2), 1, 0, 1)]);
    }

    #[test]
    fn single_passes_on_chain() {
        let (aff, gt) = chain(&[1, 1, 2], &[0.9, 0.7]);
        let pos = malis_pass(&aff, &gt, Pass::Positive).unwrap();
        assert!((pos.loss - 0.01).abs() < 1e-12);
        assert!((pos.gradient.data()[x_edge(1)] + 0.2).abs() < 1e-12);
        assert_eq!(pos.gradient.data()[x_edge(2)], 0.0);

        let neg = malis_pass(&aff, &gt, Pass::Negative).unwrap();
        assert!((neg.loss - 0.98).abs() < 1e-12);
        assert!((neg.gradient.data()[x_edge(2)] - 2.8).abs() < 1e-12);
        assert_eq!(neg.gradient.data()[x_edge(1)], 0.0);

        let both = constrained_malis(&aff, &gt).unwrap();
        assert!((both.loss - 0.99).abs() < 1e-12);
        assert!((both.gradient.data()[x_edge(1)] + 0.2).abs() < 1e-12);
        assert!((both.gradient.data()[x_edge(2)] - 2.8).abs() < 1e-12);

        for pass in [Pass::Positive, Pass::Negative, Pass::Unconstrained] {
            let fast = malis_pass(&aff, &gt, pass).unwrap();
            let slow = brute_force_malis(&aff, &gt, pass).unwrap();
            assert!((fast.loss - slow.loss).abs() < 1e-12);
            assert_eq!(fast.gradient, slow.gradient);
        }
    }

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let (aff, gt) = chain(&[1, 1], &[1.0]);
        for pass in [Pass::Positive, Pass::Negative, Pass::Unconstrained] {
            let r = malis_pass(&aff, &gt, pass).unwrap();
            assert_eq!(r.loss, 0.0);
            assert!(r.gradient.data().iter().all(|&g| g == 0.0));
        }

        let shape = Shape3::new(3, 3, 3).unwrap();
        let gt = LabelVolume::new(shape, vec![5; 27]).unwrap();
        let aff = AffinityVolume::constant(shape, 1.0f32).unwrap();
        let r = constrained_malis(&aff, &gt).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.gradient.data().iter().all(|&g| g == 0.0));

        // two regions split by the plane x = 2, affinities exact
        let shape = Shape3::new(2, 3, 4).unwrap();
        let gt = LabelVolume::new(shape, (0..24).map(|i| if i % 4 < 2 { 1 } else { 2 }).collect()).unwrap();
        let labels = gt.data().to_vec();
        let aff = AffinityVolume::from_fn(shape, |_, u, v| if labels[u] == labels[v] { 1.0f32 } else { 0.0 }).unwrap();
        let r = constrained_malis(&aff, &gt).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.gradient.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_voxel() {
        let shape = Shape3::new(1, 1, 1).unwrap();
        let aff = AffinityVolume::<f64>::constant(shape, 0.0).unwrap();
        let gt = LabelVolume::new(shape, vec![1]).unwrap();
        let r = brute_force_malis(&aff, &gt, Pass::Unconstrained).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.gradient.data().iter().all(|&g| g == 0.0));
        assert!(maximin_decompose(&aff, &gt).unwrap().edges.is_empty());
    }

    #[test]
    fn errors() {
        let aff = AffinityVolume::<f64>::constant(Shape3::new(1, 1, 3).unwrap(), 0.5).unwrap();
        let gt = LabelVolume::zeros(Shape3::new(1, 1, 2).unwrap());
        assert!(matches!(malis_pass(&aff, &gt, Pass::Positive), Err(Error::ShapeMismatch { .. })));
        assert!(maximin_decompose(&aff, &gt).is_err());

        let shape = Shape3::new(8, 8, 9).unwrap();
        let aff = AffinityVolume::<f64>::constant(shape, 0.5).unwrap();
        let gt = LabelVolume::zeros(shape);
        assert!(matches!(
            brute_force_malis(&aff, &gt, Pass::Positive),
            Err(Error::OracleTooLarge { voxels: 576, limit: 512 })
        ));
    }
}
