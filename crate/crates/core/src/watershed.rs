//! Seeded watershed fragment extraction.
//!
//! 1. The boundary map is one minus the mean affinity of each voxel's
//!    incident edges.
//! 2. Voxels with boundary below 0.5 form the mask; the Euclidean distance of
//!    each mask voxel to the nearest non-mask voxel is computed.
//! 3. Seeds are connected plateaus of local maxima of that distance.
//! 4. Basins grow from the seeds by priority flood over the whole volume.
//!
//! Two voxels count as neighbors for the maximum test and for plateau
//! connectivity only if they lie in the same affinity component (connected
//! through edges with affinity above 0.5). A component holding no maximum,
//! such as a region too thin to reach the mask, is seeded at its voxel of
//! lowest boundary. Entering a voxel through an edge
//! costs `max(boundary(target), 1 - affinity(edge))`. With these rules a basin
//! never crosses a zero-affinity edge while the region behind it still has a
//! seed of its own, so exact affinities always yield an oversegmentation.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use rustc_hash::FxHashMap;

use crate::edt::distance_to_features;
use crate::scalar::Real;
use crate::unionfind::DisjointSets;
use crate::volume::{AffinityVolume, Axis, LabelVolume, Shape3};

/// Boundary threshold separating the intracellular mask from boundaries.
pub const BOUNDARY_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Mode {
    /// Full 3D extraction.
    #[default]
    #[serde(rename = "3d")]
    ThreeD,
    /// Independent extraction per xy-section, ignoring z affinities.
    #[serde(rename = "2d")]
    TwoD,
}

impl std::str::FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "3d" => Ok(Mode::ThreeD),
            "2d" => Ok(Mode::TwoD),
            _ => Err(crate::Error::Config(format!("unknown watershed mode {s:?}, expected 2d or 3d"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::ThreeD => "3d",
            Mode::TwoD => "2d",
        })
    }
}

/// Per-voxel boundary strength in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMap<F> {
    pub shape: Shape3,
    pub data: Vec<F>,
}

/// `1 - mean(incident affinities)` per voxel. A voxel without incident
/// edges (a 1x1x1 volume) has boundary 0.
pub fn boundary_map<F: Real>(aff: &AffinityVolume<F>) -> BoundaryMap<F> {
    let shape = aff.shape();
    let values = aff.data();
    let data = (0..shape.len())
        .map(|v| {
            let mut sum = F::zero();
            let mut count = 0u32;
            shape.for_each_incident(v, |_, e| {
                sum = sum + values[e];
                count += 1;
            });
            if count == 0 {
                F::zero()
            } else {
                F::one() - sum / F::from_u32(count).unwrap()
            }
        })
        .collect();
    BoundaryMap { shape, data }
}

/// Neighbor offsets `[dz, dy, dx]` of the 26-neighborhood.
fn offsets26() -> Vec<[isize; 3]> {
    let mut out = Vec::with_capacity(26);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dz, dy, dx) != (0, 0, 0) {
                    out.push([dz, dy, dx]);
                }
            }
        }
    }
    out
}

#[inline]
fn shifted(shape: Shape3, c: [usize; 3], d: [isize; 3]) -> Option<usize> {
    let dims = shape.dims();
    let mut n = [0usize; 3];
    for k in 0..3 {
        let v = c[k] as isize + d[k];
        if v < 0 || v >= dims[k] as isize {
            return None;
        }
        n[k] = v as usize;
    }
    Some(shape.index(n[0], n[1], n[2]))
}

#[derive(PartialEq)]
struct Entry {
    priority: f64,
    seq: u64,
    voxel: usize,
    label: u64,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Fragments of a whole volume in 3D. Labels are `1..=seeds`, assigned in
/// scan order of each plateau's first voxel; all-zero when the mask is empty.
pub fn extract_fragments_3d<F: Real>(aff: &AffinityVolume<F>) -> LabelVolume {
    let shape = aff.shape();
    let values: Vec<f64> = aff.data().iter().map(|v| v.as_f64()).collect();
    let data = extract(shape, &values);
    LabelVolume::new(shape, data).expect("shape-consistent output")
}

/// Fragments per xy-section. Section `z` uses labels offset by `z * Y * X`,
/// so labels are unique across sections.
pub fn extract_fragments_2d<F: Real>(aff: &AffinityVolume<F>) -> LabelVolume {
    let shape = aff.shape();
    let section = Shape3::new(1, shape.y, shape.x).expect("valid section");
    let area = section.len();
    let mut data = vec![0u64; shape.len()];
    let mut values = vec![0.0f64; 3 * area];
    for z in 0..shape.z {
        // z channel stays zero: those entries are faces of a 1-thick section
        for axis in [Axis::Y, Axis::X] {
            let channel = aff.channel(axis);
            let dst = &mut values[axis.channel() * area..(axis.channel() + 1) * area];
            for (d, s) in dst.iter_mut().zip(&channel[z * area..(z + 1) * area]) {
                *d = s.as_f64();
            }
        }
        let labels = extract(section, &values);
        let offset = (z * area) as u64;
        for (d, l) in data[z * area..(z + 1) * area].iter_mut().zip(labels) {
            *d = if l == 0 { 0 } else { l + offset };
        }
    }
    LabelVolume::new(shape, data).expect("shape-consistent output")
}

pub fn extract_fragments<F: Real>(aff: &AffinityVolume<F>, mode: Mode) -> LabelVolume {
    match mode {
        Mode::ThreeD => extract_fragments_3d(aff),
        Mode::TwoD => extract_fragments_2d(aff),
    }
}

fn extract(shape: Shape3, values: &[f64]) -> Vec<u64> {
    let n = shape.len();
    let boundary: Vec<f64> = {
        let mut out = vec![0.0; n];
        for (v, b) in out.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut count = 0u32;
            shape.for_each_incident(v, |_, e| {
                sum += values[e];
                count += 1;
            });
            *b = if count == 0 { 0.0 } else { 1.0 - sum / count as f64 };
        }
        out
    };
    let mask: Vec<bool> = boundary.iter().map(|&b| b < BOUNDARY_THRESHOLD).collect();
    if !mask.iter().any(|&m| m) {
        return vec![0; n];
    }
    let outside: Vec<bool> = mask.iter().map(|&m| !m).collect();
    let dist = distance_to_features(shape, &outside);

    let mut comps = DisjointSets::new(n);
    for (edge, u, v) in shape.edges() {
        if values[edge.flat(shape)] > BOUNDARY_THRESHOLD {
            comps.union(u, v);
        }
    }
    let comp: Vec<usize> = (0..n).map(|v| comps.find(v)).collect();

    let offsets = &offsets26();
    let comp = &comp;
    let neighbors = |v: usize| {
        let c = shape.coords(v);
        offsets
            .iter()
            .filter_map(move |&d| shifted(shape, c, d))
            .filter(move |&u| comp[u] == comp[v])
    };

    let is_max: Vec<bool> = (0..n)
        .map(|v| mask[v] && neighbors(v).all(|u| dist[v] >= dist[u]))
        .collect();

    // components without a maximum get one seed at their lowest boundary
    let mut orphan: FxHashMap<usize, usize> = (0..n).filter(|&v| !is_max[v]).map(|v| (comp[v], v)).collect();
    for v in (0..n).filter(|&v| is_max[v]) {
        orphan.remove(&comp[v]);
    }
    for v in 0..n {
        if let Some(best) = orphan.get_mut(&comp[v]) {
            if boundary[v] < boundary[*best] || (boundary[v] == boundary[*best] && v < *best) {
                *best = v;
            }
        }
    }
    let mut is_start = is_max.clone();
    for &v in orphan.values() {
        is_start[v] = true;
    }

    let mut labels = vec![0u64; n];
    let mut next = 0u64;
    let mut seeds = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !is_start[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            seeds.push(v);
            for u in neighbors(v) {
                if is_max[u] && labels[u] == 0 {
                    labels[u] = next;
                    queue.push_back(u);
                }
            }
        }
    }

    // priority flood; ties go to the earliest pushed entry
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push_neighbors = |heap: &mut BinaryHeap<Reverse<Entry>>, labels: &[u64], v: usize| {
        shape.for_each_incident(v, |u, e| {
            if labels[u] == 0 {
                let priority = boundary[u].max(1.0 - values[e]);
                heap.push(Reverse(Entry { priority, seq, voxel: u, label: labels[v] }));
                seq += 1;
            }
        });
    };
    seeds.sort_unstable();
    for &s in &seeds {
        push_neighbors(&mut heap, &labels, s);
    }
    while let Some(Reverse(entry)) = heap.pop() {
        if labels[entry.voxel] != 0 {
            continue;
        }
        labels[entry.voxel] = entry.label;
        push_neighbors(&mut heap, &labels, entry.voxel);
    }
    labels
}
