//! Deterministic synthetic ground truth and affinities.
//!
//! All randomness comes from [`CounterRng`] streams: stream 1 draws Voronoi
//! sites, stream 2 the affinity noise. For edge flat index `e`, draws
//! `2e`/`2e + 1` of the noise stream feed Box-Muller and draw `e` of stream 3
//! decides the flip.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::Real;
use crate::unionfind::DisjointSets;
use crate::volume::{AffinityVolume, LabelVolume, Shape3};

const SITE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const FLIP_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// `[z, y, x]`
    pub shape: [usize; 3],
    pub n_regions: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub flip_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn clean(shape: [usize; 3], n_regions: usize, seed: u64) -> Self {
        SynthSpec { shape, n_regions, noise_sigma: 0.0, flip_prob: 0.0, seed }
    }

    pub fn shape3(&self) -> Result<Shape3> {
        Shape3::new(self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn validate(&self) -> Result<Shape3> {
        let shape = self.shape3()?;
        if self.n_regions == 0 || self.n_regions > shape.len() {
            return Err(Error::TooManyRegions { regions: self.n_regions, voxels: shape.len() });
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob must be in [0, 1], got {}", self.flip_prob)));
        }
        Ok(shape)
    }

    /// Ground truth and affinities together.
    pub fn generate<F: Real>(&self) -> Result<(LabelVolume, AffinityVolume<F>)> {
        let gt = voronoi_labels(self)?;
        let aff = affinities_from_labels(&gt, self.noise_sigma, self.flip_prob, self.seed)?;
        Ok((gt, aff))
    }
}

/// `n_regions` distinct voxel sites drawn from the seed.
pub fn voronoi_sites(spec: &SynthSpec) -> Result<Vec<[usize; 3]>> {
    let shape = spec.validate()?;
    let rng = CounterRng::new(spec.seed, SITE_STREAM);
    let n = shape.len();
    let mut taken = vec![false; n];
    let mut sites = Vec::with_capacity(spec.n_regions);
    let mut counter = 0u64;
    while sites.len() < spec.n_regions {
        let index = ((rng.uniform_at(counter) * n as f64) as usize).min(n - 1);
        counter += 1;
        if !taken[index] {
            taken[index] = true;
            sites.push(shape.coords(index));
        }
    }
    Ok(sites)
}

/// Labels each voxel `1 + i` for its nearest site `i` (squared Euclidean
/// distance, ties to the smaller index).
pub fn voronoi_labels_from_sites(shape: Shape3, sites: &[[usize; 3]]) -> Result<LabelVolume> {
    if sites.is_empty() || sites.len() > shape.len() {
        return Err(Error::TooManyRegions { regions: sites.len(), voxels: shape.len() });
    }
    let data = (0..shape.len())
        .map(|v| {
            let c = shape.coords(v);
            let mut best = (u64::MAX, 0usize);
            for (i, s) in sites.iter().enumerate() {
                let d: u64 = (0..3).map(|k| (c[k].abs_diff(s[k]) as u64).pow(2)).sum();
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1 as u64 + 1
        })
        .collect();
    LabelVolume::new(shape, data)
}

/// Voronoi ground truth with every region 6-connected; see
/// [`connect_regions`].
pub fn voronoi_labels(spec: &SynthSpec) -> Result<LabelVolume> {
    let shape = spec.validate()?;
    let sites = voronoi_sites(spec)?;
    Ok(connect_regions(&voronoi_labels_from_sites(shape, &sites)?, &sites))
}

/// Digitized Voronoi cells can leave isolated voxels whose face neighbors
/// all belong to other cells. Each piece of a region that does not hold the
/// region's site (label `1 + i` for site `i`) is given to the neighboring
/// label it shares most faces with, ties to the smaller label, until every
/// region is one 6-connected piece.
pub fn connect_regions(labels: &LabelVolume, sites: &[[usize; 3]]) -> LabelVolume {
    let shape = labels.shape();
    let mut data = labels.data().to_vec();
    loop {
        let mut sets = DisjointSets::new(shape.len());
        for (_, u, v) in shape.edges() {
            if data[u] == data[v] {
                sets.union(u, v);
            }
        }
        let mut home: FxHashMap<u64, usize> = FxHashMap::default();
        for (i, s) in sites.iter().enumerate() {
            let v = shape.index(s[0], s[1], s[2]);
            if data[v] == i as u64 + 1 {
                home.insert(data[v], sets.find(v));
            }
        }
        let root: Vec<usize> = (0..shape.len()).map(|v| sets.find(v)).collect();
        let stray = |v: usize| home.get(&data[v]).is_some_and(|&r| r != root[v]);

        let mut faces: FxHashMap<usize, FxHashMap<u64, usize>> = FxHashMap::default();
        for (_, u, v) in shape.edges() {
            if data[u] != data[v] {
                for (a, b) in [(u, v), (v, u)] {
                    if stray(a) {
                        *faces.entry(root[a]).or_default().entry(data[b]).or_insert(0) += 1;
                    }
                }
            }
        }
        if faces.is_empty() {
            break;
        }
        let target: FxHashMap<usize, u64> = faces
            .into_iter()
            .map(|(piece, counts)| {
                let best = counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).unwrap();
                (piece, best.0)
            })
            .collect();
        for v in 0..shape.len() {
            if let Some(&label) = target.get(&root[v]) {
                data[v] = label;
            }
        }
    }
    LabelVolume::new(shape, data).expect("same shape")
}

/// Indicator affinities (1 inside a nonzero region, 0 otherwise) with
/// additive Gaussian noise and random flips, clamped to `[0, 1]`.
pub fn affinities_from_labels<F: Real>(
    gt: &LabelVolume,
    noise_sigma: f64,
    flip_prob: f64,
    seed: u64,
) -> Result<AffinityVolume<F>> {
    let noise = CounterRng::new(seed, NOISE_STREAM);
    let flips = CounterRng::new(seed, FLIP_STREAM);
    let shape = gt.shape();
    let labels = gt.data();
    AffinityVolume::from_fn(shape, |edge, u, v| {
        let e = edge.flat(shape) as u64;
        let base = if labels[u] != 0 && labels[u] == labels[v] { 1.0 } else { 0.0 };
        let mut value = base;
        if noise_sigma > 0.0 {
            value += noise_sigma * noise.normal_at(e);
        }
        if flip_prob > 0.0 && flips.uniform_at(e) < flip_prob {
            value = 1.0 - base;
        }
        F::from_f64_lossy(value.clamp(0.0, 1.0))
    })
}
