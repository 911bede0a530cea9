#![allow(dead_code)]

use mala::rng::CounterRng;
use mala::{AffinityVolume, LabelVolume, Shape3};

/// Sequential draws from a counter-based stream.
pub struct Draws {
    rng: CounterRng,
    next: u64,
}

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws { rng: CounterRng::new(seed, 99), next: 0 }
    }

    pub fn u64(&mut self) -> u64 {
        self.next += 1;
        self.rng.u64_at(self.next)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.u64() % n as u64) as usize
    }

    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn uniform(&mut self) -> f64 {
        self.next += 1;
        self.rng.uniform_at(self.next)
    }
}

pub fn random_shape(d: &mut Draws, max: usize) -> Shape3 {
    Shape3::new(d.range(1, max), d.range(1, max), d.range(1, max)).unwrap()
}

/// Labels in `0..=labels`, where 0 is background.
pub fn random_labels(d: &mut Draws, shape: Shape3, labels: usize) -> LabelVolume {
    let data = (0..shape.len()).map(|_| d.below(labels + 1) as u64).collect();
    LabelVolume::new(shape, data).unwrap()
}

/// Affinities from `levels` evenly spaced values, so ties are frequent.
pub fn random_affinities(d: &mut Draws, shape: Shape3, levels: usize) -> AffinityVolume<f64> {
    AffinityVolume::from_fn(shape, |_, _, _| d.below(levels) as f64 / (levels - 1).max(1) as f64).unwrap()
}

/// Affinities where all in-bounds edges hold distinct values at least
/// `1 / (edges + 1)` apart.
pub fn distinct_affinities(d: &mut Draws, shape: Shape3) -> AffinityVolume<f64> {
    let m = shape.edge_count();
    let mut ranks: Vec<usize> = (1..=m).collect();
    for i in (1..m).rev() {
        ranks.swap(i, d.below(i + 1));
    }
    let mut it = ranks.into_iter();
    AffinityVolume::from_fn(shape, |_, _, _| it.next().unwrap() as f64 / (m + 1) as f64).unwrap()
}
