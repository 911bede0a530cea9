mod common;

use std::collections::HashMap;

use common::{random_labels, random_shape, Draws};
use mala::metrics::{adapted_rand_error, contingency, evaluate, voi};
use mala::synth::{voronoi_labels, SynthSpec};
use mala::LabelVolume;

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts.map(|c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

/// `(H(S|G), H(G|S))` as joint minus marginal entropies.
fn voi_oracle(seg: &[u64], gt: &[u64]) -> (f64, f64) {
    let n = seg.len() as f64;
    let mut joint: HashMap<(u64, u64), u64> = HashMap::new();
    let mut s: HashMap<u64, u64> = HashMap::new();
    let mut g: HashMap<u64, u64> = HashMap::new();
    for (&a, &b) in seg.iter().zip(gt) {
        *joint.entry((a, b)).or_default() += 1;
        *s.entry(a).or_default() += 1;
        *g.entry(b).or_default() += 1;
    }
    let hj = entropy(joint.into_values(), n);
    (hj - entropy(g.into_values(), n), hj - entropy(s.into_values(), n))
}

/// Over ordered voxel pairs (self-pairs included).
fn arand_oracle(seg: &[u64], gt: &[u64]) -> f64 {
    let (mut both, mut in_seg, mut in_gt) = (0u64, 0u64, 0u64);
    for i in 0..seg.len() {
        for j in 0..seg.len() {
            let s = seg[i] == seg[j];
            let g = gt[i] == gt[j];
            both += (s && g) as u64;
            in_seg += s as u64;
            in_gt += g as u64;
        }
    }
    let (p, r) = (both as f64 / in_seg as f64, both as f64 / in_gt as f64);
    1.0 - 2.0 * p * r / (p + r)
}

#[test]
fn metrics_match_pairwise_oracles() {
    let mut d = Draws::new(31);
    for _ in 0..100 {
        let shape = random_shape(&mut d, 5);
        let k = d.range(1, 6);
        let seg = random_labels(&mut d, shape, k);
        let k = d.range(1, 6);
        let gt = random_labels(&mut d, shape, k);
        let table = contingency(&seg, &gt, false).unwrap();
        let (split, merge) = voi(&table).unwrap();
        let (os, om) = voi_oracle(seg.data(), gt.data());
        assert!((split - os).abs() < 1e-12 && (merge - om).abs() < 1e-12);
        assert!((adapted_rand_error(&table).unwrap() - arand_oracle(seg.data(), gt.data())).abs() < 1e-12);
    }
}

#[test]
fn metric_invariants() {
    let mut d = Draws::new(32);
    for _ in 0..100 {
        let shape = random_shape(&mut d, 6);
        let k = d.range(1, 8);
        let seg = random_labels(&mut d, shape, k);
        let k = d.range(1, 8);
        let gt = random_labels(&mut d, shape, k);
        let a = evaluate(&seg, &gt, false).unwrap();
        let b = evaluate(&gt, &seg, false).unwrap();
        assert!(a.voi_split >= 0.0 && a.voi_merge >= 0.0);
        assert!((0.0..=1.0).contains(&a.arand));
        assert!((a.voi_split - b.voi_merge).abs() < 1e-12 && (a.voi_merge - b.voi_split).abs() < 1e-12);
        assert!((a.arand - b.arand).abs() < 1e-12);
        assert!((a.cremi_score - (a.voi_total * a.arand).sqrt()).abs() < 1e-15);

        let same = evaluate(&gt, &gt, false).unwrap();
        assert_eq!((same.voi_total, same.arand, same.cremi_score), (0.0, 0.0, 0.0));

        // relabeling by an injective map changes nothing
        let renamed = LabelVolume::new(shape, seg.data().iter().map(|&l| l * 7919 + 3).collect()).unwrap();
        let c = evaluate(&renamed, &gt, false).unwrap();
        assert!((c.voi_total - a.voi_total).abs() < 1e-12 && (c.arand - a.arand).abs() < 1e-12);
    }
}

#[test]
fn background_voxels_can_be_ignored() {
    let mut d = Draws::new(33);
    let shape = random_shape(&mut d, 6);
    let seg = random_labels(&mut d, shape, 4);
    let gt = random_labels(&mut d, shape, 3);
    let kept: Vec<(u64, u64)> = seg.data().iter().zip(gt.data()).filter(|p| *p.1 != 0).map(|(&s, &g)| (s, g)).collect();
    let table = contingency(&seg, &gt, true).unwrap();
    assert_eq!(table.total() as usize, kept.len());
    let (s, g): (Vec<u64>, Vec<u64>) = kept.into_iter().unzip();
    let (os, om) = voi_oracle(&s, &g);
    let (split, merge) = voi(&table).unwrap();
    assert!((split - os).abs() < 1e-12 && (merge - om).abs() < 1e-12);
}

#[test]
fn synth_is_deterministic_and_complete() {
    let mut d = Draws::new(34);
    for seed in 0..30 {
        let shape = [d.range(1, 12), d.range(1, 12), d.range(1, 12)];
        let voxels: usize = shape.iter().product();
        let spec = SynthSpec {
            shape,
            n_regions: d.range(1, 10.min(voxels)),
            noise_sigma: 0.1,
            flip_prob: 0.05,
            seed,
        };
        let (gt, aff) = spec.generate::<f32>().unwrap();
        let (gt2, aff2) = spec.generate::<f32>().unwrap();
        assert_eq!(gt, gt2);
        assert_eq!(aff, aff2);
        let mut labels = gt.labels();
        labels.sort_unstable();
        assert_eq!(labels, (1..=spec.n_regions as u64).collect::<Vec<_>>());
        assert_eq!(voronoi_labels(&spec).unwrap(), gt);
        assert!(aff.data().iter().all(|&a| (0.0..=1.0).contains(&a)));
    }
}
