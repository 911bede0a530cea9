//! Segmentation metrics: variation of information (split and merge parts),
//! adapted RAND error and the CREMI score.
//!
//! VOI is in nats. `voi_split = H(seg | gt)` grows with oversegmentation,
//! `voi_merge = H(gt | seg)` with undersegmentation.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Sparse joint counts of (segment, ground-truth) labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContingencyTable {
    /// `((seg, gt), count)` sorted by key.
    entries: Vec<((u64, u64), u64)>,
    seg_marginal: Vec<(u64, u64)>,
    gt_marginal: Vec<(u64, u64)>,
    total: u64,
}

fn sorted<K: Ord + Copy>(map: FxHashMap<K, u64>) -> Vec<(K, u64)> {
    let mut v: Vec<(K, u64)> = map.into_iter().collect();
    v.sort_unstable_by_key(|&(k, _)| k);
    v
}

impl ContingencyTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        Self::from_counts(pairs.into_iter().map(|pair| (pair, 1)))
    }

    /// Builds a table from `((seg, gt), count)` items; repeated keys add up.
    pub fn from_counts(counts: impl IntoIterator<Item = ((u64, u64), u64)>) -> Self {
        let mut joint: FxHashMap<(u64, u64), u64> = FxHashMap::default();
        for (key, count) in counts {
            *joint.entry(key).or_insert(0) += count;
        }
        let mut seg: FxHashMap<u64, u64> = FxHashMap::default();
        let mut gt: FxHashMap<u64, u64> = FxHashMap::default();
        let mut total = 0;
        for (&(s, g), &c) in &joint {
            *seg.entry(s).or_insert(0) += c;
            *gt.entry(g).or_insert(0) += c;
            total += c;
        }
        ContingencyTable {
            entries: sorted(joint),
            seg_marginal: sorted(seg),
            gt_marginal: sorted(gt),
            total,
        }
    }

    pub fn entries(&self) -> &[((u64, u64), u64)] {
        &self.entries
    }

    pub fn get(&self, seg: u64, gt: u64) -> u64 {
        self.entries
            .binary_search_by_key(&(seg, gt), |&(k, _)| k)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn seg_marginal(&self) -> &[(u64, u64)] {
        &self.seg_marginal
    }

    pub fn gt_marginal(&self) -> &[(u64, u64)] {
        &self.gt_marginal
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// The table with the roles of segmentation and ground truth swapped.
    pub fn transposed(&self) -> Self {
        Self::from_counts(self.entries.iter().map(|&((s, g), c)| ((g, s), c)))
    }
}

/// Counts voxel label pairs. With `ignore_gt_background`, voxels whose
/// ground-truth label is 0 are left out entirely.
pub fn contingency(seg: &LabelVolume, gt: &LabelVolume, ignore_gt_background: bool) -> Result<ContingencyTable> {
    seg.check_shape(gt.shape())?;
    Ok(ContingencyTable::from_pairs(
        seg.data()
            .iter()
            .zip(gt.data())
            .filter(|&(_, &g)| !ignore_gt_background || g != 0)
            .map(|(&s, &g)| (s, g)),
    ))
}

/// `(H(seg | gt), H(gt | seg))` in nats.
pub fn voi(table: &ContingencyTable) -> Result<(f64, f64)> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let n = table.total() as f64;
    let marginal = |m: &[(u64, u64)], key: u64| m[m.binary_search_by_key(&key, |&(k, _)| k).unwrap()].1;
    let mut split = 0.0;
    let mut merge = 0.0;
    for &((s, g), c) in table.entries() {
        let p = c as f64 / n;
        split -= p * (c as f64 / marginal(table.gt_marginal(), g) as f64).ln();
        merge -= p * (c as f64 / marginal(table.seg_marginal(), s) as f64).ln();
    }
    Ok((split.max(0.0), merge.max(0.0)))
}

/// Rand precision and recall from squared counts.
pub fn rand_precision_recall(table: &ContingencyTable) -> Result<(f64, f64)> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let square = |c: u64| (c as f64) * (c as f64);
    let joint: f64 = table.entries().iter().map(|&(_, c)| square(c)).sum();
    let seg: f64 = table.seg_marginal().iter().map(|&(_, c)| square(c)).sum();
    let gt: f64 = table.gt_marginal().iter().map(|&(_, c)| square(c)).sum();
    Ok((joint / seg, joint / gt))
}

/// `1 - F1` of Rand precision and recall.
pub fn adapted_rand_error(table: &ContingencyTable) -> Result<f64> {
    let (precision, recall) = rand_precision_recall(table)?;
    Ok(1.0 - 2.0 * precision * recall / (precision + recall))
}

/// Geometric mean of total VOI and adapted RAND error.
pub fn cremi_score(voi_total: f64, arand: f64) -> Result<f64> {
    if !(voi_total >= 0.0 && arand >= 0.0) {
        return Err(Error::NegativeMetric { voi: voi_total, arand });
    }
    Ok((voi_total * arand).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub voi_split: f64,
    pub voi_merge: f64,
    pub voi_total: f64,
    pub arand: f64,
    pub cremi_score: f64,
}

impl EvalReport {
    pub fn from_table(table: &ContingencyTable) -> Result<Self> {
        let (voi_split, voi_merge) = voi(table)?;
        let voi_total = voi_split + voi_merge;
        let arand = adapted_rand_error(table)?;
        Ok(EvalReport { voi_split, voi_merge, voi_total, arand, cremi_score: cremi_score(voi_total, arand)? })
    }
}

pub fn evaluate(seg: &LabelVolume, gt: &LabelVolume, ignore_gt_background: bool) -> Result<EvalReport> {
    EvalReport::from_table(&contingency(seg, gt, ignore_gt_background)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Shape3;
    use std::f64::consts::LN_2;

    fn vol(data: &[u64]) -> LabelVolume {
        LabelVolume::new(Shape3::new(1, 1, data.len()).unwrap(), data.to_vec()).unwrap()
    }

    #[test]
    fn identical_segmentations() {
        let a = vol(&[1, 1, 2, 2, 2]);
        let t = contingency(&a, &a, true).unwrap();
        assert_eq!(t.entries(), &[((1, 1), 2), ((2, 2), 3)]);
        let r = EvalReport::from_table(&t).unwrap();
        assert_eq!((r.voi_split, r.voi_merge, r.arand, r.cremi_score), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn background_filter() {
        let gt = vol(&[0, 0, 0]);
        let seg = vol(&[1, 2, 3]);
        assert!(contingency(&seg, &gt, true).unwrap().is_empty());
        assert_eq!(contingency(&seg, &gt, false).unwrap().total(), 3);
        assert!(matches!(voi(&contingency(&seg, &gt, true).unwrap()), Err(Error::EmptyTable)));
        assert!(adapted_rand_error(&ContingencyTable::default()).is_err());
        assert!(contingency(&seg, &vol(&[1]), true).is_err());
    }

    #[test]
    fn split_four_four() {
        let gt = vol(&[1; 8]);
        let seg = vol(&[1, 1, 1, 1, 2, 2, 2, 2]);
        let t = contingency(&seg, &gt, true).unwrap();
        assert_eq!(t.entries(), &[((1, 1), 4), ((2, 1), 4)]);
        let (split, merge) = voi(&t).unwrap();
        assert!((split - LN_2).abs() < 1e-12);
        assert_eq!(merge, 0.0);
        let (p, r) = rand_precision_recall(&t).unwrap();
        assert!((p - 1.0).abs() < 1e-15 && (r - 0.5).abs() < 1e-15);
        assert!((adapted_rand_error(&t).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let report = EvalReport::from_table(&t).unwrap();
        assert!((report.cremi_score - (LN_2 / 3.0).sqrt()).abs() < 1e-12);
        assert!((report.cremi_score - 0.4807).abs() < 1e-4);

        // the mirrored case: two objects merged into one segment
        let (split, merge) = voi(&t.transposed()).unwrap();
        assert_eq!(split, 0.0);
        assert!((merge - LN_2).abs() < 1e-12);
        let (p, r) = rand_precision_recall(&t.transposed()).unwrap();
        assert!((p - 0.5).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cremi_inputs() {
        assert_eq!(cremi_score(0.0, 0.7).unwrap(), 0.0);
        assert_eq!(cremi_score(1.0, 1.0).unwrap(), 1.0);
        assert!(cremi_score(-0.1, 0.5).is_err());
        assert!(cremi_score(0.1, f64::NAN).is_err());
    }
}
