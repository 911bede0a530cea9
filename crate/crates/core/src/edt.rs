//! Exact Euclidean distance transform (Felzenszwalb & Huttenlocher), one
//! separable pass per axis over squared distances.

use crate::volume::Shape3;

/// Lower envelope of parabolas for one line. `f` holds squared distances
/// (`INFINITY` where unknown) and is overwritten with the result.
fn transform_line(f: &mut [f64], v: &mut [usize], z: &mut [f64], out: &mut [f64]) {
    let n = f.len();
    // skip lines that carry no information
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k];
            let pf = p as f64;
            s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            // z[0] is -inf, so this stops at k == 0
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (q, slot) in out.iter_mut().enumerate().take(n) {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *slot = d * d + f[v[k]];
    }
    f.copy_from_slice(&out[..n]);
}

/// Euclidean distance from every voxel to the nearest voxel where
/// `feature` is true. Voxels are unit-spaced; the result is `INFINITY`
/// everywhere when no feature voxel exists.
pub fn distance_to_features(shape: Shape3, feature: &[bool]) -> Vec<f64> {
    assert_eq!(feature.len(), shape.len());
    let mut d: Vec<f64> = feature.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let dims = shape.dims();
    let longest = *dims.iter().max().unwrap();
    let mut line = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];
    let mut out = vec![0.0; longest];

    let strides = [shape.y * shape.x, shape.x, 1];
    for axis in (0..3).rev() {
        let len = dims[axis];
        if len == 1 {
            continue;
        }
        let stride = strides[axis];
        // enumerate line starts: all voxels whose coordinate along axis is 0
        for start in 0..shape.len() {
            if shape.coords(start)[axis] != 0 {
                continue;
            }
            for i in 0..len {
                line[i] = d[start + i * stride];
            }
            transform_line(&mut line[..len], &mut v, &mut z, &mut out);
            for i in 0..len {
                d[start + i * stride] = line[i];
            }
        }
    }
    d.iter_mut().for_each(|x| *x = x.sqrt());
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(shape: Shape3, feature: &[bool]) -> Vec<f64> {
        (0..shape.len())
            .map(|i| {
                let a = shape.coords(i);
                (0..shape.len())
                    .filter(|&j| feature[j])
                    .map(|j| {
                        let b = shape.coords(j);
                        (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum::<f64>().sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn line_example() {
        let shape = Shape3::new(1, 1, 8).unwrap();
        let feature = [false, false, false, true, true, false, false, false];
        assert_eq!(distance_to_features(shape, &feature), vec![3.0, 2.0, 1.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn no_features_is_infinite() {
        let shape = Shape3::new(2, 3, 4).unwrap();
        assert!(distance_to_features(shape, &[false; 24]).iter().all(|d| d.is_infinite()));
    }

    proptest! {
        #[test]
        fn matches_brute_force(z in 1usize..5, y in 1usize..6, x in 1usize..6, bits in any::<u64>()) {
            let shape = Shape3::new(z, y, x).unwrap();
            let feature: Vec<bool> = (0..shape.len()).map(|i| (bits >> (i % 64)) & 1 == 1 && i % 3 != 1).collect();
            let fast = distance_to_features(shape, &feature);
            let slow = brute(shape, &feature);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!(a == b || (a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
