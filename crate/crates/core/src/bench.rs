//! Random region adjacency graphs and the bucket-queue versus binary-heap
//! agglomeration benchmark.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::agglomerate::{agglomerate, naive_agglomerate, Bins, MergeFunction, MergeHistory, Rag};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Signature shared by the agglomeration strategies.
pub type AgglomerateFn = fn(&Rag, MergeFunction, f64) -> Result<MergeHistory>;

/// A RAG shaped like fragments tiling a volume: nodes on a cubic grid with
/// 6-neighborhood, truncated to exactly `edges` edges in scan order. Scores
/// are uniform in `[0, 1)` and node sizes uniform in `1..=1000`.
pub fn grid_rag(edges: usize, bins: Bins, seed: u64) -> Result<Rag> {
    let side = ((edges as f64 / 3.0).cbrt().ceil() as usize).max(2);
    let index = |z: usize, y: usize, x: usize| ((z * side + y) * side + x) as u64 + 1;
    let scores = CounterRng::new(seed, 11);
    let sizes = CounterRng::new(seed, 12);

    let mut list = Vec::with_capacity(edges);
    'outer: for z in 0..side {
        for y in 0..side {
            for x in 0..side {
                let here = index(z, y, x);
                for (dz, dy, dx) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                    if list.len() == edges {
                        break 'outer;
                    }
                    let (nz, ny, nx) = (z + dz, y + dy, x + dx);
                    if nz < side && ny < side && nx < side {
                        let score = scores.uniform_at(list.len() as u64);
                        list.push((here, index(nz, ny, nx), score));
                    }
                }
            }
        }
    }
    let nodes: Vec<(u64, u64)> = (1..=(side * side * side) as u64)
        .map(|label| (label, 1 + (sizes.u64_at(label) % 1000)))
        .collect();
    Rag::from_parts(&nodes, &list, bins)
}

/// An unstructured random graph on `nodes` nodes with up to `edges` distinct
/// edges whose scores take only `levels` distinct values, so ties are common.
pub fn random_rag(nodes: usize, edges: usize, levels: u32, bins: Bins, seed: u64) -> Result<Rag> {
    let rng = CounterRng::new(seed, 21);
    let mut counter = 0u64;
    let mut next = || {
        counter += 1;
        rng.u64_at(counter)
    };
    let node_list: Vec<(u64, u64)> = (1..=nodes as u64).map(|l| (l, 1 + next() % 5)).collect();
    let mut seen = std::collections::HashSet::new();
    let mut list = Vec::new();
    if nodes >= 2 {
        for _ in 0..edges {
            let a = 1 + next() % nodes as u64;
            let b = 1 + next() % nodes as u64;
            if a == b || !seen.insert((a.min(b), a.max(b))) {
                continue;
            }
            let level = next() % levels.max(1) as u64;
            let score = level as f64 / levels.max(1) as f64;
            list.push((a, b, score));
        }
    }
    Rag::from_parts(&node_list, &list, bins)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    /// RAG edge count.
    pub n: usize,
    /// Median seconds, bucket queue.
    pub t_bucket: f64,
    /// Median seconds, binary heap.
    pub t_naive: f64,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times both strategies on [`grid_rag`] graphs of the given edge counts,
/// merging until a single node remains. Fails if the histories differ.
pub fn bench_agglomeration(sizes: &[usize], repeats: usize, function: MergeFunction, seed: u64) -> Result<Vec<BenchRow>> {
    bench_with(sizes, repeats, function, seed, agglomerate, naive_agglomerate)
}

pub fn bench_with(
    sizes: &[usize],
    repeats: usize,
    function: MergeFunction,
    seed: u64,
    bucket: AgglomerateFn,
    naive: AgglomerateFn,
) -> Result<Vec<BenchRow>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("benchmark sizes must be non-empty and ascending".into()));
    }
    let repeats = repeats.max(1);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let rag = grid_rag(n, Bins::default(), seed)?;
        let mut t_bucket = Vec::with_capacity(repeats);
        let mut t_naive = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let fast = bucket(&rag, function, 1.0)?;
            t_bucket.push(start.elapsed().as_secs_f64());

            let start = Instant::now();
            let slow = naive(&rag, function, 1.0)?;
            t_naive.push(start.elapsed().as_secs_f64());

            if fast != slow {
                return Err(Error::HistoryMismatch { edges: n });
            }
        }
        rows.push(BenchRow { n, t_bucket: median(t_bucket), t_naive: median(t_naive) });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row).map_err(|e| Error::Config(e.to_string()))?;
    }
    out.flush().map_err(|e| Error::Config(e.to_string()))
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, t)| (n.ln(), t.ln())).collect();
    let m = logs.len() as f64;
    let (mx, my) = logs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / m, b + y / m));
    let (sxy, sxx) = logs
        .iter()
        .fold((0.0, 0.0), |(sxy, sxx), &(x, y)| (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx)));
    sxy / sxx
}
