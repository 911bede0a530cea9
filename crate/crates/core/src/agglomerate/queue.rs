use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// One bucket. Entries arriving before the bucket is reached wait unsorted
/// and are radix-sorted once on first pop; later pushes append to the sorted
/// run when in order and go to a small heap otherwise.
#[derive(Default)]
struct Bucket {
    pending: Vec<(u32, u32)>,
    run: Vec<(u32, u32)>,
    cursor: usize,
    late: BinaryHeap<Reverse<(u32, u32)>>,
    sorted: bool,
}

impl Bucket {
    fn push(&mut self, item: (u32, u32)) {
        if !self.sorted {
            self.pending.push(item);
        } else if self.cursor == self.run.len() && self.late.is_empty() {
            self.run.clear();
            self.cursor = 0;
            self.run.push(item);
        } else if self.run.last().is_some_and(|&last| item >= last) {
            self.run.push(item);
        } else {
            self.late.push(Reverse(item));
        }
    }

    fn open(&mut self) {
        if !self.sorted {
            self.sorted = true;
            radsort::sort_by_key(&mut self.pending, |&(edge, generation)| (u64::from(edge) << 32) | u64::from(generation));
            self.run = std::mem::take(&mut self.pending);
            self.cursor = 0;
        }
    }

    fn pop(&mut self) -> Option<(u32, u32)> {
        let head = self.run.get(self.cursor).copied();
        match (head, self.late.peek()) {
            (Some(h), Some(&Reverse(l))) if l < h => self.late.pop().map(|Reverse(x)| x),
            (Some(h), _) => {
                self.cursor += 1;
                Some(h)
            }
            (None, _) => self.late.pop().map(|Reverse(x)| x),
        }
    }

    fn is_empty(&self) -> bool {
        self.pending.is_empty() && self.cursor == self.run.len() && self.late.is_empty()
    }
}

/// Monotone bucket priority queue over `k` score bins. Items are
/// `(edge, generation)` pairs; within a bin the smallest edge index pops
/// first. Pushes below the current minimum bin are not allowed.
pub(crate) struct BucketQueue {
    buckets: Vec<Bucket>,
    current: usize,
    len: usize,
}

impl BucketQueue {
    pub fn new(bins: usize) -> Self {
        BucketQueue { buckets: (0..bins).map(|_| Bucket::default()).collect(), current: 0, len: 0 }
    }

    pub fn push(&mut self, bin: u32, edge: u32, generation: u32) {
        let bin = bin as usize;
        debug_assert!(bin >= self.current, "push into bin {bin} below current {}", self.current);
        self.buckets[bin].push((edge, generation));
        self.current = self.current.min(bin);
        self.len += 1;
    }

    pub fn pop(&mut self) -> Option<(u32, u32, u32)> {
        if self.len == 0 {
            return None;
        }
        while self.buckets[self.current].is_empty() {
            self.current += 1;
        }
        let bucket = &mut self.buckets[self.current];
        bucket.open();
        let (edge, generation) = bucket.pop()?;
        self.len -= 1;
        Some((self.current as u32, edge, generation))
    }
}
