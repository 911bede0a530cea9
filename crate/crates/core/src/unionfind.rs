//! Disjoint-set forest with union by size and path halving.

#[derive(Clone, Debug)]
pub struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        assert!(n <= u32::MAX as usize, "too many elements for u32 indices");
        DisjointSets { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    #[inline]
    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    pub fn size_of(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r] as usize
    }

    /// Unites the sets of `a` and `b`. Returns `(root, absorbed_root)`, or
    /// `None` when they were already together. The larger set's root
    /// survives; on equal sizes the root of `a` does.
    pub fn union(&mut self, a: usize, b: usize) -> Option<(usize, usize)> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        let (root, child) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[child] = root as u32;
        self.size[root] += self.size[child];
        Some((root, child))
    }

    /// Makes `root` (already a root) the root of the set containing `other`.
    pub fn attach(&mut self, root: usize, other: usize) {
        let r = self.find(other);
        if r != root {
            self.parent[r] = root as u32;
            self.size[root] += self.size[r];
        }
    }
}
