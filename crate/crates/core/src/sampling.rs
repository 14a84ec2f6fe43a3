//! Dynamic weighted sampling over a growable index set.

use rand::Rng;

use crate::scalar::Real;

/// Implicit binary sum tree over nonnegative weights.
///
/// Leaves live at `cap..2 * cap` of a flat array, internal node `p` holds
/// `tree[2p] + tree[2p + 1]`. A point update recomputes every ancestor from
/// its two children instead of applying a delta, so rounding error never
/// accumulates across updates. [`SumTree::rebuild`] recomputes everything
/// from the leaves and reports how far the old root was off.
///
/// Prefix search resolves ties toward the lower index.
#[derive(Debug, Clone)]
pub struct SumTree<T> {
    tree: Vec<T>,
    len: usize,
    cap: usize,
    updates_since_rebuild: u64,
    rebuild_every: u64,
    audits: Vec<AuditRecord>,
}

/// Outcome of a full recomputation: root before and after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRecord {
    pub root_before: f64,
    pub root_after: f64,
}

impl AuditRecord {
    pub fn relative_drift(&self) -> f64 {
        if self.root_after == 0.0 {
            (self.root_before - self.root_after).abs()
        } else {
            ((self.root_before - self.root_after) / self.root_after).abs()
        }
    }
}

pub const DEFAULT_REBUILD_EVERY: u64 = 1 << 20;

impl<T: Real> Default for SumTree<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> SumTree<T> {
    pub fn new() -> Self {
        Self::with_capacity(1)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        let cap = capacity.max(1).next_power_of_two();
        Self {
            tree: vec![T::zero(); 2 * cap],
            len: 0,
            cap,
            updates_since_rebuild: 0,
            rebuild_every: DEFAULT_REBUILD_EVERY,
            audits: Vec::new(),
        }
    }

    pub fn from_weights(weights: &[T]) -> Self {
        let mut t = Self::with_capacity(weights.len());
        t.tree[t.cap..t.cap + weights.len()].copy_from_slice(weights);
        t.len = weights.len();
        t.recompute_all();
        t
    }

    /// Sets the number of updates between automatic rebuilds (0 disables them).
    pub fn set_rebuild_interval(&mut self, every: u64) {
        self.rebuild_every = every;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> T {
        self.tree[1]
    }

    pub fn get(&self, i: usize) -> T {
        assert!(i < self.len, "index {i} out of range {}", self.len);
        self.tree[self.cap + i]
    }

    pub fn audits(&self) -> &[AuditRecord] {
        &self.audits
    }

    /// Appends a leaf and returns its index.
    pub fn push(&mut self, w: T) -> usize {
        debug_assert!(w >= T::zero());
        if self.len == self.cap {
            self.grow();
        }
        let i = self.len;
        self.len += 1;
        self.set_leaf(i, w);
        i
    }

    pub fn set(&mut self, i: usize, w: T) {
        assert!(i < self.len, "index {i} out of range {}", self.len);
        debug_assert!(w >= T::zero());
        self.set_leaf(i, w);
    }

    pub fn add(&mut self, i: usize, dw: T) {
        let w = self.get(i) + dw;
        self.set(i, w);
    }

    /// Sum of the first `k` weights.
    pub fn prefix_sum(&self, k: usize) -> T {
        let k = k.min(self.len);
        if k == self.len {
            return self.total();
        }
        // Walk from the leaf for index k upward, collecting left siblings.
        let mut node = self.cap + k;
        let mut acc = T::zero();
        while node > 1 {
            if node & 1 == 1 {
                acc += self.tree[node - 1];
            }
            node >>= 1;
        }
        acc
    }

    /// Index `i` with `prefix_sum(i) <= u < prefix_sum(i + 1)`.
    ///
    /// `u` is clamped into `[0, total)`; zero-weight leaves are never
    /// returned while the total is positive. Returns `None` when the total is
    /// not positive.
    pub fn find(&self, u: T) -> Option<usize> {
        if !(self.total() > T::zero()) {
            return None;
        }
        let mut u = u.max(T::zero());
        let mut node = 1;
        while node < self.cap {
            let left = 2 * node;
            let lw = self.tree[left];
            let rw = self.tree[left + 1];
            if u < lw || !(rw > T::zero()) {
                node = left;
            } else {
                u -= lw;
                node = left + 1;
            }
        }
        Some(node - self.cap)
    }

    /// Draws an index with probability proportional to its weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        let u: f64 = rng.gen();
        self.find(T::lit(u) * self.total())
    }

    /// Draws among indices `>= start` proportionally to weight.
    pub fn sample_from<R: Rng + ?Sized>(&self, start: usize, rng: &mut R) -> Option<usize> {
        self.find_from(start, rng.gen())
    }

    /// Inverts the weights of indices `>= start` at the uniform `u` in `[0, 1)`.
    pub fn find_from(&self, start: usize, u: f64) -> Option<usize> {
        let head = self.prefix_sum(start);
        let tail = self.total() - head;
        if !(tail > T::zero()) {
            return None;
        }
        let i = self.find(head + T::lit(u) * tail)?;
        if i >= start {
            return Some(i);
        }
        // Rounding put us just left of the boundary; take the first positive tail leaf.
        (start..self.len).find(|&j| self.get(j) > T::zero())
    }

    /// Recomputes every internal node from the leaves and logs the drift.
    pub fn rebuild(&mut self) -> AuditRecord {
        let before = self.total().as_f64();
        self.recompute_all();
        let rec = AuditRecord {
            root_before: before,
            root_after: self.total().as_f64(),
        };
        self.audits.push(rec);
        self.updates_since_rebuild = 0;
        rec
    }

    /// Root recomputed by direct summation of the leaves, without touching the tree.
    pub fn leaf_sum(&self) -> T {
        self.tree[self.cap..self.cap + self.len].iter().copied().sum()
    }

    fn set_leaf(&mut self, i: usize, w: T) {
        let mut node = self.cap + i;
        self.tree[node] = w;
        while node > 1 {
            node >>= 1;
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
        self.updates_since_rebuild += 1;
        if self.rebuild_every > 0 && self.updates_since_rebuild >= self.rebuild_every {
            self.rebuild();
        }
    }

    fn grow(&mut self) {
        let new_cap = self.cap * 2;
        let mut tree = vec![T::zero(); 2 * new_cap];
        tree[new_cap..new_cap + self.len].copy_from_slice(&self.tree[self.cap..self.cap + self.len]);
        self.tree = tree;
        self.cap = new_cap;
        self.recompute_all();
    }

    fn recompute_all(&mut self) {
        for node in (1..self.cap).rev() {
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
    }
}
