//! Binary sum tree over non-negative site weights.
//!
//! Internal nodes are always recomputed as `left + right` from their
//! children, never updated by deltas, so the stored totals are a pure
//! function of the leaves and cannot drift.

#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    width: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(weights: &[f64]) -> Self {
        let width = weights.len().next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * width];
        nodes[width..width + weights.len()].copy_from_slice(weights);
        for i in (1..width).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self {
            leaves: weights.len(),
            width,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.nodes[self.width + i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(w >= 0.0);
        let mut node = self.width + i;
        self.nodes[node] = w;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf `i` with `Σ_{j<i} w_j <= target < Σ_{j<=i} w_j`, for
    /// `target` in `[0, total)`. Never returns a zero-weight leaf while the
    /// total is positive.
    pub fn find(&self, mut target: f64) -> usize {
        let mut node = 1;
        while node < self.width {
            let left = self.nodes[2 * node];
            let right = self.nodes[2 * node + 1];
            if right == 0.0 || (target < left && left > 0.0) {
                node *= 2;
            } else {
                target -= left;
                node = 2 * node + 1;
            }
        }
        node - self.width
    }
}
