//! Complete binary tree of partial sums for O(log n) weighted selection.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub(crate) struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        let leaves = len.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Sets a leaf and recomputes its ancestors from their children, so the
    /// root never accumulates incremental rounding drift.
    pub fn set(&mut self, index: usize, value: f64) {
        let mut node = self.leaves + index;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative interval contains `target` in `[0, total)`.
    /// Never returns a zero-weight leaf when the total is positive.
    pub fn find(&self, mut target: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            let right = left + 1;
            if (target < self.nodes[left] || self.nodes[right] <= 0.0) && self.nodes[left] > 0.0 {
                node = left;
            } else {
                target -= self.nodes[left];
                node = right;
            }
        }
        node - self.leaves
    }
}
