/// Binary sum tree over a fixed number of leaves, with a parallel max tree.
///
/// Internal nodes are recomputed from their children on every write rather
/// than adjusted by deltas, so the root never drifts from the leaf sum.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    sum: Vec<f64>,
    max: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self { leaves, sum: vec![0.0; 2 * leaves], max: vec![0.0; 2 * leaves] }
    }

    pub fn total(&self) -> f64 {
        self.sum[1]
    }

    /// Largest value stored in the max tree.
    pub fn max(&self) -> f64 {
        self.max[1]
    }

    pub fn get(&self, index: usize) -> f64 {
        self.sum[self.leaves + index]
    }

    /// Sets the sampling mass of leaf `index` and its max-tree key.
    pub fn set(&mut self, index: usize, mass: f64, key: f64) {
        let mut node = self.leaves + index;
        self.sum[node] = mass;
        self.max[node] = key;
        while node > 1 {
            node /= 2;
            self.sum[node] = self.sum[2 * node] + self.sum[2 * node + 1];
            self.max[node] = self.max[2 * node].max(self.max[2 * node + 1]);
        }
    }

    /// Leaf whose cumulative-mass interval contains `mass`, for
    /// `0 <= mass < total()`. Never returns a zero-mass leaf while the
    /// total is positive.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if mass < self.sum[left] || self.sum[left + 1] <= 0.0 {
                node = left;
            } else {
                mass -= self.sum[left];
                node = left + 1;
            }
        }
        node - self.leaves
    }

    /// Sum of leaves recomputed from scratch, for consistency checks.
    pub fn leaf_sum(&self) -> f64 {
        self.sum[self.leaves..].iter().sum()
    }
}
