//! Rooted-tree order conditions `b^T Φ(τ) = 1/γ(τ)`.

use std::collections::BTreeSet;

/// Highest order for which conditions are checked.
pub const MAX_VERIFIED_ORDER: u32 = 5;

/// A rooted tree stored as its sorted list of subtrees.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RootedTree(Vec<RootedTree>);

impl RootedTree {
    pub fn leaf() -> Self {
        RootedTree(Vec::new())
    }

    pub fn order(&self) -> u32 {
        1 + self.0.iter().map(RootedTree::order).sum::<u32>()
    }

    /// Tree density γ(τ).
    pub fn density(&self) -> f64 {
        self.order() as f64 * self.0.iter().map(RootedTree::density).product::<f64>()
    }

    fn canonical(mut self) -> Self {
        self.0 = self.0.into_iter().map(RootedTree::canonical).collect();
        self.0.sort();
        self
    }

    /// All trees obtained by attaching one new leaf somewhere in `self`.
    fn grow(&self) -> Vec<RootedTree> {
        let mut out = Vec::new();
        let mut with_leaf = self.clone();
        with_leaf.0.push(RootedTree::leaf());
        out.push(with_leaf);
        for (i, child) in self.0.iter().enumerate() {
            for grown in child.grow() {
                let mut t = self.clone();
                t.0[i] = grown;
                out.push(t);
            }
        }
        out
    }

    /// Φ(τ) evaluated stage-wise.
    fn elementary_weights(&self, a: &[Vec<f64>]) -> Vec<f64> {
        let s = a.len();
        let mut phi = vec![1.0; s];
        for child in &self.0 {
            let inner = child.elementary_weights(a);
            for (i, row) in a.iter().enumerate() {
                phi[i] *= row.iter().zip(&inner).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        phi
    }
}

/// All distinct rooted trees with `1 <= order <= max_order`, grouped by order.
pub fn rooted_trees(max_order: u32) -> Vec<Vec<RootedTree>> {
    let mut levels: Vec<Vec<RootedTree>> = Vec::new();
    if max_order == 0 {
        return levels;
    }
    levels.push(vec![RootedTree::leaf()]);
    for _ in 1..max_order {
        let next: BTreeSet<RootedTree> = levels
            .last()
            .unwrap()
            .iter()
            .flat_map(RootedTree::grow)
            .map(RootedTree::canonical)
            .collect();
        levels.push(next.into_iter().collect());
    }
    levels
}

pub(super) fn satisfies(a: &[Vec<f64>], weights: &[f64], order: u32, tol: f64) -> bool {
    rooted_trees(order).iter().flatten().all(|tree| {
        let phi = tree.elementary_weights(a);
        let lhs: f64 = weights.iter().zip(&phi).map(|(w, p)| w * p).sum();
        (lhs - 1.0 / tree.density()).abs() <= tol
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_counts_through_order_five() {
        let counts: Vec<usize> = rooted_trees(5).iter().map(Vec::len).collect();
        assert_eq!(counts, vec![1, 1, 2, 4, 9]);
    }

    #[test]
    fn densities_of_small_trees() {
        let levels = rooted_trees(3);
        assert_eq!(levels[0][0].density(), 1.0);
        assert_eq!(levels[1][0].density(), 2.0);
        let mut d3: Vec<f64> = levels[2].iter().map(RootedTree::density).collect();
        d3.sort_by(f64::total_cmp);
        // bushy tree [•,•] has γ = 3, tall tree [[•]] has γ = 6
        assert_eq!(d3, vec![3.0, 6.0]);
    }

    #[test]
    fn forward_euler_is_first_order() {
        let a = vec![vec![0.0]];
        assert!(satisfies(&a, &[1.0], 1, 1e-15));
        assert!(!satisfies(&a, &[1.0], 2, 1e-15));
    }
}
