use serde::{Deserialize, Serialize};

/// Directed graph on `p` nodes stored as a dense boolean matrix.
/// `has_edge(from, to)` is true iff `from → to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    p: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: vec![false; p * p],
        }
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = Self::empty(p);
        for &(from, to) in edges {
            a.set(from, to, true);
        }
        a
    }

    pub fn n_nodes(&self) -> usize {
        self.p
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges[from * self.p + to]
    }

    pub fn set(&mut self, from: usize, to: usize, present: bool) {
        self.edges[from * self.p + to] = present;
    }

    /// All edges as `(from, to)`, ordered by source then target.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.p)
            .flat_map(|f| (0..self.p).map(move |t| (f, t)))
            .filter(|&(f, t)| self.has_edge(f, t))
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        (0..self.p).filter(|&f| self.has_edge(f, node)).collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.p).filter(|&t| self.has_edge(node, t)).collect()
    }

    /// Kahn's algorithm; `None` if there is a directed cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indegree: Vec<usize> = (0..self.p).map(|n| self.parents(n).len()).collect();
        let mut ready: Vec<usize> = (0..self.p).filter(|&n| indegree[n] == 0).rev().collect();
        let mut order = Vec::with_capacity(self.p);
        while let Some(n) = ready.pop() {
            order.push(n);
            for c in self.children(n).into_iter().rev() {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        (order.len() == self.p).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// `true` if `a` has a directed path to `b` (a ≠ b).
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut seen = vec![false; self.p];
        let mut stack = self.children(a);
        while let Some(n) = stack.pop() {
            if n == b {
                return true;
            }
            if !seen[n] {
                seen[n] = true;
                stack.extend(self.children(n));
            }
        }
        false
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut out = Self::empty(self.p);
        for (f, t) in self.edges() {
            out.set(perm[f], perm[t], true);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_detection() {
        let chain = Adjacency::from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(chain.topological_order(), Some(vec![0, 1, 2]));
        let cyc = Adjacency::from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
        assert!(!cyc.is_acyclic());
    }

    #[test]
    fn ancestors() {
        let g = Adjacency::from_edges(4, &[(0, 1), (1, 2)]);
        assert!(g.is_ancestor(0, 2));
        assert!(!g.is_ancestor(2, 0));
        assert!(!g.is_ancestor(0, 3));
    }
}
