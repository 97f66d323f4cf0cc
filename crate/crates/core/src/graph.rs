//! Simple undirected graphs, union–find, and component counting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::BitVector;

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    /// Number of disjoint sets.
    pub fn count(&self) -> usize {
        self.sets
    }

    /// Size of the set containing `x`.
    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// A simple undirected graph on vertices `0..n_vertices`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

/// A subset of a graph's edges, as an indicator over the edge list.
pub type EdgeSubset = BitVector;

impl Graph {
    /// Validates: endpoints in range, no self-loops, no duplicate edges.
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u >= n_vertices || v >= n_vertices {
                return Err(Error::UnknownVertex(u.max(v)));
            }
            if u == v {
                return Err(Error::InvalidModel(format!("self-loop at vertex {u}")));
            }
            let key = (u.min(v), u.max(v));
            if edges[..k].iter().any(|&(a, b)| (a.min(b), a.max(b)) == key) {
                return Err(Error::InvalidModel(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(Self { n_vertices, edges })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self {
            n_vertices: n,
            edges,
        }
    }

    pub fn cycle(n: usize) -> Self {
        let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self {
            n_vertices: n,
            edges,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == v || b == v)
            .count()
    }

    pub fn full_subset(&self) -> EdgeSubset {
        BitVector::ones(self.edges.len())
    }

    pub fn empty_subset(&self) -> EdgeSubset {
        BitVector::zeros(self.edges.len())
    }

    fn union_find(&self, a: &EdgeSubset) -> UnionFind {
        let mut uf = UnionFind::new(self.n_vertices);
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            if a.get(k) {
                uf.union(u, v);
            }
        }
        uf
    }

    /// `k_G(A)`: connected components of `(V, A)`, isolated vertices included.
    pub fn count_components(&self, a: &EdgeSubset) -> Result<usize> {
        self.check_subset(a)?;
        Ok(self.union_find(a).count())
    }

    /// Vertex counts `|V(C)|` of each component of `(V, A)`.
    pub fn component_sizes(&self, a: &EdgeSubset) -> Result<Vec<usize>> {
        self.check_subset(a)?;
        let mut uf = self.union_find(a);
        let mut sizes = Vec::new();
        for v in 0..self.n_vertices {
            if uf.find(v) == v {
                sizes.push(uf.set_size(v));
            }
        }
        Ok(sizes)
    }

    pub fn check_subset(&self, a: &EdgeSubset) -> Result<()> {
        if a.len() != self.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.edges.len(),
                got: a.len(),
            });
        }
        Ok(())
    }

    /// Two-colouring if the graph is bipartite (`true` = second side).
    pub fn bipartition(&self) -> Option<Vec<bool>> {
        let mut side: Vec<Option<bool>> = vec![None; self.n_vertices];
        let mut adj = vec![Vec::new(); self.n_vertices];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for s in 0..self.n_vertices {
            if side[s].is_some() {
                continue;
            }
            side[s] = Some(false);
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                let su = side[u].unwrap();
                for &w in &adj[u] {
                    match side[w] {
                        None => {
                            side[w] = Some(!su);
                            stack.push(w);
                        }
                        Some(sw) if sw == su => return None,
                        _ => {}
                    }
                }
            }
        }
        Some(side.into_iter().map(|s| s.unwrap()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components() {
        let tri = Graph::complete(3);
        assert_eq!(tri.count_components(&tri.empty_subset()).unwrap(), 3);
        assert_eq!(tri.count_components(&tri.full_subset()).unwrap(), 1);
        let path = Graph::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        let a = BitVector::from_bits(&[true, false, false]);
        assert_eq!(path.count_components(&a).unwrap(), 3);
        assert_eq!(path.component_sizes(&a).unwrap().iter().sum::<usize>(), 4);
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(Graph::new(2, vec![(0, 0)]).is_err());
        assert!(Graph::new(2, vec![(0, 1), (1, 0)]).is_err());
        assert!(matches!(
            Graph::new(2, vec![(0, 2)]),
            Err(Error::UnknownVertex(2))
        ));
    }

    #[test]
    fn bipartite_detection() {
        assert!(Graph::cycle(4).bipartition().is_some());
        assert!(Graph::cycle(3).bipartition().is_none());
    }
}
