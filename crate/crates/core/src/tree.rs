//! Spanning trees over point indices and their directed Euler traversals.

use alloc::vec;
use alloc::vec::Vec;

use crate::bits::IntMatrix;
use crate::error::{Error, Result};

/// Undirected edge between 1-based vertices, stored with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WeightedEdge {
    pub u: usize,
    pub v: usize,
    pub weight: u64,
}

impl WeightedEdge {
    pub fn new(a: usize, b: usize, weight: u64) -> Self {
        debug_assert_ne!(a, b);
        Self {
            u: a.min(b),
            v: a.max(b),
            weight,
        }
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.u, self.v)
    }

    pub fn touches(&self, x: usize) -> bool {
        self.u == x || self.v == x
    }
}

/// Spanning tree on `1..=n`. Edges are kept sorted by `(u, v)`; the i-th edge in that
/// order is "edge i" for every protocol that numbers tree edges.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Tree {
    n: usize,
    edges: Vec<WeightedEdge>,
}

impl Tree {
    /// Validates that `edges` form a spanning tree of `1..=n`.
    pub fn new(n: usize, mut edges: Vec<WeightedEdge>) -> Result<Self> {
        if n == 0 || edges.len() + 1 != n {
            return Err(Error::InvalidMatrix("a spanning tree on n vertices has n-1 edges"));
        }
        let mut dsu = Dsu::new(n);
        for e in &mut edges {
            if e.u == e.v || e.u == 0 || e.v == 0 || e.u.max(e.v) > n {
                return Err(Error::InvalidMatrix("tree edge endpoint out of range"));
            }
            *e = WeightedEdge::new(e.u, e.v, e.weight);
            if !dsu.union(e.u - 1, e.v - 1) {
                return Err(Error::InvalidMatrix("tree edges contain a cycle"));
            }
        }
        edges.sort_unstable_by_key(|e| (e.u, e.v));
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges in the canonical `(u, v)` order.
    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    /// Edge number `i` (1-based) in the canonical order.
    pub fn edge(&self, i: usize) -> &WeightedEdge {
        &self.edges[i - 1]
    }

    pub fn cost(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// 1-based index of the edge joining `a` and `b`, if present.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by_key(&key, |e| (e.u, e.v))
            .ok()
            .map(|i| i + 1)
    }

    /// Same topology with new weights taken from `weight(u, v)`.
    pub fn reweighted(&self, mut weight: impl FnMut(usize, usize) -> u64) -> Self {
        Self {
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|e| WeightedEdge::new(e.u, e.v, weight(e.u, e.v)))
                .collect(),
        }
    }

    /// Sorted neighbour lists, index 0 unused.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + 1];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

pub(crate) struct Dsu {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl Dsu {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Minimum spanning tree of the complete graph weighted by `h`.
///
/// Kruskal over edges ordered by `(weight, min endpoint, max endpoint)`, so among
/// equal-cost trees the lexicographically smallest edges win.
pub fn local_mst(h: &IntMatrix) -> Result<Tree> {
    let n = h.n();
    if n == 0 {
        return Err(Error::InvalidMatrix("empty distance matrix"));
    }
    if !h.is_symmetric() {
        return Err(Error::InvalidMatrix("distance matrix is not symmetric"));
    }
    if (1..=n).any(|i| h.get(i, i) != 0) {
        return Err(Error::InvalidMatrix("distance matrix has a nonzero diagonal"));
    }
    let mut candidates: Vec<(u64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for u in 1..=n {
        for v in u + 1..=n {
            candidates.push((h.get(u, v), u, v));
        }
    }
    candidates.sort_unstable();
    let mut dsu = Dsu::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    for (w, u, v) in candidates {
        if dsu.union(u - 1, v - 1) {
            edges.push(WeightedEdge::new(u, v, w));
            if edges.len() + 1 == n {
                break;
            }
        }
    }
    Tree::new(n, edges)
}

/// Directed Euler tour of a tree: `2(n−1)` directed edges with per-edge costs.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Traversal {
    pub directed_edges: Vec<(usize, usize)>,
    pub costs: Vec<u64>,
}

impl Traversal {
    pub fn len(&self) -> usize {
        self.directed_edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directed_edges.is_empty()
    }

    pub fn total_cost(&self) -> u64 {
        self.costs.iter().sum()
    }

    pub fn start(&self) -> Option<usize> {
        self.directed_edges.first().map(|&(a, _)| a)
    }
}

/// Depth-first Euler tour from `root`, children in ascending vertex order.
/// Each directed edge costs the weight of its tree edge.
pub fn euler_traversal(tree: &Tree, root: usize) -> Result<Traversal> {
    let n = tree.n();
    if root == 0 || root > n {
        return Err(Error::InvalidMatrix("traversal root out of range"));
    }
    let adj = tree.adjacency();
    let weight = |a: usize, b: usize| -> u64 {
        let idx = tree.edge_index(a, b).expect("adjacent vertices share an edge");
        tree.edge(idx).weight
    };
    let mut directed = Vec::with_capacity(2 * (n - 1));
    let mut costs = Vec::with_capacity(2 * (n - 1));
    // (vertex, parent, next child position)
    let mut stack: Vec<(usize, usize, usize)> = vec![(root, 0, 0)];
    while let Some(top) = stack.last_mut() {
        let (v, parent, pos) = *top;
        let next = adj[v][pos..].iter().position(|&c| c != parent).map(|p| pos + p);
        match next {
            Some(i) => {
                top.2 = i + 1;
                let child = adj[v][i];
                let w = weight(v, child);
                directed.push((v, child));
                costs.push(w);
                stack.push((child, v, 0));
            }
            None => {
                stack.pop();
                if parent != 0 {
                    directed.push((v, parent));
                    costs.push(weight(v, parent));
                }
            }
        }
    }
    Ok(Traversal {
        directed_edges: directed,
        costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{distance_matrix_via_products, BitVector, BooleanMatrix};

    fn points(rows: &[&str]) -> IntMatrix {
        let rows: Vec<BitVector> = rows.iter().map(|r| BitVector::parse01(r).unwrap()).collect();
        let n = rows.len();
        IntMatrix::from_fn(n, |i, j| {
            crate::bits::hamming_distance(&rows[i - 1], &rows[j - 1]).unwrap() as u64
        })
    }

    #[test]
    fn mst_unique_optimum() {
        let t = local_mst(&points(&["00", "01", "11"])).unwrap();
        let e: Vec<_> = t.edges().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(e, vec![(1, 2), (2, 3)]);
        assert_eq!(t.cost(), 2);
    }

    #[test]
    fn mst_zero_cost_ties_give_star_on_vertex_one() {
        let p = BooleanMatrix::from_rows(vec![BitVector::parse01("1010").unwrap(); 4]).unwrap();
        let t = local_mst(&distance_matrix_via_products(&p)).unwrap();
        let e: Vec<_> = t.edges().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(e, vec![(1, 2), (1, 3), (1, 4)]);
        assert_eq!(t.cost(), 0);
    }

    #[test]
    fn mst_rejects_asymmetric_input() {
        let mut h = IntMatrix::zeros(3);
        h.set(1, 2, 1);
        assert!(matches!(local_mst(&h), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn traversal_examples() {
        let star = Tree::new(3, vec![WeightedEdge::new(1, 2, 1), WeightedEdge::new(1, 3, 1)]).unwrap();
        assert_eq!(
            euler_traversal(&star, 1).unwrap().directed_edges,
            vec![(1, 2), (2, 1), (1, 3), (3, 1)]
        );
        let pair = Tree::new(2, vec![WeightedEdge::new(1, 2, 5)]).unwrap();
        let t = euler_traversal(&pair, 1).unwrap();
        assert_eq!(t.directed_edges, vec![(1, 2), (2, 1)]);
        assert_eq!(t.costs, vec![5, 5]);
        let path = Tree::new(3, vec![WeightedEdge::new(2, 3, 1), WeightedEdge::new(1, 2, 1)]).unwrap();
        assert_eq!(
            euler_traversal(&path, 1).unwrap().directed_edges,
            vec![(1, 2), (2, 3), (3, 2), (2, 1)]
        );
    }

    #[test]
    fn tree_validation() {
        assert!(Tree::new(3, vec![WeightedEdge::new(1, 2, 0)]).is_err());
        assert!(Tree::new(
            4,
            vec![
                WeightedEdge::new(1, 2, 0),
                WeightedEdge::new(2, 1, 0),
                WeightedEdge::new(3, 4, 0)
            ]
        )
        .is_err());
        let t = Tree::new(1, vec![]).unwrap();
        assert!(euler_traversal(&t, 1).unwrap().is_empty());
    }

    #[test]
    fn edge_numbering_is_lexicographic() {
        let t = Tree::new(
            4,
            vec![
                WeightedEdge::new(4, 3, 0),
                WeightedEdge::new(2, 1, 0),
                WeightedEdge::new(1, 3, 0),
            ],
        )
        .unwrap();
        assert_eq!(t.edge(1).endpoints(), (1, 2));
        assert_eq!(t.edge(2).endpoints(), (1, 3));
        assert_eq!(t.edge(3).endpoints(), (3, 4));
        assert_eq!(t.edge_index(4, 3), Some(3));
        assert_eq!(t.edge_index(2, 4), None);
    }
}
