//! Undirected graphs, chordality and clique decompositions.
//!
//! Node labels are 1-based throughout the public API: a graph on `d` nodes
//! has nodes `1..=d`.

use crate::error::{Error, Result};
use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

/// Simple undirected graph on nodes `1..=d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UGraph {
    dim: usize,
    /// Neighbour sets, indexed by `node - 1`, holding 1-based labels.
    adj: Vec<BTreeSet<usize>>,
}

impl UGraph {
    /// Graph with `d` nodes and no edges.
    pub fn new(d: usize) -> Self {
        UGraph {
            dim: d,
            adj: vec![BTreeSet::new(); d],
        }
    }

    pub fn complete(d: usize) -> Self {
        let mut g = UGraph::new(d);
        for i in 1..=d {
            for j in (i + 1)..=d {
                g.adj[i - 1].insert(j);
                g.adj[j - 1].insert(i);
            }
        }
        g
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = UGraph::new(d);
        for &(i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v == 0 || v > self.dim {
            Err(Error::NodeOutOfRange {
                node: v,
                dim: self.dim,
            })
        } else {
            Ok(())
        }
    }

    /// Adds `{i, j}`; returns whether the edge was new. Self-loops are rejected.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(Error::InvalidArgument(alloc::format!(
                "self-loop at node {i}"
            )));
        }
        let fresh = self.adj[i - 1].insert(j);
        self.adj[j - 1].insert(i);
        Ok(fresh)
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        if i == 0 || j == 0 || i > self.dim || j > self.dim {
            return false;
        }
        let had = self.adj[i - 1].remove(&j);
        self.adj[j - 1].remove(&i);
        had
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i >= 1 && i <= self.dim && self.adj[i - 1].contains(&j)
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[v - 1].iter().copied()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v - 1].len()
    }

    /// Edges as canonical pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..=self.dim {
            for &j in self.adj[i - 1].range((i + 1)..) {
                out.push((i, j));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Whether every pair of nodes in `nodes` is adjacent.
    pub fn is_clique(&self, nodes: &[usize]) -> bool {
        nodes
            .iter()
            .enumerate()
            .all(|(a, &i)| nodes[a + 1..].iter().all(|&j| self.has_edge(i, j)))
    }

    /// Connected components of the subgraph induced by `nodes`, each sorted.
    pub fn components_within(&self, nodes: &[usize]) -> Vec<Vec<usize>> {
        let inside: BTreeSet<usize> = nodes.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in &inside {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = vec![start];
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for w in self.neighbors(v) {
                    if inside.contains(&w) && seen.insert(w) {
                        comp.push(w);
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Breadth-first shortest path from `i` to `j` (inclusive), smallest labels first on ties.
    pub fn shortest_path(&self, i: usize, j: usize) -> Option<Vec<usize>> {
        let mut prev = vec![0usize; self.dim + 1];
        let mut seen = vec![false; self.dim + 1];
        let mut queue = VecDeque::new();
        seen[i] = true;
        queue.push_back(i);
        while let Some(v) = queue.pop_front() {
            if v == j {
                let mut path = vec![j];
                let mut cur = j;
                while cur != i {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    prev[w] = v;
                    queue.push_back(w);
                }
            }
        }
        None
    }
}

/// Maximal cliques `C₁..C_m` in running-intersection order with separators
/// `D₂..D_m`; `separators[i - 1]` is the separator of `cliques[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CliqueDecomposition {
    pub cliques: Vec<Vec<usize>>,
    pub separators: Vec<Vec<usize>>,
}

impl CliqueDecomposition {
    /// Checks the running intersection property directly: each separator is
    /// the intersection with all earlier cliques and lies inside one of them.
    pub fn satisfies_rip(&self) -> bool {
        if self.separators.len() + 1 != self.cliques.len().max(1) {
            return false;
        }
        let mut union: BTreeSet<usize> = BTreeSet::new();
        for (i, clique) in self.cliques.iter().enumerate() {
            if i > 0 {
                let inter: Vec<usize> = clique
                    .iter()
                    .copied()
                    .filter(|v| union.contains(v))
                    .collect();
                let mut sep = self.separators[i - 1].clone();
                sep.sort_unstable();
                if inter != sep {
                    return false;
                }
                if !self.cliques[..i]
                    .iter()
                    .any(|c| sep.iter().all(|v| c.contains(v)))
                {
                    return false;
                }
            }
            union.extend(clique.iter().copied());
        }
        true
    }

    /// Number of free pairwise parameters, `½ Σ_C |C|(|C| − 1)`.
    pub fn pair_count(&self) -> usize {
        self.cliques
            .iter()
            .map(|c| c.len() * (c.len() - 1) / 2)
            .sum()
    }
}

struct Mcs {
    order: Vec<usize>,
    /// Earlier-visited neighbours of each node, indexed by label.
    prev: Vec<Vec<usize>>,
}

/// Maximum cardinality search from node 1, ties broken by the smallest label.
fn max_cardinality_search(g: &UGraph) -> Mcs {
    let d = g.dim();
    let mut weight = vec![0usize; d + 1];
    let mut visited = vec![false; d + 1];
    let mut order = Vec::with_capacity(d);
    let mut prev = vec![Vec::new(); d + 1];
    for _ in 0..d {
        let mut best = 0;
        for v in 1..=d {
            if !visited[v] && (best == 0 || weight[v] > weight[best]) {
                best = v;
            }
        }
        visited[best] = true;
        order.push(best);
        for w in g.neighbors(best) {
            if visited[w] {
                prev[best].push(w);
            } else {
                weight[w] += 1;
            }
        }
        prev[best].sort_unstable();
    }
    Mcs { order, prev }
}

fn zero_fill(g: &UGraph, mcs: &Mcs) -> bool {
    let d = g.dim();
    let mut position = vec![0usize; d + 1];
    for (p, &v) in mcs.order.iter().enumerate() {
        position[v] = p;
    }
    for &v in &mcs.order {
        let earlier = &mcs.prev[v];
        let Some(&last) = earlier.iter().max_by_key(|&&u| position[u]) else {
            continue;
        };
        for &u in earlier {
            if u != last && !g.has_edge(u, last) {
                return false;
            }
        }
    }
    true
}

/// Perfect elimination ordering if `g` is chordal.
pub fn elimination_ordering(g: &UGraph) -> Option<Vec<usize>> {
    let mcs = max_cardinality_search(g);
    if zero_fill(g, &mcs) {
        let mut peo = mcs.order;
        peo.reverse();
        Some(peo)
    } else {
        None
    }
}

/// Whether `g` is decomposable (chordal).
pub fn is_decomposable(g: &UGraph) -> bool {
    elimination_ordering(g).is_some()
}

pub fn is_connected(g: &UGraph) -> bool {
    let d = g.dim();
    if d == 0 {
        return true;
    }
    g.components_within(&(1..=d).collect::<Vec<_>>()).len() == 1
}

/// Maximal cliques and separators in running-intersection order.
pub fn clique_decomposition(g: &UGraph) -> Result<CliqueDecomposition> {
    if !is_connected(g) {
        return Err(Error::Disconnected);
    }
    let mcs = max_cardinality_search(g);
    if !zero_fill(g, &mcs) {
        return Err(Error::NotDecomposable);
    }
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    let mut separators = Vec::new();
    let mut last_label = 0usize;
    for (p, &v) in mcs.order.iter().enumerate() {
        let label = mcs.prev[v].len();
        if p == 0 {
            cliques.push(vec![v]);
        } else if label <= last_label {
            let mut c = mcs.prev[v].clone();
            separators.push(c.clone());
            c.push(v);
            cliques.push(c);
        } else {
            cliques.last_mut().expect("first clique exists").push(v);
        }
        last_label = label;
    }
    for c in &mut cliques {
        c.sort_unstable();
    }
    Ok(CliqueDecomposition {
        cliques,
        separators,
    })
}

/// Decomposition of a block graph, or the reason it is not one.
pub fn block_decomposition(g: &UGraph, max_clique: usize) -> Result<CliqueDecomposition> {
    let dec = clique_decomposition(g)?;
    if let Some(sep) = dec.separators.iter().find(|s| s.len() != 1) {
        return Err(Error::NotBlockGraph {
            separator: sep.clone(),
        });
    }
    if let Some(c) = dec.cliques.iter().find(|c| c.len() > max_clique) {
        return Err(Error::CliqueTooLarge {
            clique: c.clone(),
            max: max_clique,
        });
    }
    Ok(dec)
}

/// Connected, decomposable, singleton separators and cliques of at most `max_clique` nodes.
pub fn is_block_graph(g: &UGraph, max_clique: usize) -> bool {
    block_decomposition(g, max_clique).is_ok()
}

/// Cut nodes on the clique path from `i` to `j` in a block graph (empty within one clique).
pub fn separator_path(g: &UGraph, i: usize, j: usize) -> Result<Vec<usize>> {
    g.check_node(i)?;
    g.check_node(j)?;
    block_decomposition(g, usize::MAX)?;
    Ok(geodesic_interior(g, i, j))
}

/// Interior of the unique geodesic; block graphs are geodetic so no check is repeated here.
pub(crate) fn geodesic_interior(g: &UGraph, i: usize, j: usize) -> Vec<usize> {
    if i == j {
        return Vec::new();
    }
    let path = g.shortest_path(i, j).expect("block graphs are connected");
    path[1..path.len() - 1].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn figure5() -> UGraph {
        let mut g = UGraph::new(6);
        g.add_edge(1, 2).unwrap();
        for (i, j) in [
            (2, 3),
            (2, 4),
            (2, 5),
            (3, 4),
            (3, 5),
            (4, 5),
            (4, 6),
            (5, 6),
        ] {
            g.add_edge(i, j).unwrap();
        }
        g
    }

    fn tree29() -> UGraph {
        UGraph::from_edges(5, &[(1, 2), (1, 3), (2, 4), (2, 5)]).unwrap()
    }

    #[test]
    fn connectivity() {
        assert!(is_connected(
            &UGraph::from_edges(4, &[(1, 2), (2, 3), (3, 4)]).unwrap()
        ));
        assert!(!is_connected(&UGraph::new(4)));
        assert!(is_connected(&figure5()));
    }

    #[test]
    fn chordality() {
        assert!(is_decomposable(&figure5()));
        let cycle = UGraph::from_edges(4, &[(1, 2), (2, 4), (4, 3), (3, 1)]).unwrap();
        assert!(!is_decomposable(&cycle));
        assert!(is_decomposable(&UGraph::complete(4)));
        let peo = elimination_ordering(&figure5()).unwrap();
        assert_eq!(peo.len(), 6);
    }

    #[test]
    fn figure5_decomposition() {
        let dec = clique_decomposition(&figure5()).unwrap();
        assert_eq!(
            dec.cliques,
            vec![vec![1, 2], vec![2, 3, 4, 5], vec![4, 5, 6]]
        );
        assert_eq!(dec.separators, vec![vec![2], vec![4, 5]]);
        assert!(dec.satisfies_rip());
        assert!(!is_block_graph(&figure5(), 6));
        assert_eq!(
            block_decomposition(&figure5(), 6),
            Err(Error::NotBlockGraph {
                separator: vec![4, 5]
            })
        );
    }

    #[test]
    fn small_decompositions() {
        let chain = UGraph::from_edges(3, &[(1, 2), (2, 3)]).unwrap();
        let dec = clique_decomposition(&chain).unwrap();
        assert_eq!(dec.cliques, vec![vec![1, 2], vec![2, 3]]);
        assert_eq!(dec.separators, vec![vec![2]]);
        let k3 = clique_decomposition(&UGraph::complete(3)).unwrap();
        assert_eq!(k3.cliques, vec![vec![1, 2, 3]]);
        assert!(k3.separators.is_empty());
        assert_eq!(
            clique_decomposition(&UGraph::new(3)),
            Err(Error::Disconnected)
        );
    }

    #[test]
    fn separator_paths() {
        let chain = UGraph::from_edges(3, &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(separator_path(&chain, 1, 3).unwrap(), vec![2]);
        assert_eq!(separator_path(&tree29(), 3, 5).unwrap(), vec![1, 2]);
        assert!(separator_path(&tree29(), 1, 2).unwrap().is_empty());
        assert!(matches!(
            separator_path(&tree29(), 1, 9),
            Err(Error::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn triangle_chain_is_block_graph() {
        // Three triangles glued at single nodes plus pendant edges.
        let g = UGraph::from_edges(
            8,
            &[
                (1, 2),
                (2, 3),
                (1, 3),
                (3, 4),
                (4, 5),
                (3, 5),
                (5, 6),
                (6, 7),
                (7, 8),
                (6, 8),
            ],
        )
        .unwrap();
        assert!(is_block_graph(&g, 3));
        assert!(!is_block_graph(&g, 2));
    }

    /// Random tree via a Prüfer-like parent draw.
    fn arb_tree() -> impl Strategy<Value = UGraph> {
        (2usize..12).prop_flat_map(|d| {
            proptest::collection::vec(any::<proptest::sample::Index>(), d - 1).prop_map(move |ps| {
                let mut g = UGraph::new(d);
                for (k, p) in ps.iter().enumerate() {
                    let child = k + 2;
                    g.add_edge(child, p.index(child - 1) + 1).unwrap();
                }
                g
            })
        })
    }

    /// Random chordal graph: each new node attaches to a clique of the current graph.
    fn arb_chordal() -> impl Strategy<Value = UGraph> {
        (
            2usize..12,
            proptest::collection::vec((any::<proptest::sample::Index>(), 1usize..4), 11),
        )
            .prop_map(|(d, picks)| {
                let mut g = UGraph::new(d);
                let mut cliques: Vec<Vec<usize>> = vec![vec![1]];
                for v in 2..=d {
                    let (idx, size) = picks[v - 2];
                    let base = idx.get(&cliques).clone();
                    let attach: Vec<usize> =
                        base.iter().copied().take(size.min(base.len())).collect();
                    for &u in &attach {
                        g.add_edge(u, v).unwrap();
                    }
                    let mut c = attach.clone();
                    c.push(v);
                    cliques.push(c);
                }
                g
            })
    }

    proptest! {
        #[test]
        fn trees_are_block_graphs(g in arb_tree()) {
            prop_assert!(is_block_graph(&g, 2));
            let dec = clique_decomposition(&g).unwrap();
            prop_assert!(dec.satisfies_rip());
            prop_assert_eq!(dec.cliques.len(), g.dim() - 1);
        }

        #[test]
        fn chordal_decomposition_is_valid(g in arb_chordal()) {
            let dec = clique_decomposition(&g).unwrap();
            prop_assert!(dec.satisfies_rip());
            let covered: BTreeSet<usize> = dec.cliques.iter().flatten().copied().collect();
            prop_assert_eq!(covered.len(), g.dim());
            for (i, j) in g.edges() {
                prop_assert!(dec.cliques.iter().any(|c| c.contains(&i) && c.contains(&j)));
            }
            for c in &dec.cliques {
                prop_assert!(g.is_clique(c));
            }
            if is_block_graph(&g, usize::MAX) {
                for (i, j) in g.edges() {
                    prop_assert_eq!(dec.cliques.iter().filter(|c| c.contains(&i) && c.contains(&j)).count(), 1);
                }
            }
        }

        #[test]
        fn long_cycles_are_not_chordal(n in 4usize..12, chord_free in any::<bool>()) {
            let mut g = UGraph::new(n + 2);
            for i in 1..=n {
                g.add_edge(i, i % n + 1).unwrap();
            }
            // Pendant nodes do not create chords.
            if chord_free {
                g.add_edge(1, n + 1).unwrap();
            }
            g.add_edge(2, n + 2).unwrap();
            prop_assert!(!is_decomposable(&g));
        }
    }
}
