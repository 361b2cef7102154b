//! Structure learning: pairwise likelihood weights, minimum spanning trees,
//! greedy forward selection within block graphs, and AIC-based selection.

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::graphs::{block_decomposition, is_block_graph, is_connected, UGraph};
use crate::inference::{
    assemble_report, fit_clique, marginal_loglik, CliqueFit, ExceedanceSample, FitOptions,
    FitReport,
};
use crate::models::FamilyTag;
use crate::numerics::Matrix;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Symmetric non-negative edge weights with zero diagonal, plus the pair fits
/// they were computed from (when learned from data).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    weights: Matrix,
    fits: BTreeMap<(usize, usize), CliqueFit>,
}

impl WeightMatrix {
    pub fn new(weights: Matrix) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::DimensionMismatch {
                expected: weights.rows(),
                found: weights.cols(),
            });
        }
        let d = weights.rows();
        for i in 0..d {
            if weights[(i, i)] != 0.0 {
                return Err(Error::NonZeroDiagonal { index: i + 1 });
            }
            for j in 0..d {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::NegativeEntry {
                        row: i + 1,
                        col: j + 1,
                    });
                }
                if w != weights[(j, i)] {
                    return Err(Error::Asymmetric {
                        row: i + 1,
                        col: j + 1,
                    });
                }
            }
        }
        Ok(WeightMatrix {
            weights,
            fits: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }

    /// Weight of the edge `{i, j}` (1-based).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i - 1, j - 1)]
    }

    /// Fitted pair model behind `w_ij`, if learned from data.
    pub fn fit(&self, i: usize, j: usize) -> Option<&CliqueFit> {
        self.fits.get(&(i.min(j), i.max(j)))
    }
}

/// `w_ij = −L(θ̂_ij) − 2Σ_{y_i>1} log y_i − 2Σ_{y_j>1} log y_j` for every pair,
/// shifted by a common constant when needed so all weights are positive.
pub fn pairwise_weights<E: Executor>(
    sample: &ExceedanceSample,
    tag: FamilyTag,
    exec: &E,
    opts: &FitOptions,
) -> Result<WeightMatrix> {
    let d = sample.dim();
    let pairs: Vec<(usize, usize)> = (1..=d)
        .flat_map(|i| ((i + 1)..=d).map(move |j| (i, j)))
        .collect();
    let fits = exec.map(pairs.clone(), |(i, j)| {
        fit_clique(sample, &[i, j], tag, None, opts)
    });
    let margins: Vec<f64> = (1..=d).map(|v| marginal_loglik(sample, v)).collect();
    let mut raw = Matrix::zeros(d, d);
    let mut store = BTreeMap::new();
    for (&(i, j), fit) in pairs.iter().zip(fits) {
        let fit = fit?;
        let w = -fit.loglik + margins[i - 1] + margins[j - 1];
        if !w.is_finite() {
            return Err(Error::DegenerateSample(format!(
                "non-finite weight for pair ({i}, {j})"
            )));
        }
        raw[(i - 1, j - 1)] = w;
        raw[(j - 1, i - 1)] = w;
        store.insert((i, j), fit);
    }
    let min = pairs
        .iter()
        .map(|&(i, j)| raw[(i - 1, j - 1)])
        .fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        let shift = 1.0 - min;
        for &(i, j) in &pairs {
            raw[(i - 1, j - 1)] += shift;
            raw[(j - 1, i - 1)] += shift;
        }
    }
    let mut out = WeightMatrix::new(raw)?;
    out.fits = store;
    Ok(out)
}

/// Edges `i < j` ordered by `(w_ij, i, j)`.
fn sorted_edges(w: &WeightMatrix) -> Vec<(f64, usize, usize)> {
    let d = w.dim();
    let mut edges: Vec<(f64, usize, usize)> = (1..=d)
        .flat_map(|i| ((i + 1)..=d).map(move |j| (i, j)))
        .map(|(i, j)| (w.get(i, j), i, j))
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    edges
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
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

/// Kruskal's algorithm; ties are broken by `(w, i, j)`.
pub fn minimum_spanning_tree(w: &WeightMatrix) -> UGraph {
    let d = w.dim();
    let mut tree = UGraph::new(d);
    let mut sets = UnionFind::new(d);
    for (_, i, j) in sorted_edges(w) {
        if sets.union(i - 1, j - 1) {
            tree.add_edge(i, j).expect("nodes in range");
            if tree.edge_count() + 1 == d {
                break;
            }
        }
    }
    tree
}

/// Prim's algorithm from node 1, used as an independent check of Kruskal.
pub fn prim_spanning_tree(w: &WeightMatrix) -> UGraph {
    let d = w.dim();
    let mut tree = UGraph::new(d);
    if d == 0 {
        return tree;
    }
    let mut inside = vec![false; d];
    inside[0] = true;
    // Cheapest link into the tree for each outside node: (weight, tree node).
    let mut link: Vec<(f64, usize)> = (0..d).map(|v| (w.weights[(0, v)], 0)).collect();
    for _ in 1..d {
        let key = |v: usize, link: &[(f64, usize)]| {
            let (wt, u) = link[v];
            (wt, u.min(v), u.max(v))
        };
        let next = (0..d)
            .filter(|&v| !inside[v])
            .min_by(|&a, &b| {
                let (ka, kb) = (key(a, &link), key(b, &link));
                ka.0.total_cmp(&kb.0)
                    .then(ka.1.cmp(&kb.1))
                    .then(ka.2.cmp(&kb.2))
            })
            .expect("an outside node remains");
        inside[next] = true;
        tree.add_edge(link[next].1 + 1, next + 1)
            .expect("nodes in range");
        for v in 0..d {
            if !inside[v] {
                let cand = (w.weights[(next, v)], next);
                let better = cand.0 < link[v].0
                    || (cand.0 == link[v].0
                        && (next.min(v), next.max(v)) < (link[v].1.min(v), link[v].1.max(v)));
                if better {
                    link[v] = cand;
                }
            }
        }
    }
    tree
}

/// One model on a forward-selection path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub edges: Vec<(usize, usize)>,
    /// Edge added to reach this model (`None` for the base tree).
    pub added: Option<(usize, usize)>,
    pub report: FitReport,
}

/// Nested sequence of block-graph models from a base tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPath {
    pub steps: Vec<PathStep>,
}

impl ModelPath {
    /// Index of the AIC-minimal model; ties go to the sparser one.
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (k, s) in self.steps.iter().enumerate() {
            if s.report.aic < self.steps[best].report.aic {
                best = k;
            }
        }
        best
    }
}

/// The AIC-minimal step of a non-empty path.
pub fn select_model(path: &ModelPath) -> Result<&PathStep> {
    if path.steps.is_empty() {
        return Err(Error::InvalidArgument("empty model path".into()));
    }
    Ok(&path.steps[path.best_index()])
}

fn is_spanning_tree(g: &UGraph) -> bool {
    g.edge_count() + 1 == g.dim() && is_connected(g)
}

/// Greedy forward selection from `base`.
///
/// Each step adds the edge whose refitted model has the largest total
/// censored log-likelihood among edges that keep a block graph with cliques
/// of at most `max_clique` nodes. Clique fits are cached, so only cliques
/// created by a candidate edge are fitted. Ties go to the lexicographically
/// smallest edge. The walk stops when no candidate remains.
pub fn forward_select<E: Executor>(
    sample: &ExceedanceSample,
    base: &UGraph,
    tag: FamilyTag,
    max_clique: usize,
    exec: &E,
    opts: &FitOptions,
) -> Result<ModelPath> {
    if base.dim() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: base.dim(),
        });
    }
    if !is_spanning_tree(base) {
        return Err(Error::InvalidArgument(
            "forward selection starts from a spanning tree".into(),
        ));
    }
    // Only HR cliques extend beyond pairs.
    let max_clique = if tag == FamilyTag::Hr {
        max_clique.max(2)
    } else {
        2
    };
    let mut cache: BTreeMap<Vec<usize>, CliqueFit> = BTreeMap::new();

    let fit_missing =
        |graphs: &[UGraph], cache: &mut BTreeMap<Vec<usize>, CliqueFit>| -> Result<()> {
            let mut todo = BTreeSet::new();
            for g in graphs {
                for c in block_decomposition(g, max_clique)?.cliques {
                    if !cache.contains_key(&c) {
                        todo.insert(c);
                    }
                }
            }
            let todo: Vec<Vec<usize>> = todo.into_iter().collect();
            let fits = exec.map(todo.clone(), |c| fit_clique(sample, &c, tag, None, opts));
            for (c, fit) in todo.into_iter().zip(fits) {
                cache.insert(c, fit?);
            }
            Ok(())
        };
    let report_for = |g: &UGraph, cache: &BTreeMap<Vec<usize>, CliqueFit>| -> Result<FitReport> {
        let fits = block_decomposition(g, max_clique)?
            .cliques
            .iter()
            .map(|c| cache[c].clone())
            .collect();
        assemble_report(sample, g, fits, opts)
    };

    let margins: Vec<f64> = (1..=sample.dim())
        .map(|v| marginal_loglik(sample, v))
        .collect();
    let composite_score =
        |g: &UGraph, cache: &BTreeMap<Vec<usize>, CliqueFit>, margins: &[f64]| -> Result<f64> {
            let dec = block_decomposition(g, max_clique)?;
            let seps: f64 = dec.separators.iter().map(|s| margins[s[0] - 1]).sum();
            Ok(dec.cliques.iter().map(|c| cache[c].loglik).sum::<f64>() - seps)
        };
    fit_missing(core::slice::from_ref(base), &mut cache)?;
    let mut current = base.clone();
    let mut steps = vec![PathStep {
        edges: current.edges(),
        added: None,
        report: report_for(&current, &cache)?,
    }];
    loop {
        let d = current.dim();
        let mut candidates = Vec::new();
        for i in 1..=d {
            for j in (i + 1)..=d {
                if current.has_edge(i, j) {
                    continue;
                }
                let mut g = current.clone();
                g.add_edge(i, j)?;
                if is_block_graph(&g, max_clique) {
                    candidates.push(((i, j), g));
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let graphs: Vec<UGraph> = candidates.iter().map(|(_, g)| g.clone()).collect();
        fit_missing(&graphs, &mut cache)?;
        // Candidates are ranked by the clique likelihood; only the winner gets a full report.
        let mut best: Option<(usize, f64)> = None;
        for (k, g) in graphs.iter().enumerate() {
            let score = composite_score(g, &cache, &margins)?;
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((k, score));
            }
        }
        let (k, _) = best.expect("at least one candidate");
        let (edge, g) = candidates.swap_remove(k);
        current = g;
        let report = report_for(&current, &cache)?;
        steps.push(PathStep {
            edges: current.edges(),
            added: Some(edge),
            report,
        });
    }
    Ok(ModelPath { steps })
}
