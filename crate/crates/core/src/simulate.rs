//! Exact simulation of multivariate Pareto distributions through extremal functions.

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::hr::{phi_k, Variogram};
use crate::models::{CliqueFamily, GraphModelSpec};
use crate::numerics::{Matrix, MvnEstimate, RngStream};
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

/// `U = exp(W − Γ_{·k}/2)` with `W ~ N(0, Σ̃^(k))`; component `k` is exactly 1.
pub fn sample_hr_extremal(gamma: &Variogram, k: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let anchored = HrAnchored::new(gamma, k)?;
    let mut out = vec![0.0; gamma.dim()];
    anchored.sample_into(rng, &mut out);
    Ok(out)
}

/// `(G/E)^θ` with `G ~ Gamma(1 − θ)` and `E ~ Exp(1)`, the ratio of a
/// Fréchet(1/θ, c_θ) and an independent scaled inverse-gamma variable.
pub fn sample_logistic_extremal(theta: f64, rng: &mut RngStream) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "logistic parameter {theta} outside (0, 1)"
        )));
    }
    Ok(logistic_draw(theta, rng))
}

fn logistic_draw(theta: f64, rng: &mut RngStream) -> f64 {
    let g = rng.gamma(1.0 - theta);
    let e = rng.exponential();
    libm::pow(g / e, theta)
}

/// Cholesky factor of `Σ^(k)` plus the drift `−Γ_{·k}/2`.
#[derive(Debug, Clone)]
struct HrAnchored {
    anchor: usize,
    chol: Matrix,
    drift: Vec<f64>,
}

impl HrAnchored {
    fn new(gamma: &Variogram, k: usize) -> Result<Self> {
        let sigma = phi_k(gamma, k)?;
        let drift = (1..=gamma.dim())
            .filter(|&v| v != k)
            .map(|v| -0.5 * gamma.get(v, k))
            .collect();
        Ok(HrAnchored {
            anchor: k,
            chol: sigma.cov().cholesky().clone(),
            drift,
        })
    }

    /// Writes `U^k` into `out` (length `d`).
    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let m = self.drift.len();
        let mut z = [0.0f64; 4];
        let mut z_heap;
        let z: &mut [f64] = if m <= 4 {
            &mut z[..m]
        } else {
            z_heap = vec![0.0; m];
            &mut z_heap[..]
        };
        for v in z.iter_mut() {
            *v = rng.normal();
        }
        let k = self.anchor - 1;
        for a in 0..m {
            let mut w = self.drift[a];
            for b in 0..=a {
                w += self.chol[(a, b)] * z[b];
            }
            let idx = if a < k { a } else { a + 1 };
            out[idx] = libm::exp(w);
        }
        out[k] = 1.0;
    }
}

/// How one clique's extremal function is drawn when entered through a given node.
#[derive(Debug, Clone)]
enum CliqueDraw {
    Hr(HrAnchored),
    Logistic(f64),
    Custom {
        family: crate::models::CustomBivariate,
        forward: bool,
    },
}

#[derive(Debug, Clone)]
struct CliqueStep {
    /// Clique nodes (1-based) and the position of the entry node.
    nodes: Vec<usize>,
    root: usize,
    draw: CliqueDraw,
}

#[derive(Debug, Clone)]
enum Plan {
    /// Full Hüsler–Reiss Gaussian representation, one factor per anchor.
    Hr(Vec<HrAnchored>),
    /// Product of clique extremal functions along the block tree, one traversal per anchor.
    Cliques(Vec<Vec<CliqueStep>>),
}

/// Extremal-function sampler for every anchor of a model.
#[derive(Debug, Clone)]
pub struct ExtremalSampler {
    dim: usize,
    plan: Plan,
}

impl ExtremalSampler {
    /// Hüsler–Reiss model given by a full variogram.
    pub fn from_variogram(gamma: &Variogram) -> Result<Self> {
        let anchors = (1..=gamma.dim())
            .map(|k| HrAnchored::new(gamma, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExtremalSampler {
            dim: gamma.dim(),
            plan: Plan::Hr(anchors),
        })
    }

    /// Trees and mixed specs use clique path products; all-HR specs with
    /// triangles use the completed variogram.
    pub fn from_spec(spec: &GraphModelSpec) -> Result<Self> {
        if !spec.is_tree() && spec.all_hr() {
            return ExtremalSampler::from_variogram(&spec.completed_variogram()?);
        }
        ExtremalSampler::clique_paths(spec)
    }

    fn clique_paths(spec: &GraphModelSpec) -> Result<Self> {
        let d = spec.dim();
        let cliques = spec.cliques();
        let mut node_cliques: Vec<Vec<usize>> = vec![Vec::new(); d + 1];
        for (c, nodes) in cliques.iter().enumerate() {
            for &v in nodes {
                node_cliques[v].push(c);
            }
        }
        let mut traversals = Vec::with_capacity(d);
        for k in 1..=d {
            let mut steps = Vec::with_capacity(cliques.len());
            let mut seen_clique = vec![false; cliques.len()];
            let mut queue = VecDeque::from([k]);
            let mut seen_node = vec![false; d + 1];
            seen_node[k] = true;
            while let Some(v) = queue.pop_front() {
                for &c in &node_cliques[v] {
                    if seen_clique[c] {
                        continue;
                    }
                    seen_clique[c] = true;
                    let nodes = cliques[c].clone();
                    let root = nodes.iter().position(|&u| u == v).expect("node in clique");
                    let draw = match &spec.families()[c] {
                        CliqueFamily::Hr(g) => CliqueDraw::Hr(HrAnchored::new(g, root + 1)?),
                        CliqueFamily::Logistic { theta } => CliqueDraw::Logistic(*theta),
                        CliqueFamily::Custom(f) => CliqueDraw::Custom {
                            family: f.clone(),
                            forward: root == 0,
                        },
                    };
                    for &u in &nodes {
                        if !seen_node[u] {
                            seen_node[u] = true;
                            queue.push_back(u);
                        }
                    }
                    steps.push(CliqueStep { nodes, root, draw });
                }
            }
            traversals.push(steps);
        }
        Ok(ExtremalSampler {
            dim: d,
            plan: Plan::Cliques(traversals),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes a draw of `U^k` (1-based `k`) into `out`.
    pub fn sample_into(&self, k: usize, rng: &mut RngStream, out: &mut [f64]) {
        match &self.plan {
            Plan::Hr(anchors) => anchors[k - 1].sample_into(rng, out),
            Plan::Cliques(traversals) => {
                out[k - 1] = 1.0;
                let mut local = [0.0f64; 3];
                for step in &traversals[k - 1] {
                    let base = out[step.nodes[step.root] - 1];
                    match &step.draw {
                        CliqueDraw::Hr(h) => {
                            h.sample_into(rng, &mut local[..step.nodes.len()]);
                            for (a, &u) in step.nodes.iter().enumerate() {
                                if a != step.root {
                                    out[u - 1] = base * local[a];
                                }
                            }
                        }
                        CliqueDraw::Logistic(theta) => {
                            let other = step.nodes[1 - step.root];
                            out[other - 1] = base * logistic_draw(*theta, rng);
                        }
                        CliqueDraw::Custom { family, forward } => {
                            let other = step.nodes[1 - step.root];
                            out[other - 1] = base * family.sample(*forward, rng);
                        }
                    }
                }
            }
        }
    }

    pub fn sample(&self, k: usize, rng: &mut RngStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(k, rng, &mut out);
        out
    }
}

/// `Y^k = P · U^k` on a tree spec: Pareto at `k`, edge extremal functions multiplied along paths.
pub fn sample_tree_yk(spec: &GraphModelSpec, k: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !spec.is_tree() {
        return Err(Error::InvalidArgument(
            "tree sampler needs a tree-structured spec".into(),
        ));
    }
    if k == 0 || k > spec.dim() {
        return Err(Error::NodeOutOfRange {
            node: k,
            dim: spec.dim(),
        });
    }
    let sampler = ExtremalSampler::clique_paths(spec)?;
    let p = rng.pareto();
    let mut y = sampler.sample(k, rng);
    y.iter_mut().for_each(|v| *v *= p);
    Ok(y)
}

/// Exact samples with acceptance accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimBatch {
    /// One realization per row.
    pub samples: Matrix,
    pub proposals: u64,
    pub accepts: u64,
    pub seed: u64,
}

impl SimBatch {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepts as f64 / self.proposals as f64
    }
}

/// Rejection sampler: `n` draws of `Y` from `sampler`'s model.
pub fn sample_pareto(sampler: &ExtremalSampler, n: usize, rng: &mut RngStream) -> SimBatch {
    let d = sampler.dim();
    let mut data = Vec::with_capacity(n * d);
    let mut u = vec![0.0; d];
    let mut proposals = 0u64;
    let mut accepts = 0u64;
    while (accepts as usize) < n {
        proposals += 1;
        let p = rng.pareto();
        let t = rng.below(d) + 1;
        sampler.sample_into(t, rng, &mut u);
        let l1: f64 = u.iter().sum();
        let linf = u.iter().copied().fold(0.0, f64::max);
        if p * linf / l1 > 1.0 {
            accepts += 1;
            data.extend(u.iter().map(|v| p * v / l1));
        }
    }
    SimBatch {
        samples: Matrix::from_vec(n, d, data).expect("consistent shape"),
        proposals,
        accepts,
        seed: rng.seed(),
    }
}

/// Samples per shard in [`sample_pareto_sharded`]; fixed so output depends only on seed and `n`.
pub const SHARD_SIZE: usize = 4096;

/// Sharded rejection sampling: shard `i` uses stream `i` of `seed`; results are concatenated in order.
pub fn sample_pareto_sharded<E: Executor>(
    sampler: &ExtremalSampler,
    n: usize,
    seed: u64,
    exec: &E,
) -> SimBatch {
    let shards: Vec<(u64, usize)> = (0..n.div_ceil(SHARD_SIZE))
        .map(|i| (i as u64, SHARD_SIZE.min(n - i * SHARD_SIZE)))
        .collect();
    let parts = exec.map(shards, |(id, size)| {
        sample_pareto(sampler, size, &mut RngStream::new(seed, id))
    });
    let d = sampler.dim();
    let mut data = Vec::with_capacity(n * d);
    let (mut proposals, mut accepts) = (0, 0);
    for part in parts {
        data.extend_from_slice(part.samples.as_slice());
        proposals += part.proposals;
        accepts += part.accepts;
    }
    SimBatch {
        samples: Matrix::from_vec(n, d, data).expect("consistent shape"),
        proposals,
        accepts,
        seed,
    }
}

/// `Λ(𝟙)` from the acceptance identity: `Λ(𝟙)/d` is the mean acceptance
/// probability `E ‖U^T‖∞/‖U^T‖₁` of the rejection sampler.
pub fn extremal_coefficient_mc(
    spec: &GraphModelSpec,
    proposals: usize,
    rng: &mut RngStream,
) -> Result<MvnEstimate> {
    let sampler = ExtremalSampler::from_spec(spec)?;
    Ok(acceptance_estimate(&sampler, proposals, rng))
}

pub fn acceptance_estimate(
    sampler: &ExtremalSampler,
    proposals: usize,
    rng: &mut RngStream,
) -> MvnEstimate {
    let d = sampler.dim();
    let mut u = vec![0.0; d];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..proposals {
        let t = rng.below(d) + 1;
        sampler.sample_into(t, rng, &mut u);
        let l1: f64 = u.iter().sum();
        let linf = u.iter().copied().fold(0.0, f64::max);
        let r = linf / l1;
        s += r;
        s2 += r * r;
    }
    let n = proposals as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    MvnEstimate {
        value: d as f64 * mean,
        std_error: d as f64 * libm::sqrt(var / n),
    }
}
