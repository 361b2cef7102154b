//! Clique families and graph-structured multivariate Pareto models.

use crate::error::{Error, Result};
use crate::graphs::{block_decomposition, CliqueDecomposition, UGraph};
use crate::hr::{
    complete_variogram, hr_extremal_coefficient, hr_log_lambda, CliqueBlock, Variogram,
};
use crate::numerics::quad::integrate_positive;
use crate::numerics::{norm_cdf, RngStream};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Exponent measure density of the extremal logistic model with parameter `θ`.
///
/// This is the Pareto density scaled by `Λ(𝟙) = d^θ`, so that marginals are normalized.
pub fn logistic_lambda(y: &[f64], theta: f64) -> Result<f64> {
    Ok(libm::exp(logistic_log_lambda(y, theta)?))
}

pub fn logistic_log_lambda(y: &[f64], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_positive(y)?;
    let d = y.len();
    let inv = 1.0 / theta;
    let mut s = 0.0;
    let mut out = 0.0;
    for &v in y {
        let lv = libm::log(v);
        s += libm::exp(-inv * lv);
        out -= (inv + 1.0) * lv;
    }
    out += (theta - d as f64) * libm::log(s);
    for i in 1..d {
        out += libm::log(i as f64 * inv - 1.0);
    }
    Ok(out)
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!(
            "logistic parameter {theta} outside (0, 1)"
        )))
    }
}

fn check_positive(y: &[f64]) -> Result<()> {
    match y.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        Some(p) => Err(Error::OutsideDomain(alloc::format!(
            "component {} is not positive",
            p + 1
        ))),
        None => Ok(()),
    }
}

/// `λ(y₁, y₂) = y₁⁻³ f_U(y₂/y₁)` for an extremal-function density `f_U`.
pub fn bivariate_lambda_from_extremal(y1: f64, y2: f64, f_u: impl Fn(f64) -> f64) -> Result<f64> {
    check_positive(&[y1, y2])?;
    Ok(f_u(y2 / y1) / (y1 * y1 * y1))
}

/// Shared density handle for a positive extremal function.
pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const TABLE_HALF_WIDTH: f64 = 40.0;
const TABLE_POINTS: usize = 16_001;

/// Inverse CDF of `log U` tabulated on a uniform grid.
#[derive(Clone)]
struct LogQuantileTable {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl LogQuantileTable {
    fn build(density: impl Fn(f64) -> f64) -> Self {
        let step = 2.0 * TABLE_HALF_WIDTH / (TABLE_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..TABLE_POINTS)
            .map(|i| -TABLE_HALF_WIDTH + i as f64 * step)
            .collect();
        let g: Vec<f64> = grid
            .iter()
            .map(|&v| {
                let x = libm::exp(v);
                let val = density(x) * x;
                if val.is_finite() && val > 0.0 {
                    val
                } else {
                    0.0
                }
            })
            .collect();
        let mut cdf = vec![0.0; TABLE_POINTS];
        for i in 1..TABLE_POINTS {
            cdf[i] = cdf[i - 1] + 0.5 * step * (g[i] + g[i - 1]);
        }
        let total = cdf[TABLE_POINTS - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        LogQuantileTable { grid, cdf }
    }

    fn sample(&self, rng: &mut RngStream) -> f64 {
        let u = rng.uniform();
        let hi = self
            .cdf
            .partition_point(|&c| c < u)
            .clamp(1, TABLE_POINTS - 1);
        let lo = hi - 1;
        let (c0, c1) = (self.cdf[lo], self.cdf[hi]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        libm::exp(self.grid[lo] + t * (self.grid[hi] - self.grid[lo]))
    }
}

/// User-supplied bivariate family given by the density of `U¹₂`.
///
/// The density is checked at construction for unit mass and unit mean.
#[derive(Clone)]
pub struct CustomBivariate {
    name: String,
    density: DensityFn,
    forward: LogQuantileTable,
    backward: LogQuantileTable,
    lambda_ones: f64,
}

impl fmt::Debug for CustomBivariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomBivariate")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomBivariate {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.density, &other.density)
    }
}

impl CustomBivariate {
    pub fn new(name: impl Into<String>, density: DensityFn) -> Result<Self> {
        let f = density.clone();
        // Work in log-space, where the mass of typical extremal functions is compact.
        let mass = integrate_positive(|x| f(x), 1e-10);
        let mean = integrate_positive(|x| x * f(x), 1e-10);
        if !((mass - 1.0).abs() < 1e-3) || !((mean - 1.0).abs() < 1e-3) {
            return Err(Error::InvalidArgument(alloc::format!(
                "extremal-function density must have mass 1 and mean 1 (found {mass:.6}, {mean:.6})"
            )));
        }
        // Λ(1,1) = E max(1, U¹₂) = 1 + E (U − 1)⁺.
        let excess = integrate_positive(|x| if x > 1.0 { (x - 1.0) * f(x) } else { 0.0 }, 1e-10);
        let f2 = density.clone();
        Ok(CustomBivariate {
            name: name.into(),
            forward: LogQuantileTable::build(|x| f(x)),
            backward: LogQuantileTable::build(move |x| f2(1.0 / x) / (x * x * x)),
            density,
            lambda_ones: 1.0 + excess,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Density of `U¹₂` (first clique node as reference).
    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    /// Density of `U²₁`, `x⁻³ f(1/x)`.
    pub fn reverse_density(&self, x: f64) -> f64 {
        (self.density)(1.0 / x) / (x * x * x)
    }

    /// Draws `U¹₂` when `from_first`, else `U²₁`.
    pub fn sample(&self, from_first: bool, rng: &mut RngStream) -> f64 {
        if from_first {
            self.forward.sample(rng)
        } else {
            self.backward.sample(rng)
        }
    }

    pub fn lambda_ones(&self) -> f64 {
        self.lambda_ones
    }
}

/// Parametric family attached to one clique.
#[derive(Debug, Clone, PartialEq)]
pub enum CliqueFamily {
    Hr(Variogram),
    Logistic { theta: f64 },
    Custom(CustomBivariate),
}

/// Family selector without parameters, used by fitting and learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FamilyTag {
    Hr,
    Logistic,
}

impl CliqueFamily {
    pub fn logistic(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(CliqueFamily::Logistic { theta })
    }

    pub fn tag_name(&self) -> &'static str {
        match self {
            CliqueFamily::Hr(_) => "hr",
            CliqueFamily::Logistic { .. } => "logistic",
            CliqueFamily::Custom(_) => "custom",
        }
    }

    /// Dimension the family is defined for, if fixed.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            CliqueFamily::Hr(g) => Some(g.dim()),
            CliqueFamily::Logistic { .. } => None,
            CliqueFamily::Custom(_) => Some(2),
        }
    }

    /// Number of free parameters on a clique of size `m`.
    pub fn param_count(&self, m: usize) -> usize {
        match self {
            CliqueFamily::Hr(_) => m * (m - 1) / 2,
            CliqueFamily::Logistic { .. } => 1,
            CliqueFamily::Custom(_) => 0,
        }
    }

    /// `log λ_C(y_C)`; `y` is ordered like the clique's node list.
    pub fn log_lambda(&self, y: &[f64]) -> Result<f64> {
        match self {
            CliqueFamily::Hr(g) => hr_log_lambda(y, g, 1),
            CliqueFamily::Logistic { theta } => logistic_log_lambda(y, *theta),
            CliqueFamily::Custom(c) => {
                if y.len() != 2 {
                    return Err(Error::DimensionMismatch {
                        expected: 2,
                        found: y.len(),
                    });
                }
                Ok(libm::log(bivariate_lambda_from_extremal(
                    y[0],
                    y[1],
                    |x| c.density(x),
                )?))
            }
        }
    }

    /// `Λ_C(𝟙)` on a clique of size `m`.
    pub fn lambda_ones(&self, m: usize, rng: &mut RngStream) -> Result<f64> {
        match self {
            CliqueFamily::Hr(g) => Ok(hr_extremal_coefficient(&vec![1.0; g.dim()], g, rng)?.value),
            CliqueFamily::Logistic { theta } => Ok(libm::pow(m as f64, *theta)),
            CliqueFamily::Custom(c) => Ok(c.lambda_ones()),
        }
    }

    /// Bivariate `χ = 2 − Λ(1,1)` for clique-local positions `a`, `b` (0-based).
    pub fn pair_chi(&self, a: usize, b: usize) -> f64 {
        match self {
            CliqueFamily::Hr(g) => 2.0 - 2.0 * norm_cdf(0.5 * libm::sqrt(g.matrix()[(a, b)])),
            CliqueFamily::Logistic { theta } => 2.0 - libm::pow(2.0, *theta),
            CliqueFamily::Custom(c) => 2.0 - c.lambda_ones(),
        }
    }
}

/// A block graph with one family per clique.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphModelSpec {
    graph: UGraph,
    decomposition: CliqueDecomposition,
    families: Vec<CliqueFamily>,
}

impl GraphModelSpec {
    /// Builds a spec from `(clique nodes, family)` pairs; HR blocks are ordered like the nodes given.
    pub fn new(graph: UGraph, cliques: Vec<(Vec<usize>, CliqueFamily)>) -> Result<Self> {
        let decomposition = block_decomposition(&graph, usize::MAX)?;
        let mut families: Vec<Option<CliqueFamily>> = vec![None; decomposition.cliques.len()];
        for (nodes, family) in cliques {
            let mut order: Vec<usize> = (0..nodes.len()).collect();
            order.sort_by_key(|&a| nodes[a]);
            let sorted: Vec<usize> = order.iter().map(|&a| nodes[a]).collect();
            let Some(pos) = decomposition.cliques.iter().position(|c| *c == sorted) else {
                return Err(Error::InvalidArgument(alloc::format!(
                    "{nodes:?} is not a clique of the graph"
                )));
            };
            if families[pos].is_some() {
                return Err(Error::InvalidArgument(alloc::format!(
                    "clique {sorted:?} given twice"
                )));
            }
            let family = match family {
                CliqueFamily::Hr(g) => {
                    if g.dim() != nodes.len() {
                        return Err(Error::DimensionMismatch {
                            expected: nodes.len(),
                            found: g.dim(),
                        });
                    }
                    // Store blocks in sorted-node order.
                    let perm: Vec<usize> = order.iter().map(|&a| a + 1).collect();
                    CliqueFamily::Hr(g.restrict(&perm))
                }
                other => {
                    if sorted.len() != 2 {
                        return Err(Error::UnsupportedFamily(alloc::format!(
                            "{} family on clique {sorted:?}: only Hüsler–Reiss is supported beyond pairs",
                            other.tag_name()
                        )));
                    }
                    if sorted != nodes {
                        if let CliqueFamily::Custom(_) = other {
                            return Err(Error::InvalidArgument(alloc::format!(
                                "custom family on {nodes:?} must list the reference node first in increasing order"
                            )));
                        }
                    }
                    other
                }
            };
            families[pos] = Some(family);
        }
        let families = families
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                f.ok_or_else(|| {
                    Error::InvalidArgument(alloc::format!(
                        "no family for clique {:?}",
                        decomposition.cliques[i]
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GraphModelSpec {
            graph,
            decomposition,
            families,
        })
    }

    /// All-HR spec read off a full variogram on the given block graph.
    pub fn hr_from_variogram(graph: UGraph, gamma: &Variogram) -> Result<Self> {
        let dec = block_decomposition(&graph, usize::MAX)?;
        let cliques = dec
            .cliques
            .iter()
            .map(|c| (c.clone(), CliqueFamily::Hr(gamma.restrict(c))))
            .collect();
        GraphModelSpec::new(graph, cliques)
    }

    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    pub fn graph(&self) -> &UGraph {
        &self.graph
    }

    pub fn decomposition(&self) -> &CliqueDecomposition {
        &self.decomposition
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.decomposition.cliques
    }

    pub fn families(&self) -> &[CliqueFamily] {
        &self.families
    }

    pub fn is_tree(&self) -> bool {
        self.decomposition.cliques.iter().all(|c| c.len() == 2)
    }

    pub fn all_hr(&self) -> bool {
        self.families
            .iter()
            .all(|f| matches!(f, CliqueFamily::Hr(_)))
    }

    pub fn param_count(&self) -> usize {
        self.decomposition
            .cliques
            .iter()
            .zip(&self.families)
            .map(|(c, f)| f.param_count(c.len()))
            .sum()
    }

    /// Completed variogram for an all-HR spec.
    pub fn completed_variogram(&self) -> Result<Variogram> {
        let blocks = self
            .decomposition
            .cliques
            .iter()
            .zip(&self.families)
            .map(|(c, f)| match f {
                CliqueFamily::Hr(g) => Ok(CliqueBlock {
                    nodes: c.clone(),
                    gamma: g.clone(),
                }),
                other => Err(Error::UnsupportedFamily(alloc::format!(
                    "variogram completion needs Hüsler–Reiss cliques, found {}",
                    other.tag_name()
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        complete_variogram(&self.graph, &blocks)
    }

    /// Index of the clique containing both nodes, if any.
    pub fn clique_of_pair(&self, i: usize, j: usize) -> Option<usize> {
        self.decomposition
            .cliques
            .iter()
            .position(|c| c.contains(&i) && c.contains(&j))
    }
}

/// `log λ(y)` for the graph-structured model: clique densities over separator densities.
pub fn graph_log_density(y: &[f64], spec: &GraphModelSpec) -> Result<f64> {
    if y.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: y.len(),
        });
    }
    check_positive(y)?;
    let mut total = 0.0;
    let mut buf = Vec::new();
    for (clique, family) in spec.cliques().iter().zip(spec.families()) {
        buf.clear();
        buf.extend(clique.iter().map(|&v| y[v - 1]));
        total += family.log_lambda(&buf)?;
    }
    for sep in &spec.decomposition.separators {
        // Univariate exponent measure density y⁻².
        total += 2.0 * libm::log(y[sep[0] - 1]);
    }
    Ok(total)
}

/// Unnormalized density `λ(y)`.
pub fn graph_density(y: &[f64], spec: &GraphModelSpec) -> Result<f64> {
    Ok(libm::exp(graph_log_density(y, spec)?))
}

/// Pareto density `λ(y)/Λ(𝟙)` on the L-shaped domain.
///
/// `Λ(𝟙)` is exact for all-HR specs up to 16 nodes and otherwise estimated
/// from the rejection sampler's acceptance rate with `proposals` draws.
pub fn graph_density_normalized(
    y: &[f64],
    spec: &GraphModelSpec,
    rng: &mut RngStream,
    proposals: usize,
) -> Result<f64> {
    if !y.iter().any(|&v| v > 1.0) {
        return Err(Error::OutsideDomain("max component must exceed 1".into()));
    }
    let norm = spec_extremal_coefficient(spec, rng, proposals)?;
    Ok(graph_density(y, spec)? / norm)
}

/// `Λ(𝟙)` for a spec; see [`graph_density_normalized`].
pub fn spec_extremal_coefficient(
    spec: &GraphModelSpec,
    rng: &mut RngStream,
    proposals: usize,
) -> Result<f64> {
    if spec.all_hr() && spec.dim() <= crate::numerics::MAX_MVN_DIM {
        let gamma = spec.completed_variogram()?;
        return Ok(hr_extremal_coefficient(&vec![1.0; spec.dim()], &gamma, rng)?.value);
    }
    Ok(crate::simulate::extremal_coefficient_mc(spec, proposals, rng)?.value)
}

/// Numerical checks of homogeneity and marginal normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyDiagnostics {
    /// Largest relative deviation of `λ(ty)` from `t^{−(d+1)} λ(y)`.
    pub homogeneity: f64,
    /// Absolute deviation of `∫_{y₁>1} λ` from 1.
    pub normalization: f64,
}

/// Diagnostics for a clique family on `m` nodes.
pub fn validate_family(
    family: &CliqueFamily,
    m: usize,
    rng: &mut RngStream,
) -> Result<FamilyDiagnostics> {
    let lam = |y: &[f64]| family.log_lambda(y).map(libm::exp).unwrap_or(0.0);
    validate_lambda(m, &lam, rng)
}

/// Diagnostics for an arbitrary exponent-measure density candidate in dimension 2 or 3.
pub fn validate_lambda(
    m: usize,
    lambda: &dyn Fn(&[f64]) -> f64,
    rng: &mut RngStream,
) -> Result<FamilyDiagnostics> {
    if !(2..=3).contains(&m) {
        return Err(Error::Unsupported(alloc::format!(
            "family diagnostics in dimension {m}"
        )));
    }
    let mut homogeneity: f64 = 0.0;
    let mut y = vec![0.0; m];
    for _ in 0..64 {
        y.iter_mut()
            .for_each(|v| *v = libm::exp(2.0 * rng.uniform() - 1.0));
        let t = libm::exp(3.0 * rng.uniform() - 1.5);
        let ty: Vec<f64> = y.iter().map(|v| v * t).collect();
        let base = lambda(&y);
        if base > 0.0 {
            let ratio = lambda(&ty) / (libm::pow(t, -(m as f64 + 1.0)) * base);
            homogeneity = homogeneity.max((ratio - 1.0).abs());
        }
    }
    // By homogeneity ∫_{y₁>1} λ = ∫ λ(1, s) ds over the remaining coordinates.
    let mass = if m == 2 {
        integrate_positive(|s| lambda(&[1.0, s]), 1e-9)
    } else {
        // Importance sampling in log coordinates with a wide Gaussian proposal.
        let n = 200_000;
        let scale = 3.0;
        let mut acc = 0.0;
        for _ in 0..n {
            let a = scale * rng.normal();
            let b = scale * rng.normal();
            let q = libm::exp(-(a * a + b * b) / (2.0 * scale * scale))
                / (2.0 * core::f64::consts::PI * scale * scale);
            acc += lambda(&[1.0, libm::exp(a), libm::exp(b)]) * libm::exp(a + b) / q;
        }
        acc / n as f64
    };
    Ok(FamilyDiagnostics {
        homogeneity,
        normalization: (mass - 1.0).abs(),
    })
}
