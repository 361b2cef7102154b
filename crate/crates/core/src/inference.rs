//! Rank standardization, censored likelihoods, clique-wise and joint
//! maximum likelihood, and tail correlation coefficients.
//!
//! Node labels are 1-based, as everywhere else in the crate.

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::graphs::{block_decomposition, UGraph};
use crate::hr::{hr_extremal_coefficient_with, validate_variogram, Variogram};
use crate::models::{CliqueFamily, FamilyTag, GraphModelSpec};
use crate::numerics::{
    bvn_cdf, ln_norm_cdf, minimize, mvn_cdf_with, norm_cdf, norm_quantile, CovMatrix, Matrix,
    MvnEstimate, MvnOptions, RngStream, SimplexOptions, MAX_MVN_DIM,
};
use crate::simulate::ExtremalSampler;
use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stream id reserved for normalizing constants inside likelihoods.
const NORMALIZER_STREAM: u64 = u64::MAX;

/// Maps each column to standard Pareto scale via `1/(1 − rank/(N+1))`.
///
/// Ties share their average rank.
pub fn standardize(data: &Matrix) -> Result<Matrix> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::InvalidArgument(
            "standardization needs at least two observations".into(),
        ));
    }
    if let Some(p) = data.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "missing or non-finite value in row {}, column {}",
            p / d + 1,
            p % d + 1
        )));
    }
    let scale = (n + 1) as f64;
    let mut out = Matrix::zeros(n, d);
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..d {
        order.sort_by(|&a, &b| data[(a, j)].total_cmp(&data[(b, j)]));
        if data[(order[0], j)] == data[(order[n - 1], j)] {
            return Err(Error::DegenerateSample(format!(
                "column {} is constant",
                j + 1
            )));
        }
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && data[(order[end], j)] == data[(order[start], j)] {
                end += 1;
            }
            // Sorted positions start+1..=end share their mean rank.
            let rank = 0.5 * (start + 1 + end) as f64;
            let value = scale / (scale - rank);
            for &h in &order[start..end] {
                out[(h, j)] = value;
            }
            start = end;
        }
    }
    Ok(out)
}

/// Threshold exceedances rescaled to the L-shaped domain `{‖y‖∞ > 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceSample {
    raw_count: usize,
    q: Option<f64>,
    threshold: f64,
    rows: Matrix,
    censored: Vec<bool>,
}

impl ExceedanceSample {
    /// Wraps draws that already live on the L-shaped domain (threshold 1).
    pub fn from_pareto(rows: Matrix) -> Result<Self> {
        let n = rows.rows();
        Self::build(rows, n, None, 1.0)
    }

    fn build(rows: Matrix, raw_count: usize, q: Option<f64>, threshold: f64) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::DegenerateSample(
                "no observation exceeds the threshold".into(),
            ));
        }
        for h in 0..rows.rows() {
            let row = rows.row(h);
            if row.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::OutsideDomain(format!(
                    "row {} has a non-positive component",
                    h + 1
                )));
            }
            if !row.iter().any(|&v| v > 1.0) {
                return Err(Error::OutsideDomain(format!(
                    "row {} has no component above 1",
                    h + 1
                )));
            }
        }
        let censored = rows.as_slice().iter().map(|&v| v <= 1.0).collect();
        Ok(ExceedanceSample {
            raw_count,
            q,
            threshold,
            rows,
            censored,
        })
    }

    /// Number of observations before thresholding.
    pub fn raw_count(&self) -> usize {
        self.raw_count
    }

    /// Threshold quantile, if the sample came from [`extract_exceedances`].
    pub fn q(&self) -> Option<f64> {
        self.q
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    /// Censoring mask of row `h` (0-based): true where the component is at most 1.
    pub fn mask(&self, h: usize) -> &[bool] {
        let d = self.dim();
        &self.censored[h * d..(h + 1) * d]
    }
}

/// Keeps rows whose maximum exceeds `u = 1/(1 − q)` and divides them by `u`.
pub fn extract_exceedances(std: &Matrix, q: f64) -> Result<ExceedanceSample> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold quantile {q} outside (0, 1)"
        )));
    }
    let u = 1.0 / (1.0 - q);
    let d = std.cols();
    let mut data = Vec::new();
    for h in 0..std.rows() {
        let row = std.row(h);
        if row.iter().any(|&v| v > u) {
            data.extend(row.iter().map(|&v| v / u));
        }
    }
    let n = data.len() / d.max(1);
    ExceedanceSample::build(Matrix::from_vec(n, d, data)?, std.rows(), Some(q), u)
}

/// Log-scale rows of the sample restricted to a clique, keeping rows in `L_C`.
struct CliqueRows {
    m: usize,
    logs: Vec<f64>,
}

impl CliqueRows {
    fn new(sample: &ExceedanceSample, clique: &[usize]) -> Result<Self> {
        let d = sample.dim();
        if clique.is_empty() {
            return Err(Error::InvalidArgument("empty clique".into()));
        }
        if let Some(&v) = clique.iter().find(|&&v| v == 0 || v > d) {
            return Err(Error::NodeOutOfRange { node: v, dim: d });
        }
        let mut logs = Vec::new();
        for h in 0..sample.len() {
            let row = sample.rows.row(h);
            if clique.iter().any(|&v| row[v - 1] > 1.0) {
                logs.extend(clique.iter().map(|&v| libm::log(row[v - 1])));
            }
        }
        if logs.is_empty() {
            return Err(Error::DegenerateSample(format!(
                "no exceedance on clique {clique:?}"
            )));
        }
        Ok(CliqueRows {
            m: clique.len(),
            logs,
        })
    }

    fn len(&self) -> usize {
        self.logs.len() / self.m
    }

    fn iter(&self) -> core::slice::ChunksExact<'_, f64> {
        self.logs.chunks_exact(self.m)
    }

    /// Empirical `χ` between positions `a`, `b`, clamped away from 0 and 1.
    fn chi(&self, a: usize, b: usize) -> f64 {
        let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
        for r in self.iter() {
            na += (r[a] > 0.0) as usize;
            nb += (r[b] > 0.0) as usize;
            both += (r[a] > 0.0 && r[b] > 0.0) as usize;
        }
        let denom = 0.5 * (na + nb) as f64;
        let chi = if denom > 0.0 {
            both as f64 / denom
        } else {
            0.0
        };
        chi.clamp(0.02, 0.98)
    }
}

/// `Γ` whose HR tail correlation equals `chi`.
fn gamma_from_chi(chi: f64) -> f64 {
    let z = 2.0 * norm_quantile(1.0 - 0.5 * chi);
    z * z
}

/// Censored HR pair log-likelihood from log-scale rows, normalized by `Λ(1,1)`.
fn hr_pair_loglik(rows: &CliqueRows, gamma: f64) -> f64 {
    let s = libm::sqrt(gamma);
    let half = 0.5 * gamma;
    let gauss_const = -0.5 * (LN_2PI + libm::log(gamma));
    let mut total = 0.0;
    for r in rows.iter() {
        let (l1, l2) = (r[0], r[1]);
        total += match (l1 > 0.0, l2 > 0.0) {
            (true, true) => {
                let t = l2 - l1 + half;
                -2.0 * l1 - l2 + gauss_const - t * t / (2.0 * gamma)
            }
            (true, false) => -2.0 * l1 + ln_norm_cdf((half - l1) / s),
            _ => -2.0 * l2 + ln_norm_cdf((half - l2) / s),
        };
    }
    total - rows.len() as f64 * libm::log(2.0 * norm_cdf(0.5 * s))
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// Censored logistic pair log-likelihood, normalized by `Λ(1,1) = 2^θ`.
fn logistic_pair_loglik(rows: &CliqueRows, theta: f64) -> f64 {
    let inv = 1.0 / theta;
    let shape = libm::log(inv - 1.0);
    let mut total = 0.0;
    for r in rows.iter() {
        let (l1, l2) = (r[0], r[1]);
        total += match (l1 > 0.0, l2 > 0.0) {
            (true, true) => {
                -(inv + 1.0) * (l1 + l2) + (theta - 2.0) * ln_add_exp(-inv * l1, -inv * l2) + shape
            }
            (true, false) => (theta - 1.0) * ln_add_exp(-inv * l1, 0.0) - (inv + 1.0) * l1,
            _ => (theta - 1.0) * ln_add_exp(-inv * l2, 0.0) - (inv + 1.0) * l2,
        };
    }
    total - rows.len() as f64 * theta * core::f64::consts::LN_2
}

/// Normal CDF factor over one connected block of censored coordinates.
#[derive(Debug, Clone)]
enum CdfBlock {
    Single {
        at: usize,
        sd: f64,
    },
    Pair {
        a: usize,
        b: usize,
        sa: f64,
        sb: f64,
        r: f64,
    },
    Many {
        at: Vec<usize>,
        cov: CovMatrix,
    },
}

/// Conditional Gaussian structure for one (anchor, observed set) pattern.
#[derive(Debug, Clone)]
struct Pattern {
    observed: Vec<usize>,
    censored: Vec<usize>,
    obs_cov: Option<CovMatrix>,
    /// `Σ_JO Σ_OO⁻¹`, one row per censored coordinate.
    regression: Matrix,
    blocks: Vec<CdfBlock>,
}

impl Pattern {
    fn new(g: &Matrix, k: usize, observed: Vec<usize>, censored: Vec<usize>) -> Result<Self> {
        let cov = |i: usize, j: usize| 0.5 * (g[(i, k)] + g[(j, k)] - g[(i, j)]);
        let (p, c) = (observed.len(), censored.len());
        let obs_cov = if p > 0 {
            Some(CovMatrix::new(Matrix::from_fn(p, p, |a, b| {
                cov(observed[a], observed[b])
            }))?)
        } else {
            None
        };
        let cross = Matrix::from_fn(c, p, |a, b| cov(censored[a], observed[b]));
        let mut coef = Vec::with_capacity(c * p);
        if let Some(a) = &obs_cov {
            for r in 0..c {
                coef.extend(a.solve(cross.row(r)));
            }
        }
        let regression = Matrix::from_vec(c, p, coef)?;
        let mut cond = Matrix::from_fn(c, c, |a, b| {
            let shrink: f64 = regression
                .row(a)
                .iter()
                .zip(cross.row(b))
                .map(|(x, y)| x * y)
                .sum();
            cov(censored[a], censored[b]) - shrink
        });
        for a in 0..c {
            if !(cond[(a, a)] > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: a + 1 });
            }
            for b in (a + 1)..c {
                let m = 0.5 * (cond[(a, b)] + cond[(b, a)]);
                cond[(a, b)] = m;
                cond[(b, a)] = m;
            }
        }
        let blocks = cdf_blocks(&cond)?;
        Ok(Pattern {
            observed,
            censored,
            obs_cov,
            regression,
            blocks,
        })
    }
}

/// Splits a conditional covariance into independent blocks.
fn cdf_blocks(cond: &Matrix) -> Result<Vec<CdfBlock>> {
    let c = cond.rows();
    let linked = |a: usize, b: usize| {
        libm::fabs(cond[(a, b)]) > 1e-9 * libm::sqrt(cond[(a, a)] * cond[(b, b)])
    };
    let mut seen = vec![false; c];
    let mut blocks = Vec::new();
    for start in 0..c {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut at = vec![start];
        let mut next = 0;
        while next < at.len() {
            let a = at[next];
            next += 1;
            for b in 0..c {
                if !seen[b] && linked(a, b) {
                    seen[b] = true;
                    at.push(b);
                }
            }
        }
        at.sort_unstable();
        blocks.push(match at.len() {
            1 => CdfBlock::Single {
                at: start,
                sd: libm::sqrt(cond[(start, start)]),
            },
            2 => {
                let (a, b) = (at[0], at[1]);
                let (sa, sb) = (libm::sqrt(cond[(a, a)]), libm::sqrt(cond[(b, b)]));
                CdfBlock::Pair {
                    a,
                    b,
                    sa,
                    sb,
                    r: (cond[(a, b)] / (sa * sb)).clamp(-1.0, 1.0),
                }
            }
            _ => {
                let cov = CovMatrix::new(cond.select(&at, &at))?;
                CdfBlock::Many { at, cov }
            }
        });
    }
    Ok(blocks)
}

/// Censored HR log-density `ln ∫_{[0,1]^J} λ(y) dy_J` with patterns cached per
/// anchor and observed set. Rows are passed as logarithms.
struct CensoredHr<'g> {
    gamma: &'g Matrix,
    patterns: BTreeMap<(usize, u64), Pattern>,
    mvn: MvnOptions,
    seed: u64,
}

impl<'g> CensoredHr<'g> {
    fn new(gamma: &'g Matrix, mvn: MvnOptions, seed: u64) -> Result<Self> {
        if gamma.rows() > 64 {
            return Err(Error::Unsupported(format!(
                "censored likelihood in dimension {}",
                gamma.rows()
            )));
        }
        Ok(CensoredHr {
            gamma,
            patterns: BTreeMap::new(),
            mvn,
            seed,
        })
    }

    /// `tag` selects the QMC stream for blocks of three or more censored coordinates.
    fn row(&mut self, logs: &[f64], tag: u64) -> Result<f64> {
        let g = self.gamma;
        let d = logs.len();
        let mut k = 0;
        let mut mask = 0u64;
        for (i, &l) in logs.iter().enumerate() {
            if l > logs[k] {
                k = i;
            }
            if l > 0.0 {
                mask |= 1 << i;
            }
        }
        if mask == 0 {
            return Err(Error::OutsideDomain("row has no component above 1".into()));
        }
        let pat = match self.patterns.entry((k, mask)) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let observed = (0..d).filter(|&i| i != k && mask & (1 << i) != 0).collect();
                let censored = (0..d).filter(|&i| mask & (1 << i) == 0).collect();
                e.insert(Pattern::new(g, k, observed, censored)?)
            }
        };
        let pat = &*pat;
        let lk = logs[k];
        let mut ll = -2.0 * lk;
        let tilde: Vec<f64> = pat
            .observed
            .iter()
            .map(|&i| logs[i] - lk + 0.5 * g[(i, k)])
            .collect();
        ll -= pat.observed.iter().map(|&i| logs[i]).sum::<f64>();
        if let Some(c) = &pat.obs_cov {
            ll += c.ln_pdf(&tilde);
        }
        let upper: Vec<f64> = pat
            .censored
            .iter()
            .enumerate()
            .map(|(a, &j)| {
                let mean: f64 = pat
                    .regression
                    .row(a)
                    .iter()
                    .zip(&tilde)
                    .map(|(x, y)| x * y)
                    .sum();
                0.5 * g[(j, k)] - lk - mean
            })
            .collect();
        for block in &pat.blocks {
            ll += match block {
                CdfBlock::Single { at, sd } => ln_norm_cdf(upper[*at] / sd),
                CdfBlock::Pair { a, b, sa, sb, r } => {
                    libm::log(bvn_cdf(upper[*a] / sa, upper[*b] / sb, *r))
                }
                CdfBlock::Many { at, cov } => {
                    let sub: Vec<f64> = at.iter().map(|&a| upper[a]).collect();
                    let mut rng = RngStream::new(self.seed, tag);
                    libm::log(mvn_cdf_with(&sub, cov, &mut rng, &self.mvn)?.value)
                }
            };
        }
        Ok(ll)
    }
}

/// `ln Λ(𝟙)` with a fixed QMC stream so repeated evaluations agree.
fn ln_lambda_ones(gamma: &Variogram, mvn: &MvnOptions, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed, NORMALIZER_STREAM);
    Ok(libm::log(
        hr_extremal_coefficient_with(&vec![1.0; gamma.dim()], gamma, &mut rng, mvn)?.value,
    ))
}

fn hr_general_loglik(
    rows: &CliqueRows,
    gamma: &Variogram,
    mvn: &MvnOptions,
    seed: u64,
) -> Result<f64> {
    let mut model = CensoredHr::new(gamma.matrix(), *mvn, seed)?;
    let mut total = 0.0;
    for (h, r) in rows.iter().enumerate() {
        total += model.row(r, h as u64)?;
    }
    Ok(total - rows.len() as f64 * ln_lambda_ones(gamma, mvn, seed)?)
}

/// Censored HR log-likelihood of the rows in `L_C` for a clique `C`
/// (nodes ordered like the rows and columns of `gamma`).
///
/// Pairs use closed forms; larger cliques integrate the Gaussian factor over
/// censored coordinates with bivariate normal CDFs (quasi-Monte Carlo beyond two).
pub fn hr_censored_loglik(
    sample: &ExceedanceSample,
    clique: &[usize],
    gamma: &Variogram,
) -> Result<f64> {
    if gamma.dim() != clique.len() {
        return Err(Error::DimensionMismatch {
            expected: clique.len(),
            found: gamma.dim(),
        });
    }
    let rows = CliqueRows::new(sample, clique)?;
    if clique.len() == 2 {
        return Ok(hr_pair_loglik(&rows, gamma.get(1, 2)));
    }
    let opts = FitOptions::default();
    hr_general_loglik(&rows, gamma, &opts.mvn, opts.seed)
}

/// Censored logistic log-likelihood on a pair.
pub fn logistic_censored_loglik(
    sample: &ExceedanceSample,
    pair: &[usize],
    theta: f64,
) -> Result<f64> {
    if pair.len() != 2 {
        return Err(Error::UnsupportedFamily(
            "logistic likelihood is implemented for pairs".into(),
        ));
    }
    CliqueFamily::logistic(theta)?;
    Ok(logistic_pair_loglik(&CliqueRows::new(sample, pair)?, theta))
}

/// How the total log-likelihood of a fitted graph model is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LoglikMode {
    /// Joint when every clique is HR and the dimension allows it, otherwise composite.
    #[default]
    Auto,
    /// Full censored likelihood of the completed model, including `Λ(𝟙)`.
    Joint,
    /// Clique log-likelihoods minus censored marginal terms at separators.
    Composite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub simplex: SimplexOptions,
    /// Quasi-Monte Carlo settings for normal CDFs in three or more dimensions.
    pub mvn: MvnOptions,
    pub loglik: LoglikMode,
    /// Seed for every quasi-Monte Carlo stream; fixed so objectives are deterministic.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            simplex: SimplexOptions {
                tol: 1e-6,
                max_evals: 2000,
                initial_step: 0.25,
            },
            mvn: MvnOptions {
                points: 2000,
                shifts: 4,
            },
            loglik: LoglikMode::Auto,
            seed: 0x5eed,
        }
    }
}

/// Maximum likelihood estimate on one clique.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueFit {
    pub nodes: Vec<usize>,
    pub family: CliqueFamily,
    pub loglik: f64,
    /// Rows of the sample in `L_C`.
    pub rows: usize,
    pub converged: bool,
    pub evaluations: usize,
}

impl CliqueFit {
    /// Free parameters in the clique's parametrization.
    pub fn params(&self) -> Vec<f64> {
        match &self.family {
            CliqueFamily::Hr(g) => {
                let m = g.dim();
                let mut out = Vec::with_capacity(m * (m - 1) / 2);
                for i in 1..=m {
                    for j in (i + 1)..=m {
                        out.push(g.get(i, j));
                    }
                }
                out
            }
            CliqueFamily::Logistic { theta } => vec![*theta],
            CliqueFamily::Custom(_) => Vec::new(),
        }
    }
}

fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Off-diagonal entries in row-major upper-triangular order.
fn upper_entries(g: &Matrix) -> Vec<f64> {
    let m = g.rows();
    let mut out = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            out.push(g[(i, j)]);
        }
    }
    out
}

fn from_upper(m: usize, values: &[f64]) -> Matrix {
    let mut g = Matrix::zeros(m, m);
    let mut it = values.iter();
    for i in 0..m {
        for j in (i + 1)..m {
            let v = *it.next().expect("one value per pair");
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Starting variogram from empirical tail correlations, repaired if invalid.
fn hr_start(rows: &CliqueRows) -> Result<Variogram> {
    let m = rows.m;
    let mut g = Matrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = gamma_from_chi(rows.chi(i, j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    if let Ok(v) = validate_variogram(&g) {
        return Ok(v);
    }
    if m == 3 {
        // Drop the largest entry and fill it by summing along the other two edges.
        let entries = upper_entries(&g);
        let worst = (0..3).fold(0, |b, i| if entries[i] > entries[b] { i } else { b });
        let mut fixed = entries.clone();
        fixed[worst] = entries.iter().sum::<f64>() - entries[worst];
        if let Ok(v) = validate_variogram(&from_upper(3, &fixed)) {
            return Ok(v);
        }
    }
    let entries = upper_entries(&g);
    Variogram::exchangeable(m, entries.iter().sum::<f64>() / entries.len() as f64)
}

/// Maximizes the censored clique likelihood over a family's parameters.
///
/// Optimization runs on `log Γ_ij` (HR) or `logit θ` (logistic). For HR cliques
/// beyond pairs, parameters that leave the valid variogram cone are rejected.
/// `start` defaults to the tail-correlation inversion for HR and `θ = 0.5`.
pub fn fit_clique(
    sample: &ExceedanceSample,
    clique: &[usize],
    tag: FamilyTag,
    start: Option<&CliqueFamily>,
    opts: &FitOptions,
) -> Result<CliqueFit> {
    let rows = CliqueRows::new(sample, clique)?;
    let m = clique.len();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "cliques need at least two nodes".into(),
        ));
    }
    let n = rows.len();
    let finish =
        |family: CliqueFamily, loglik: f64, converged: bool, evaluations: usize| CliqueFit {
            nodes: clique.to_vec(),
            family,
            loglik,
            rows: n,
            converged,
            evaluations,
        };
    match tag {
        FamilyTag::Hr => {
            let init = match start {
                Some(CliqueFamily::Hr(g)) if g.dim() == m => g.clone(),
                Some(other) => {
                    return Err(Error::InvalidArgument(format!(
                        "{} start for a hr clique",
                        other.tag_name()
                    )))
                }
                None => hr_start(&rows)?,
            };
            let x0: Vec<f64> = upper_entries(init.matrix())
                .iter()
                .map(|v| libm::log(*v))
                .collect();
            if m == 2 {
                let best = minimize(
                    |x| -hr_pair_loglik(&rows, libm::exp(x[0])),
                    &x0,
                    &opts.simplex,
                )?;
                let gamma = Variogram::pair(libm::exp(best.argmin[0]))?;
                return Ok(finish(
                    CliqueFamily::Hr(gamma),
                    -best.value,
                    best.converged,
                    best.evaluations,
                ));
            }
            let objective = |x: &[f64]| {
                let values: Vec<f64> = x.iter().map(|v| libm::exp(*v)).collect();
                match validate_variogram(&from_upper(m, &values)) {
                    Ok(g) => hr_general_loglik(&rows, &g, &opts.mvn, opts.seed)
                        .map_or(f64::INFINITY, |l| -l),
                    Err(_) => f64::INFINITY,
                }
            };
            let best = minimize(objective, &x0, &opts.simplex)?;
            let values: Vec<f64> = best.argmin.iter().map(|v| libm::exp(*v)).collect();
            let gamma = validate_variogram(&from_upper(m, &values))?;
            Ok(finish(
                CliqueFamily::Hr(gamma),
                -best.value,
                best.converged,
                best.evaluations,
            ))
        }
        FamilyTag::Logistic => {
            if m != 2 {
                return Err(Error::UnsupportedFamily(format!(
                    "logistic family on clique {clique:?}"
                )));
            }
            let theta0 = match start {
                Some(CliqueFamily::Logistic { theta }) => *theta,
                Some(other) => {
                    return Err(Error::InvalidArgument(format!(
                        "{} start for a logistic clique",
                        other.tag_name()
                    )))
                }
                None => 0.5,
            };
            let best = minimize(
                |x| -logistic_pair_loglik(&rows, sigmoid(x[0])),
                &[logit(theta0)],
                &opts.simplex,
            )?;
            let family = CliqueFamily::logistic(sigmoid(best.argmin[0]))?;
            Ok(finish(
                family,
                -best.value,
                best.converged,
                best.evaluations,
            ))
        }
    }
}

/// Censored log-likelihood of a clique family evaluated on a sample.
pub fn clique_censored_loglik(
    sample: &ExceedanceSample,
    clique: &[usize],
    family: &CliqueFamily,
    opts: &FitOptions,
) -> Result<f64> {
    let rows = CliqueRows::new(sample, clique)?;
    match family {
        CliqueFamily::Hr(g) if g.dim() == clique.len() => {
            if g.dim() == 2 {
                Ok(hr_pair_loglik(&rows, g.get(1, 2)))
            } else {
                hr_general_loglik(&rows, g, &opts.mvn, opts.seed)
            }
        }
        CliqueFamily::Hr(g) => Err(Error::DimensionMismatch {
            expected: clique.len(),
            found: g.dim(),
        }),
        CliqueFamily::Logistic { theta } if clique.len() == 2 => {
            Ok(logistic_pair_loglik(&rows, *theta))
        }
        other => Err(Error::UnsupportedFamily(format!(
            "censored likelihood for {} on {clique:?}",
            other.tag_name()
        ))),
    }
}

/// `Σ_{h: y_v > 1} ln(y_v⁻²)`: the censored univariate Pareto log-likelihood of node `v`.
pub fn marginal_loglik(sample: &ExceedanceSample, v: usize) -> f64 {
    (0..sample.len())
        .map(|h| sample.rows[(h, v - 1)])
        .filter(|&y| y > 1.0)
        .map(|y| -2.0 * libm::log(y))
        .sum()
}

/// Full censored log-likelihood of an all-HR variogram, normalized by `Λ(𝟙)`.
///
/// Censored coordinates that are conditionally independent given the observed
/// ones factor into separate normal CDFs; blocks beyond two dimensions use
/// quasi-Monte Carlo with one stream per row derived from `rng`.
pub fn hr_joint_censored_loglik(
    sample: &ExceedanceSample,
    gamma: &Variogram,
    rng: &mut RngStream,
    mvn: &MvnOptions,
) -> Result<f64> {
    let d = gamma.dim();
    if d != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: d,
        });
    }
    if d > MAX_MVN_DIM {
        return Err(Error::Unsupported(format!(
            "joint likelihood in dimension {d} (at most {MAX_MVN_DIM})"
        )));
    }
    let seed = rng.next_u64();
    let mut model = CensoredHr::new(gamma.matrix(), *mvn, seed)?;
    let mut logs = vec![0.0; d];
    let mut total = 0.0;
    for h in 0..sample.len() {
        for (l, y) in logs.iter_mut().zip(sample.rows.row(h)) {
            *l = libm::log(*y);
        }
        total += model.row(&logs, h as u64)?;
    }
    Ok(total - sample.len() as f64 * ln_lambda_ones(gamma, mvn, seed)?)
}

/// Joint censored log-likelihood of an all-HR graph model.
pub fn joint_censored_loglik(
    sample: &ExceedanceSample,
    spec: &GraphModelSpec,
    rng: &mut RngStream,
    mvn: &MvnOptions,
) -> Result<f64> {
    let gamma = spec.completed_variogram()?;
    hr_joint_censored_loglik(sample, &gamma, rng, mvn)
}

/// Fitted graph model with its likelihood summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub spec: GraphModelSpec,
    /// Per-clique estimates in decomposition order.
    pub cliques: Vec<CliqueFit>,
    pub loglik: f64,
    /// Mode actually used (never `Auto`).
    pub mode: LoglikMode,
    pub params: usize,
    /// `2p − 2·loglik`.
    pub aic: f64,
    /// Completed variogram for all-HR models.
    pub gamma: Option<Variogram>,
}

impl FitReport {
    pub fn converged(&self) -> bool {
        self.cliques.iter().all(|c| c.converged)
    }
}

fn resolve_mode(mode: LoglikMode, spec: &GraphModelSpec) -> LoglikMode {
    match mode {
        LoglikMode::Auto if spec.all_hr() && spec.dim() <= MAX_MVN_DIM => LoglikMode::Joint,
        LoglikMode::Auto => LoglikMode::Composite,
        other => other,
    }
}

/// Builds a report from clique fits on `graph`; fits may come in any order.
pub fn assemble_report(
    sample: &ExceedanceSample,
    graph: &UGraph,
    fits: Vec<CliqueFit>,
    opts: &FitOptions,
) -> Result<FitReport> {
    let spec = GraphModelSpec::new(
        graph.clone(),
        fits.iter()
            .map(|f| (f.nodes.clone(), f.family.clone()))
            .collect(),
    )?;
    let mut by_clique: Vec<Option<CliqueFit>> = vec![None; fits.len()];
    for fit in fits {
        let mut sorted = fit.nodes.clone();
        sorted.sort_unstable();
        let pos = spec
            .cliques()
            .iter()
            .position(|c| *c == sorted)
            .expect("spec checked every clique");
        by_clique[pos] = Some(fit);
    }
    let cliques: Vec<CliqueFit> = by_clique
        .into_iter()
        .map(|f| f.expect("one fit per clique"))
        .collect();
    let gamma = if spec.all_hr() {
        Some(spec.completed_variogram()?)
    } else {
        None
    };
    let mode = resolve_mode(opts.loglik, &spec);
    let loglik = match (mode, &gamma) {
        (LoglikMode::Joint, Some(g)) => {
            hr_joint_censored_loglik(sample, g, &mut RngStream::new(opts.seed, 0), &opts.mvn)?
        }
        (LoglikMode::Joint, None) => {
            return Err(Error::UnsupportedFamily(
                "joint likelihood needs Hüsler–Reiss cliques".into(),
            ))
        }
        _ => {
            let seps: f64 = spec
                .decomposition()
                .separators
                .iter()
                .map(|s| marginal_loglik(sample, s[0]))
                .sum();
            cliques.iter().map(|c| c.loglik).sum::<f64>() - seps
        }
    };
    let params = spec.param_count();
    Ok(FitReport {
        spec,
        cliques,
        loglik,
        mode,
        params,
        aic: 2.0 * params as f64 - 2.0 * loglik,
        gamma,
    })
}

/// Fits every clique of a block graph with family `tag` and assembles the report.
///
/// `starts` optionally provides starting values for some cliques (node lists in any order).
pub fn fit_graph<E: Executor>(
    sample: &ExceedanceSample,
    graph: &UGraph,
    tag: FamilyTag,
    starts: &[(Vec<usize>, CliqueFamily)],
    exec: &E,
    opts: &FitOptions,
) -> Result<FitReport> {
    if graph.dim() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: graph.dim(),
        });
    }
    let dec = block_decomposition(graph, usize::MAX)?;
    let start_for = |clique: &[usize]| -> Option<CliqueFamily> {
        starts.iter().find_map(|(nodes, fam)| {
            let mut sorted = nodes.clone();
            sorted.sort_unstable();
            if sorted != clique {
                return None;
            }
            match fam {
                // Reorder HR starts to the sorted clique order.
                CliqueFamily::Hr(g) => {
                    let perm: Vec<usize> = clique
                        .iter()
                        .map(|v| nodes.iter().position(|w| w == v).expect("same nodes") + 1)
                        .collect();
                    Some(CliqueFamily::Hr(g.restrict(&perm)))
                }
                other => Some(other.clone()),
            }
        })
    };
    let fits = exec.map(dec.cliques.clone(), |clique| {
        let start = start_for(&clique);
        fit_clique(sample, &clique, tag, start.as_ref(), opts)
    });
    assemble_report(
        sample,
        graph,
        fits.into_iter().collect::<Result<Vec<_>>>()?,
        opts,
    )
}

/// Result of maximizing the joint censored likelihood over all clique parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub spec: GraphModelSpec,
    pub gamma: Variogram,
    pub loglik: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Joint HR maximum likelihood on a block graph, started from `start`
/// (typically the clique-wise fit).
pub fn fit_joint_hr(
    sample: &ExceedanceSample,
    start: &GraphModelSpec,
    opts: &FitOptions,
) -> Result<JointFit> {
    let graph = start.graph().clone();
    let cliques = start.cliques().to_vec();
    let mut x0 = Vec::new();
    for family in start.families() {
        match family {
            CliqueFamily::Hr(g) => {
                x0.extend(upper_entries(g.matrix()).iter().map(|v| libm::log(*v)))
            }
            other => {
                return Err(Error::UnsupportedFamily(format!(
                    "joint fit of a {} clique",
                    other.tag_name()
                )))
            }
        }
    }
    let build = |x: &[f64]| -> Result<GraphModelSpec> {
        let mut at = 0;
        let mut parts = Vec::with_capacity(cliques.len());
        for c in &cliques {
            let k = c.len() * (c.len() - 1) / 2;
            let values: Vec<f64> = x[at..at + k].iter().map(|v| libm::exp(*v)).collect();
            at += k;
            parts.push((
                c.clone(),
                CliqueFamily::Hr(validate_variogram(&from_upper(c.len(), &values))?),
            ));
        }
        GraphModelSpec::new(graph.clone(), parts)
    };
    let objective = |x: &[f64]| {
        build(x)
            .and_then(|spec| {
                joint_censored_loglik(sample, &spec, &mut RngStream::new(opts.seed, 0), &opts.mvn)
            })
            .map_or(f64::INFINITY, |l| -l)
    };
    let best = minimize(objective, &x0, &opts.simplex)?;
    let spec = build(&best.argmin)?;
    let gamma = spec.completed_variogram()?;
    Ok(JointFit {
        spec,
        gamma,
        loglik: -best.value,
        converged: best.converged,
        evaluations: best.evaluations,
    })
}

/// Fewest joint exceedances for an unflagged empirical `χ`.
pub const MIN_JOINT_EXCEEDANCES: usize = 5;

/// Empirical tail correlation with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Observations exceeding the threshold in every component involved.
    pub joint: usize,
    /// Set when `joint < MIN_JOINT_EXCEEDANCES`.
    pub flagged: bool,
}

fn chi_counts(std: &Matrix, nodes: &[usize], q: f64) -> Result<ChiEstimate> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold quantile {q} outside (0, 1)"
        )));
    }
    let d = std.cols();
    if let Some(&v) = nodes.iter().find(|&&v| v == 0 || v > d) {
        return Err(Error::NodeOutOfRange { node: v, dim: d });
    }
    let u = 1.0 / (1.0 - q);
    let mut single = vec![0usize; nodes.len()];
    let mut joint = 0usize;
    for h in 0..std.rows() {
        let row = std.row(h);
        let mut all = true;
        for (c, &v) in single.iter_mut().zip(nodes) {
            if row[v - 1] > u {
                *c += 1;
            } else {
                all = false;
            }
        }
        joint += all as usize;
    }
    // Average the conditional frequency over the conditioning component.
    let (mut value, mut weight) = (0.0, 0.0);
    for &c in &single {
        if c > 0 {
            value += joint as f64 / c as f64;
            weight += c as f64;
        }
    }
    let used = single.iter().filter(|&&c| c > 0).count();
    let value = if used > 0 { value / used as f64 } else { 0.0 };
    let m = if used > 0 { weight / used as f64 } else { 0.0 };
    let std_error = if m > 0.0 {
        libm::sqrt(value * (1.0 - value).max(0.0) / m)
    } else {
        f64::INFINITY
    };
    Ok(ChiEstimate {
        value,
        std_error,
        joint,
        flagged: joint < MIN_JOINT_EXCEEDANCES,
    })
}

/// `χ̂_ij`: the fraction of threshold exceedances of one margin that are joint,
/// averaged over both margins. `std` is on standard Pareto scale.
pub fn chi_empirical(std: &Matrix, i: usize, j: usize, q: f64) -> Result<ChiEstimate> {
    chi_counts(std, &[i, j], q)
}

/// Trivariate analogue of [`chi_empirical`], averaged over the three conditioning margins.
pub fn chi3_empirical(std: &Matrix, i: usize, j: usize, k: usize, q: f64) -> Result<ChiEstimate> {
    chi_counts(std, &[i, j, k], q)
}

/// HR tail correlation `2 − 2Φ(√Γ_ij/2)`.
pub fn chi_model(gamma: &Variogram, i: usize, j: usize) -> f64 {
    2.0 - 2.0 * norm_cdf(0.5 * libm::sqrt(gamma.get(i, j)))
}

/// Model tail correlation of a graph spec.
///
/// Pairs inside a clique use the clique family; other pairs of an all-HR spec
/// use the completed variogram; the remaining cases are estimated as
/// `E min(1, U^i_j)` from `draws` extremal functions.
pub fn chi_model_spec(
    spec: &GraphModelSpec,
    i: usize,
    j: usize,
    rng: &mut RngStream,
    draws: usize,
) -> Result<f64> {
    let d = spec.dim();
    if let Some(&v) = [i, j].iter().find(|&&v| v == 0 || v > d) {
        return Err(Error::NodeOutOfRange { node: v, dim: d });
    }
    if i == j {
        return Ok(1.0);
    }
    if let Some(c) = spec.clique_of_pair(i, j) {
        let nodes = &spec.cliques()[c];
        let a = nodes
            .iter()
            .position(|&v| v == i)
            .expect("pair inside clique");
        let b = nodes
            .iter()
            .position(|&v| v == j)
            .expect("pair inside clique");
        return Ok(spec.families()[c].pair_chi(a, b));
    }
    if spec.all_hr() {
        return Ok(chi_model(&spec.completed_variogram()?, i, j));
    }
    let sampler = ExtremalSampler::from_spec(spec)?;
    let mut u = vec![0.0; d];
    let mut sum = 0.0;
    for _ in 0..draws.max(1) {
        sampler.sample_into(i, rng, &mut u);
        sum += u[j - 1].min(1.0);
    }
    Ok(sum / draws.max(1) as f64)
}

/// HR trivariate tail correlation `3 − Λ_ij − Λ_ik − Λ_jk + Λ_ijk` at `𝟙`.
pub fn chi3_model(
    gamma: &Variogram,
    i: usize,
    j: usize,
    k: usize,
    rng: &mut RngStream,
) -> Result<MvnEstimate> {
    let d = gamma.dim();
    if let Some(&v) = [i, j, k].iter().find(|&&v| v == 0 || v > d) {
        return Err(Error::NodeOutOfRange { node: v, dim: d });
    }
    if i == j || i == k || j == k {
        return Err(Error::InvalidArgument(
            "trivariate χ needs three distinct nodes".into(),
        ));
    }
    let pairs: f64 = [(i, j), (i, k), (j, k)]
        .iter()
        .map(|&(a, b)| 2.0 * norm_cdf(0.5 * libm::sqrt(gamma.get(a, b))))
        .sum();
    let triple = hr_extremal_coefficient_with(
        &[1.0; 3],
        &gamma.restrict(&[i, j, k]),
        rng,
        &MvnOptions::default(),
    )?;
    Ok(MvnEstimate {
        value: 3.0 - pairs + triple.value,
        std_error: triple.std_error,
    })
}
