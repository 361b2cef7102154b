//! Multivariate normal orthant-type probabilities `P(X ≤ upper)` for `X ~ N(0, Σ)`.

use super::bvn::bvn_cdf;
use super::linalg::{cholesky, CovMatrix, Matrix};
use super::rng::RngStream;
use super::special::{norm_cdf, norm_quantile_rough};
use crate::error::{Error, Result};
use alloc::vec::Vec;

/// Largest supported dimension.
pub const MAX_MVN_DIM: usize = 16;

const PRIMES: [f64; MAX_MVN_DIM] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
];

/// Quasi-Monte Carlo settings for dimension ≥ 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnOptions {
    /// Lattice points per random shift (each used with its antithetic twin).
    pub points: usize,
    /// Number of independent random shifts; the standard error is taken across them.
    pub shifts: usize,
}

impl Default for MvnOptions {
    fn default() -> Self {
        MvnOptions {
            points: 10_000,
            shifts: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    /// Standard error; zero for the deterministic low-dimensional paths.
    pub std_error: f64,
}

impl MvnEstimate {
    fn exact(value: f64) -> Self {
        MvnEstimate {
            value,
            std_error: 0.0,
        }
    }
}

/// `P(X ≤ upper)` with default options.
pub fn mvn_cdf(upper: &[f64], cov: &CovMatrix, rng: &mut RngStream) -> Result<MvnEstimate> {
    mvn_cdf_with(upper, cov, rng, &MvnOptions::default())
}

/// `P(X ≤ upper)`. Entries of `upper` may be `±∞`.
///
/// Dimensions 1 and 2 are deterministic; higher dimensions use a randomized
/// Richtmyer lattice on Genz's separation-of-variables transform.
pub fn mvn_cdf_with(
    upper: &[f64],
    cov: &CovMatrix,
    rng: &mut RngStream,
    opts: &MvnOptions,
) -> Result<MvnEstimate> {
    let d = cov.dim();
    if upper.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: upper.len(),
        });
    }
    if d > MAX_MVN_DIM {
        return Err(Error::Unsupported(alloc::format!(
            "multivariate normal CDF in dimension {d} (maximum {MAX_MVN_DIM})"
        )));
    }
    if upper.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN integration limit".into()));
    }
    if upper.contains(&f64::NEG_INFINITY) {
        return Ok(MvnEstimate::exact(0.0));
    }
    let a = cov.matrix();
    // Infinite limits marginalize away; order the rest by standardized limit.
    let mut keep: Vec<usize> = (0..d).filter(|&i| upper[i] != f64::INFINITY).collect();
    keep.sort_by(|&i, &j| {
        let si = upper[i] / libm::sqrt(a[(i, i)]);
        let sj = upper[j] / libm::sqrt(a[(j, j)]);
        si.partial_cmp(&sj).unwrap_or(core::cmp::Ordering::Equal)
    });
    match keep.len() {
        0 => Ok(MvnEstimate::exact(1.0)),
        1 => {
            let i = keep[0];
            Ok(MvnEstimate::exact(norm_cdf(
                upper[i] / libm::sqrt(a[(i, i)]),
            )))
        }
        2 => {
            let (i, j) = (keep[0], keep[1]);
            let (si, sj) = (libm::sqrt(a[(i, i)]), libm::sqrt(a[(j, j)]));
            let r = (a[(i, j)] / (si * sj)).clamp(-1.0, 1.0);
            Ok(MvnEstimate::exact(bvn_cdf(upper[i] / si, upper[j] / sj, r)))
        }
        m => {
            let sub = a.select(&keep, &keep);
            let l = cholesky(&sub)?;
            let b: Vec<f64> = keep.iter().map(|&i| upper[i]).collect();
            Ok(lattice_estimate(&l, &b, m, rng, opts))
        }
    }
}

fn lattice_estimate(
    l: &Matrix,
    b: &[f64],
    m: usize,
    rng: &mut RngStream,
    opts: &MvnOptions,
) -> MvnEstimate {
    let points = opts.points.max(1);
    let shifts = opts.shifts.max(2);
    let gen: Vec<f64> = (0..m - 1).map(|j| frac(libm::sqrt(PRIMES[j]))).collect();
    let first = norm_cdf(b[0] / l[(0, 0)]);
    let mut y = alloc::vec![0.0; m];
    let mut w = alloc::vec![0.0; m - 1];
    let mut w_anti = alloc::vec![0.0; m - 1];
    let mut shift_means = Vec::with_capacity(shifts);
    for _ in 0..shifts {
        let delta: Vec<f64> = (0..m - 1).map(|_| rng.uniform()).collect();
        let mut acc = 0.0;
        for i in 1..=points {
            for j in 0..m - 1 {
                let x = frac(i as f64 * gen[j] + delta[j]);
                // Tent periodization.
                let t = (2.0 * x - 1.0).abs();
                w[j] = t;
                w_anti[j] = 1.0 - t;
            }
            acc += 0.5
                * (integrand(l, b, first, &w, &mut y) + integrand(l, b, first, &w_anti, &mut y));
        }
        shift_means.push(acc / points as f64);
    }
    let n = shift_means.len() as f64;
    let mean = shift_means.iter().sum::<f64>() / n;
    let var = shift_means
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1.0);
    MvnEstimate {
        value: mean.clamp(0.0, 1.0),
        std_error: libm::sqrt(var / n),
    }
}

fn integrand(l: &Matrix, b: &[f64], first: f64, w: &[f64], y: &mut [f64]) -> f64 {
    let m = b.len();
    let mut e = first;
    let mut prod = first;
    for i in 1..m {
        let p = (w[i - 1] * e).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        y[i - 1] = norm_quantile_rough(p);
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        e = norm_cdf(s / l[(i, i)]);
        prod *= e;
        if prod == 0.0 {
            return 0.0;
        }
    }
    prod
}

#[inline]
fn frac(x: f64) -> f64 {
    x - libm::floor(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn cov(rows: &[&[f64]]) -> CovMatrix {
        CovMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn low_dimensional_examples() {
        let mut rng = RngStream::new(0, 0);
        let id = CovMatrix::identity(2);
        assert!((mvn_cdf(&[0.0, 0.0], &id, &mut rng).unwrap().value - 0.25).abs() < 1e-12);
        let c = cov(&[&[1.0, 0.5], &[0.5, 1.0]]);
        let sheppard = 0.25 + libm::asin(0.5) / (2.0 * PI);
        assert!((mvn_cdf(&[0.0, 0.0], &c, &mut rng).unwrap().value - sheppard).abs() < 1e-12);
        let inf = [f64::INFINITY; 4];
        assert_eq!(
            mvn_cdf(&inf, &CovMatrix::identity(4), &mut rng)
                .unwrap()
                .value,
            1.0
        );
    }

    #[test]
    fn trivariate_orthant_matches_closed_form() {
        // P(X ≤ 0) for equicorrelated ρ: 1/8 + 3 asin(ρ)/(4π).
        let rho = 0.5;
        let c = cov(&[&[1.0, rho, rho], &[rho, 1.0, rho], &[rho, rho, 1.0]]);
        let mut rng = RngStream::new(11, 0);
        let est = mvn_cdf(&[0.0; 3], &c, &mut rng).unwrap();
        let exact = 0.125 + 3.0 * libm::asin(rho) / (4.0 * PI);
        assert!(
            (est.value - exact).abs() < 1e-4 && est.std_error < 1e-4,
            "{est:?} vs {exact}"
        );
    }

    #[test]
    fn diagonal_product() {
        let c = cov(&[&[2.0, 0.0, 0.0], &[0.0, 0.5, 0.0], &[0.0, 0.0, 1.0]]);
        let u = [0.3, -0.4, 1.2];
        let mut rng = RngStream::new(3, 0);
        let est = mvn_cdf(&u, &c, &mut rng).unwrap();
        let exact = norm_cdf(0.3 / 2f64.sqrt()) * norm_cdf(-0.4 / 0.5f64.sqrt()) * norm_cdf(1.2);
        assert!((est.value - exact).abs() < 1e-9);
    }

    #[test]
    fn reproducible_and_capped() {
        let c = cov(&[
            &[1.0, 0.3, 0.2, 0.1],
            &[0.3, 1.0, 0.3, 0.2],
            &[0.2, 0.3, 1.0, 0.3],
            &[0.1, 0.2, 0.3, 1.0],
        ]);
        let u = [0.5, -0.2, 1.0, 0.1];
        let a = mvn_cdf(&u, &c, &mut RngStream::new(5, 1)).unwrap();
        let b = mvn_cdf(&u, &c, &mut RngStream::new(5, 1)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let big = CovMatrix::identity(17);
        assert!(matches!(
            mvn_cdf(&[0.0; 17], &big, &mut RngStream::new(0, 0)),
            Err(Error::Unsupported(_))
        ));
    }
}
