//! Adaptive Gauss–Kronrod (7/15) quadrature.

use alloc::vec::Vec;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

/// Integrates `f` over `[a, b]`; either endpoint may be infinite.
///
/// `tol` is an absolute error target for the whole integral.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    integrate_dyn(&mut f, a, b, tol)
}

fn integrate_dyn(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate_dyn(f, b, a, tol);
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(f, a, b, tol),
        (true, false) => adaptive(
            &mut |t: f64| {
                let s = 1.0 - t;
                f(a + t / s) / (s * s)
            },
            0.0,
            1.0,
            tol,
        ),
        (false, true) => adaptive(
            &mut |t: f64| {
                let s = 1.0 - t;
                f(b - t / s) / (s * s)
            },
            0.0,
            1.0,
            tol,
        ),
        (false, false) => {
            integrate_dyn(f, f64::NEG_INFINITY, 0.0, 0.5 * tol)
                + integrate_dyn(f, 0.0, f64::INFINITY, 0.5 * tol)
        }
    }
}

/// `∫₀^∞ g(x) dx` computed as `∫ g(eᵛ) eᵛ dv` over `|v| ≤ 60`, starting from unit-width pieces.
///
/// Suited to densities of positive variables whose mass is spread over many
/// orders of magnitude; non-finite integrand values count as zero.
pub fn integrate_positive<F: FnMut(f64) -> f64>(mut g: F, tol: f64) -> f64 {
    const HALF_WIDTH: f64 = 60.0;
    let mut h = |v: f64| {
        let x = libm::exp(v);
        let r = g(x) * x;
        if r.is_finite() {
            r
        } else {
            0.0
        }
    };
    let breaks: Vec<f64> = (0..=(2.0 * HALF_WIDTH) as usize)
        .map(|i| -HALF_WIDTH + i as f64)
        .collect();
    pieces(&mut h, &breaks, tol)
}

fn adaptive(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    pieces(f, &[a, b], tol)
}

fn pieces(f: &mut dyn FnMut(f64) -> f64, breaks: &[f64], tol: f64) -> f64 {
    // Interval list; bisect the worst interval until the error budget is met.
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(breaks.len() + 64);
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (r, e) = kronrod(f, w[0], w[1]);
        parts.push((w[0], w[1], r, e));
        err += e;
    }
    let mut iterations = 0;
    while err > tol && iterations < 4000 {
        iterations += 1;
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| {
                if p.3 > acc.1 {
                    (i, p.3)
                } else {
                    acc
                }
            });
        let (lo, hi, r0, e0) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            parts.push((lo, hi, r0, 0.0));
            err -= e0;
            continue;
        }
        let (r1, e1) = kronrod(f, lo, mid);
        let (r2, e2) = kronrod(f, mid, hi);
        err += e1 + e2 - e0;
        parts.push((lo, mid, r1, e1));
        parts.push((mid, hi, r2, e2));
    }
    parts.iter().map(|p| p.2).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14);
        assert!((v - 0.0).abs() < 1e-13);
    }

    #[test]
    fn infinite_ranges() {
        let v = integrate(
            |x: f64| (-x * x).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-13,
        );
        assert!((v - core::f64::consts::PI.sqrt()).abs() < 1e-11);
        let w = integrate(|x: f64| x.powi(-2), 1.0, f64::INFINITY, 1e-13);
        assert!((w - 1.0).abs() < 1e-11);
    }

    #[test]
    fn positive_axis_in_log_space() {
        // Log-normal density with a narrow peak far from 1.
        let (mu, s) = (-8.0, 0.05);
        let dens = |x: f64| {
            let z = (x.ln() - mu) / s;
            (-0.5 * z * z).exp() / (x * s * (2.0 * core::f64::consts::PI).sqrt())
        };
        assert!((integrate_positive(dens, 1e-12) - 1.0).abs() < 1e-10);
        assert!(
            (integrate_positive(|x| x * dens(x), 1e-14) - (mu + 0.5 * s * s).exp()).abs() < 1e-10
        );
    }
}
