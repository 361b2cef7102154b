//! Bivariate normal probabilities by Gauss–Legendre quadrature of the
//! Drezner–Wesolowsky integrand (Genz's BVND scheme).

use super::special::{norm_cdf, norm_sf};
use core::f64::consts::PI;

// Half-sets of Gauss–Legendre nodes and weights for 6, 12 and 20 points.
const W6: [f64; 3] = [
    0.171_324_492_379_170_5,
    0.360_761_573_048_138_4,
    0.467_913_934_572_690_4,
];
const X6: [f64; 3] = [
    -0.932_469_514_203_152_2,
    -0.661_209_386_466_264_7,
    -0.238_619_186_083_197,
];
const W12: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const X12: [f64; 6] = [
    -0.981_560_634_246_719_1,
    -0.904_117_256_370_475,
    -0.769_902_674_194_305,
    -0.587_317_954_286_617_1,
    -0.367_831_498_998_180_2,
    -0.125_233_408_511_469_2,
];
const W20: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const X20: [f64; 10] = [
    -0.993_128_599_185_094_9,
    -0.963_971_927_277_913_8,
    -0.912_234_428_251_326,
    -0.839_116_971_822_218_8,
    -0.746_331_906_460_150_8,
    -0.636_053_680_726_515,
    -0.510_867_001_950_827_1,
    -0.373_706_088_715_419_6,
    -0.227_785_851_141_645_1,
    -0.076_526_521_133_497_33,
];

/// `P(X > h, Y > k)` for standard normals with correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return norm_sf(k);
    }
    if k == f64::NEG_INFINITY {
        return norm_sf(h);
    }
    if r == 0.0 {
        return norm_sf(h) * norm_sf(k);
    }
    if r >= 1.0 {
        return norm_sf(h.max(k));
    }
    if r <= -1.0 {
        return (norm_cdf(-k) - norm_cdf(h)).max(0.0);
    }

    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&W6, &X6)
    } else if r.abs() < 0.75 {
        (&W12, &X12)
    } else {
        (&W20, &X20)
    };

    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = libm::asin(r);
        for (&wi, &xi) in w.iter().zip(x) {
            for sign in [1.0, -1.0] {
                let sn = libm::sin(asr * (sign * xi + 1.0) * 0.5);
                bvn += wi * libm::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        return bvn * asr / (4.0 * PI) + norm_sf(h) * norm_sf(k);
    }

    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = libm::sqrt(a_s);
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * libm::exp(-(bs / a_s + hk) * 0.5)
            * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = libm::sqrt(bs);
            bvn -= libm::exp(-hk * 0.5)
                * libm::sqrt(2.0 * PI)
                * norm_cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a *= 0.5;
        for (&wi, &xi) in w.iter().zip(x) {
            for sign in [1.0, -1.0] {
                let xs = (a * (sign * xi + 1.0)) * (a * (sign * xi + 1.0));
                let rs = libm::sqrt(1.0 - xs);
                let asr = -(bs / xs + hk) * 0.5;
                if asr > -100.0 {
                    bvn += a
                        * wi
                        * libm::exp(asr)
                        * (libm::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / (2.0 * PI);
    }
    if r > 0.0 {
        bvn += norm_sf(h.max(k));
    } else {
        bvn = -bvn;
        if k > h {
            if h < 0.0 {
                bvn += norm_cdf(k) - norm_cdf(h);
            } else {
                bvn += norm_cdf(-h) - norm_cdf(-k);
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(X ≤ x, Y ≤ y)` for standard normals with correlation `r`.
#[inline]
pub fn bvn_cdf(x: f64, y: f64, r: f64) -> f64 {
    bvn_upper(-x, -y, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quad::integrate;

    // Oracle: Φ2(x, y; r) = ∫_{-∞}^{x} φ(s) Φ((y - r s)/√(1-r²)) ds by adaptive quadrature.
    fn oracle(x: f64, y: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        integrate(
            |t: f64| crate::numerics::norm_pdf(t) * norm_cdf((y - r * t) / s),
            -40.0,
            x,
            1e-14,
        )
    }

    #[test]
    fn sheppard_orthant() {
        let p = bvn_cdf(0.0, 0.0, 0.5);
        let expected = 0.25 + libm::asin(0.5) / (2.0 * PI);
        assert!((p - expected).abs() < 1e-14);
        assert!((expected - 1.0 / 3.0).abs() < 1e-15);
        for &r in &[-0.99, -0.95, -0.6, -0.1, 0.2, 0.8, 0.93, 0.999] {
            let e = 0.25 + libm::asin(r) / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, r) - e).abs() < 1e-13, "r = {r}");
        }
    }

    #[test]
    fn independence_product() {
        for &(x, y) in &[(0.3, -1.2), (2.0, 1.0), (-3.0, 0.5)] {
            assert!((bvn_cdf(x, y, 0.0) - norm_cdf(x) * norm_cdf(y)).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_quadrature_oracle() {
        let rs = [-0.97, -0.8, -0.5, -0.2, 0.1, 0.45, 0.7, 0.9, 0.96, 0.995];
        let pts = [
            (-2.5, 1.0),
            (0.3, 0.7),
            (1.5, -0.4),
            (-0.8, -1.9),
            (3.0, 2.5),
            (-1.0, 2.0),
        ];
        for &r in &rs {
            for &(x, y) in &pts {
                let a = bvn_cdf(x, y, r);
                let b = oracle(x, y, r);
                assert!((a - b).abs() < 1e-10, "x={x} y={y} r={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn infinite_limits() {
        assert_eq!(bvn_cdf(f64::INFINITY, f64::INFINITY, 0.4), 1.0);
        assert!((bvn_cdf(f64::INFINITY, 0.7, 0.4) - norm_cdf(0.7)).abs() < 1e-15);
        assert_eq!(bvn_cdf(f64::NEG_INFINITY, 0.7, 0.4), 0.0);
    }
}
