//! Seedable deterministic random streams and the handful of samplers the crate needs.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Streams with the same seed but different ids are independent ChaCha
/// streams, which is how parallel tasks derive their own randomness.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream sharing this seed with a different id.
    pub fn derive(&self, stream_id: u64) -> RngStream {
        RngStream::new(self.seed, stream_id)
    }

    /// A child stream whose id mixes this stream's id with `index`.
    pub fn child(&self, index: u64) -> RngStream {
        let mixed = splitmix(self.stream_id ^ splitmix(index.wrapping_add(0x51_7cc1_b727_220a)));
        RngStream::new(self.seed, mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let bits = self.inner.next_u64() >> 11;
            if bits != 0 {
                return bits as f64 * (1.0 / (1u64 << 53) as f64);
            }
        }
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let a = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(a));
        r * libm::cos(a)
    }

    pub fn exponential(&mut self) -> f64 {
        -libm::log(self.uniform())
    }

    /// Standard Pareto, `P(X > x) = 1/x` for `x ≥ 1`.
    pub fn pareto(&mut self) -> f64 {
        1.0 / self.uniform()
    }

    /// Fréchet with shape `alpha` and scale `scale`.
    pub fn frechet(&mut self, alpha: f64, scale: f64) -> f64 {
        scale * libm::pow(-libm::log(self.uniform()), -1.0 / alpha)
    }

    /// Gamma(shape, 1) by Marsaglia–Tsang, boosted for shape < 1.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0);
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0);
            return g * libm::pow(self.uniform(), 1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / libm::sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u < 1.0 - 0.0331 * x * x * x * x
                || libm::log(u) < 0.5 * x * x + d * (1.0 - v + libm::log(v))
            {
                return d * v;
            }
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
