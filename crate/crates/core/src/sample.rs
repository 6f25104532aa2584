//! Deterministic sampling.
//!
//! Every randomized routine takes an explicit root seed. Per-trial (or
//! per-check) generators are derived as
//! `ChaCha8 ∘ splitmix64(root ⊕ (counter + 1) · 0x9E3779B97F4A7C15)`,
//! so results are independent of evaluation order and adding a new consumer
//! never perturbs the streams of existing ones.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::JordanSpec;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed for stream `counter` under `root`.
pub fn derive_seed(root: u64, counter: u64) -> u64 {
    splitmix64(root ^ counter.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// Deterministic generator for stream `counter` under `root`.
pub fn rng_for(root: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, counter))
}

/// Uniform sampling box for boundary coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Sampler {
    pub radius: f64,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler { radius: 10.0 }
    }
}

impl Sampler {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0, "sampler radius must be positive");
        Sampler { radius }
    }

    pub fn uniform(&self, rng: &mut impl Rng, span: f64) -> f64 {
        rng.gen_range(-span..=span)
    }

    /// A point uniform in `[-radius, radius]^n`.
    pub fn point(&self, rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-self.radius..=self.radius)).collect()
    }

    /// A pair of points whose max-norm difference exceeds `min_gap`.
    pub fn distinct_pair(
        &self,
        rng: &mut impl Rng,
        n: usize,
        min_gap: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        loop {
            let p = self.point(rng, n);
            let q = self.point(rng, n);
            if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > min_gap) {
                return (p, q);
            }
        }
    }

    /// A unit vector (Euclidean) supported on `positions`, embedded in
    /// dimension `n`.
    pub fn block_direction(&self, rng: &mut impl Rng, n: usize, positions: &[usize]) -> Vec<f64> {
        let mut v = vec![0.0; n];
        loop {
            let mut norm2 = 0.0;
            for &i in positions {
                let x: f64 = rng.gen_range(-1.0..=1.0);
                v[i] = x;
                norm2 += x * x;
            }
            if norm2 > 1e-6 {
                let norm = norm2.sqrt();
                for &i in positions {
                    v[i] /= norm;
                }
                return v;
            }
        }
    }
}

/// A random spectral description: up to `max_alphas` distinct eigenvalues in
/// `alpha_range`, Jordan block sizes at most `max_size`, total dimension at
/// most `max_n`.
pub fn random_spec(
    rng: &mut impl Rng,
    max_n: usize,
    alpha_range: (f64, f64),
    max_size: usize,
) -> JordanSpec {
    loop {
        let n_alphas = rng.gen_range(1..=3usize);
        let mut blocks = Vec::new();
        let mut total = 0usize;
        for _ in 0..n_alphas {
            let alpha = rng.gen_range(alpha_range.0..=alpha_range.1);
            let n_chains = rng.gen_range(1..=2usize);
            let mut sizes = Vec::new();
            for _ in 0..n_chains {
                let s = rng.gen_range(1..=max_size);
                if total + s > max_n {
                    break;
                }
                sizes.push(s);
                total += s;
            }
            if !sizes.is_empty() {
                blocks.push((alpha, sizes));
            }
        }
        if total == 0 {
            continue;
        }
        if let Ok(spec) = JordanSpec::new(blocks) {
            return spec;
        }
    }
}
