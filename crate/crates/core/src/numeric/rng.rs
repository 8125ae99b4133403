//! Seed-splittable random streams.
//!
//! Every stream is a ChaCha8 generator seeded from a 64-bit key. Child
//! streams are derived from the parent's *key* and a label (never from the
//! parent's position), so the order in which children are created or
//! consumed does not change any child's output. Keys are mixed with
//! SplitMix64 finalization; labels are hashed with 64-bit FNV-1a.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SeededRng {
    key: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The key this stream was seeded from.
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn split(&self, label: &str) -> Self {
        Self::new(splitmix64(self.key ^ splitmix64(fnv1a(label))))
    }

    pub fn split_index(&self, index: u64) -> Self {
        Self::new(splitmix64(
            splitmix64(self.key).wrapping_add(splitmix64(index ^ 0xA076_1D64_78BD_642F)),
        ))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` iid draws from `N(mean, sd²)`.
pub fn sample_gaussian(rng: &mut SeededRng, mean: f64, sd: f64, n: usize) -> Result<Vec<f64>> {
    if sd < 0.0 || !sd.is_finite() || !mean.is_finite() {
        return Err(Error::Domain(format!(
            "gaussian needs finite mean and sd >= 0, got mean={mean}, sd={sd}"
        )));
    }
    if sd == 0.0 {
        return Ok(vec![mean; n]);
    }
    let dist = Normal::new(mean, sd).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// One draw from `Beta(alpha, beta)`.
pub fn sample_beta(rng: &mut SeededRng, alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Domain(format!(
            "beta parameters must be positive, got ({alpha}, {beta})"
        )));
    }
    let dist = Beta::new(alpha, beta).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sample(rng).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        (m, var.sqrt())
    }

    #[test]
    fn zero_sd_returns_mean() {
        let mut rng = SeededRng::new(1);
        assert_eq!(
            sample_gaussian(&mut rng, 0.0, 0.0, 3).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = SeededRng::new(2);
        let v = sample_gaussian(&mut rng, 0.0, 1.0, 100_000).unwrap();
        let (m, s) = mean_sd(&v);
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((s - 1.0).abs() < 0.02, "sd {s}");
    }

    #[test]
    fn same_seed_same_draws() {
        let a = sample_gaussian(&mut SeededRng::new(3), 1.0, 2.0, 50).unwrap();
        let b = sample_gaussian(&mut SeededRng::new(3), 1.0, 2.0, 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negative_sd_rejected() {
        let mut rng = SeededRng::new(4);
        assert!(matches!(
            sample_gaussian(&mut rng, 0.0, -1.0, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn beta_means() {
        for (a, b) in [(1.0, 1.0), (0.2, 0.2)] {
            let mut rng = SeededRng::new(5);
            let draws: Vec<f64> = (0..100_000)
                .map(|_| sample_beta(&mut rng, a, b).unwrap())
                .collect();
            assert!(draws.iter().all(|d| (0.0..=1.0).contains(d)));
            let (m, _) = mean_sd(&draws);
            assert!((m - 0.5).abs() < 0.01, "alpha={a}: mean {m}");
        }
    }

    #[test]
    fn beta_rejects_non_positive() {
        let mut rng = SeededRng::new(6);
        assert!(sample_beta(&mut rng, 0.0, 1.0).is_err());
        assert!(sample_beta(&mut rng, 1.0, -2.0).is_err());
    }

    #[test]
    fn children_independent_of_parent_position() {
        let mut parent = SeededRng::new(7);
        let before = parent.split("dropout").next_u64();
        parent.next_u64();
        parent.next_u64();
        let after = parent.split("dropout").next_u64();
        assert_eq!(before, after);
        assert_ne!(
            parent.split("dropout").next_u64(),
            parent.split("noise").next_u64()
        );
        assert_ne!(
            parent.split_index(0).next_u64(),
            parent.split_index(1).next_u64()
        );
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let root = SeededRng::new(8);
        let mut a = root.split("a");
        let mut b = root.split("b");
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| a.uniform() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.uniform() - 0.5).collect();
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        // var of U(-.5,.5) is 1/12; correlation sd ≈ 1/sqrt(n)
        let corr = cov * 12.0;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
