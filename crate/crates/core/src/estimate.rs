//! Seeded random streams, replicate fan-out, and Monte Carlo summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

/// The random stream type used by every simulation.
pub type SimRng = ChaCha8Rng;

/// Independent stream families; each replicate gets one stream per family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Resampling = 2,
    Mutation = 3,
    Selection = 4,
    Initial = 5,
    Dual = 6,
    DualEnvironment = 7,
}

/// Identifies one replicate's set of streams under a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey {
    pub master: u64,
    pub replicate: u64,
}

impl SeedKey {
    pub fn new(master: u64, replicate: u64) -> Self {
        Self { master, replicate }
    }

    /// A deterministic stream depending only on `(master, replicate, stream)`.
    pub fn rng(&self, stream: Stream) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream((self.replicate << 8) | stream as u64);
        rng
    }

    /// Keys for a sub-experiment sharing the master seed.
    pub fn derived(master: u64, salt: u64) -> u64 {
        // splitmix64 finaliser
        let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Runs `replicates` independent jobs in parallel; results come back in
/// replicate order regardless of scheduling.
pub fn run_replicates<T, F>(master: u64, replicates: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(SeedKey) -> Result<T> + Sync + Send,
{
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| job(SeedKey::new(master, r)))
        .collect()
}

/// Streaming mean/variance accumulator with an associative merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Self { count, mean, m2 }
    }

    pub fn finish(&self) -> Estimate {
        let variance = if self.count > 1 { self.m2 / (self.count - 1) as f64 } else { 0.0 };
        Estimate::new(self.mean, variance, self.count)
    }
}

/// Monte Carlo mean with its sample variance and 99% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub variance: f64,
    pub count: u64,
    pub ci99: f64,
}

impl Estimate {
    pub fn new(mean: f64, variance: f64, count: u64) -> Self {
        let ci99 = if count > 0 { Z99 * (variance / count as f64).sqrt() } else { f64::INFINITY };
        Self { mean, variance, count, ci99 }
    }

    /// Aggregates in slice order, so the result is independent of how the
    /// samples were scheduled.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut acc = Welford::default();
        samples.iter().for_each(|&x| acc.push(x));
        acc.finish()
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            f64::INFINITY
        } else {
            (self.variance / self.count as f64).sqrt()
        }
    }

    /// `sqrt(se_a² + se_b²)` for the difference of two independent estimates.
    pub fn pooled_std_error(&self, other: &Self) -> f64 {
        self.std_error().hypot(other.std_error())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let key = SeedKey::new(7, 3);
        let a: u64 = key.rng(Stream::Resampling).random();
        let b: u64 = key.rng(Stream::Resampling).random();
        let c: u64 = key.rng(Stream::Mutation).random();
        let d: u64 = SeedKey::new(7, 4).rng(Stream::Resampling).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn estimate_of_known_samples() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.variance - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.count, 4);
        assert!((e.ci99 - Z99 * (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_samples_have_zero_variance() {
        let e = Estimate::from_samples(&[0.75; 10]);
        assert_eq!(e.variance, 0.0);
        assert_eq!(e.ci99, 0.0);
    }

    #[test]
    fn welford_merge_matches_sequential() {
        let xs: Vec<f64> = (0..101).map(|i| ((i * 37) % 17) as f64 * 0.3).collect();
        let whole = Estimate::from_samples(&xs);
        let (mut a, mut b) = (Welford::default(), Welford::default());
        xs[..40].iter().for_each(|&x| a.push(x));
        xs[40..].iter().for_each(|&x| b.push(x));
        let merged = a.merge(&b).finish();
        assert!((merged.mean - whole.mean).abs() < 1e-13);
        assert!((merged.variance - whole.variance).abs() < 1e-12);
        assert_eq!(merged.count, whole.count);
    }

    #[test]
    fn replicate_results_in_order() {
        let out = run_replicates(1, 50, |k| Ok(k.replicate)).unwrap();
        assert_eq!(out, (0..50).collect::<Vec<_>>());
    }
}
