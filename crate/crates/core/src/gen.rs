//! Seeded instance generators.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::{BitVector, BooleanMatrix};
use crate::error::{Error, Result};

/// Clustered rows: `clusters` random centers, every row a center with up to
/// `spread` random coordinates flipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenSpec {
    pub n: usize,
    pub clusters: usize,
    pub spread: usize,
    /// Probability of a 1 in each center coordinate.
    pub density: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(n: usize, clusters: usize, spread: usize, seed: u64) -> Self {
        Self {
            n,
            clusters,
            spread,
            density: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.clusters == 0 || self.clusters > self.n {
            return Err(Error::Config(format!("clusters must lie in 1..={}", self.n)));
        }
        if self.spread > self.n {
            return Err(Error::Config(format!("spread must lie in 0..={}", self.n)));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Config("density must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn random_row(n: usize, density: f64, rng: &mut ChaCha8Rng) -> BitVector {
    let mut row = BitVector::zeros(n);
    for c in 1..=n {
        if rng.gen_bool(density) {
            row.set(c, true);
        }
    }
    row
}

/// Each row picks a center uniformly and flips `spread` uniformly drawn coordinates
/// (drawn with replacement, so repeated draws cancel).
pub fn gen_clustered(spec: &GenSpec) -> Result<BooleanMatrix> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<BitVector> = (0..spec.clusters)
        .map(|_| random_row(n, spec.density, &mut rng))
        .collect();
    let rows = (0..n)
        .map(|_| {
            let mut row = centers[rng.gen_range(0..spec.clusters)].clone();
            for _ in 0..spec.spread {
                row.flip(rng.gen_range(1..=n));
            }
            row
        })
        .collect();
    BooleanMatrix::from_rows(rows)
}

/// I.i.d. Bernoulli(`density`) entries.
pub fn gen_uniform(n: usize, density: f64, seed: u64) -> Result<BooleanMatrix> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Config("density must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BooleanMatrix::from_rows((0..n).map(|_| random_row(n, density, &mut rng)).collect())
}
