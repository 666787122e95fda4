//! Seeded i.i.d. sampling from a [`Pmf`].
//!
//! Draws go through an alias table (O(n) setup, O(1) per draw). Every random
//! stream is a `Pcg64Mcg` seeded from a 64-bit value; independent streams for
//! parallel trials come from [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rand_pcg::Pcg64Mcg;

use crate::dist::{Pmf, SampleSet};

/// Generator used for every random stream in the crate.
pub type TrialRng = Pcg64Mcg;

pub fn rng_from_seed(seed: u64) -> TrialRng {
    TrialRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `(a, b)` under `master`; a fixed function of its inputs.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(master) ^ a) ^ b.rotate_left(32))
}

/// Anything the testers can pull i.i.d. domain elements from.
pub trait SampleSource {
    fn domain_size(&self) -> usize;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize;
}

/// Alias-table sampler over a pmf.
#[derive(Debug, Clone)]
pub struct AliasSampler {
    n: usize,
    table: Option<WeightedAliasIndex<f64>>,
}

impl AliasSampler {
    pub fn new(p: &Pmf) -> Self {
        // The alias table needs at least one positive weight, which every
        // valid pmf has; a point mass on a single element needs no table.
        let table = if p.len() == 1 {
            None
        } else {
            Some(WeightedAliasIndex::new(p.probs().to_vec()).expect("valid pmf has positive mass"))
        };
        AliasSampler { n: p.len(), table }
    }
}

impl SampleSource for AliasSampler {
    fn domain_size(&self) -> usize {
        self.n
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.table {
            Some(t) => t.sample(rng),
            None => 0,
        }
    }
}

/// `m` i.i.d. draws from `p`; identical `(p, m, seed)` give identical draws.
pub fn sample(p: &Pmf, m: usize, seed: u64) -> SampleSet {
    let sampler = AliasSampler::new(p);
    let mut rng = rng_from_seed(seed);
    let draws = (0..m).map(|_| sampler.draw(&mut rng)).collect();
    SampleSet::from_trusted(draws, p.len(), seed)
}
