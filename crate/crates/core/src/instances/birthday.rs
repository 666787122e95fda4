//! Balls-into-blocks simulation behind the block indistinguishability
//! argument: with few samples, no block sees more than `order` of them.

use rand::Rng;

use super::InstanceError;
use crate::dist::Pmf;
use crate::sampling::{derive_seed, rng_from_seed, AliasSampler, SampleSource};

/// Fraction of `reps` simulations, each throwing `m_samples` balls into
/// `blocks` equally likely cells, in which some cell receives at least
/// `order + 1` balls.
pub fn birthday_load(blocks: usize, m_samples: usize, order: usize, seed: u64, reps: usize) -> Result<f64, InstanceError> {
    if blocks < 1 || reps < 1 {
        return Err(InstanceError::Parameter("blocks and reps must be at least 1".into()));
    }
    Ok(simulate(blocks, m_samples, order, seed, reps, |rng| rng.random_range(0..blocks)))
}

/// Same as [`birthday_load`] with cell probabilities given by `block_mass`.
pub fn birthday_load_weighted(
    block_mass: &Pmf,
    m_samples: usize,
    order: usize,
    seed: u64,
    reps: usize,
) -> Result<f64, InstanceError> {
    if reps < 1 {
        return Err(InstanceError::Parameter("reps must be at least 1".into()));
    }
    let sampler = AliasSampler::new(block_mass);
    Ok(simulate(block_mass.len(), m_samples, order, seed, reps, |rng| sampler.draw(rng)))
}

fn simulate(
    blocks: usize,
    m_samples: usize,
    order: usize,
    seed: u64,
    reps: usize,
    mut draw: impl FnMut(&mut crate::sampling::TrialRng) -> usize,
) -> f64 {
    if m_samples <= order {
        return 0.0;
    }
    let mut loads = vec![0usize; blocks];
    let mut hits = 0usize;
    for rep in 0..reps {
        let mut rng = rng_from_seed(derive_seed(seed, rep as u64, 0));
        let mut touched = Vec::with_capacity(m_samples);
        let mut overloaded = false;
        for _ in 0..m_samples {
            let cell = draw(&mut rng);
            if loads[cell] == 0 {
                touched.push(cell);
            }
            loads[cell] += 1;
            overloaded |= loads[cell] > order;
        }
        for cell in touched {
            loads[cell] = 0;
        }
        hits += overloaded as usize;
    }
    hits as f64 / reps as f64
}
