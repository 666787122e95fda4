//! Probability mass functions over a finite domain `[n] = {0, .., n-1}`,
//! relabelings of the domain, and the two distances the testers work with.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on the total mass of a [`Pmf`].
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("empty sample set")]
    EmptySample,
    #[error("sample {index} outside domain [0, {n})")]
    OutOfDomain { index: usize, n: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

pub(crate) fn check_same_len(left: usize, right: usize) -> Result<(), DistError> {
    if left != right {
        return Err(DistError::Dimension { left, right });
    }
    Ok(())
}

/// A probability mass function over `[n]`.
///
/// Entries are non-negative and sum to one within [`MASS_TOLERANCE`].
/// Construction never renormalizes silently; use [`Pmf::normalized`] when
/// the input is a vector of unnormalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfRepr", into = "PmfRepr")]
pub struct Pmf {
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PmfRepr {
    n: usize,
    probs: Vec<f64>,
}

impl TryFrom<PmfRepr> for Pmf {
    type Error = DistError;

    fn try_from(repr: PmfRepr) -> Result<Self, Self::Error> {
        check_same_len(repr.n, repr.probs.len())?;
        Pmf::new(repr.probs)
    }
}

impl From<Pmf> for PmfRepr {
    fn from(p: Pmf) -> Self {
        PmfRepr { n: p.probs.len(), probs: p.probs }
    }
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistError> {
        if probs.is_empty() {
            return Err(DistError::InvalidPmf("domain must be non-empty".into()));
        }
        if let Some((i, &v)) = probs.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(DistError::InvalidPmf(format!("entry {i} is {v}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(DistError::InvalidPmf(format!("entries sum to {total}")));
        }
        Ok(Pmf { probs })
    }

    /// Scales non-negative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self, DistError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DistError::InvalidPmf("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(DistError::InvalidPmf("weights sum to zero".into()));
        }
        Pmf::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self, DistError> {
        if n == 0 {
            return Err(DistError::InvalidPmf("domain must be non-empty".into()));
        }
        Ok(Pmf { probs: vec![1.0 / n as f64; n] })
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self, DistError> {
        if at >= n {
            return Err(DistError::OutOfDomain { index: at, n });
        }
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Ok(Pmf { probs })
    }

    /// Domain size `n`.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Mass of a set of domain elements.
    pub fn mass_of<I: IntoIterator<Item = usize>>(&self, elements: I) -> f64 {
        elements.into_iter().map(|i| self.probs[i]).sum()
    }

    /// The probability values in non-decreasing order.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.probs.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

impl std::ops::Index<usize> for Pmf {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

/// A bijection on `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = DistError;

    fn try_from(mapping: Vec<usize>) -> Result<Self, Self::Error> {
        Permutation::new(mapping)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.mapping
    }
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self, DistError> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for (i, &j) in mapping.iter().enumerate() {
            if j >= n {
                return Err(DistError::InvalidPermutation(format!("pi({i}) = {j} is outside [0, {n})")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(DistError::InvalidPermutation(format!("{j} appears twice")));
            }
        }
        Ok(Permutation { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { mapping: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn get(&self, i: usize) -> usize {
        self.mapping[i]
    }
}

/// Draws from a pmf together with the seed that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    draws: Vec<usize>,
    n: usize,
    seed: u64,
}

impl SampleSet {
    /// Wraps externally supplied draws, rejecting any index outside `[0, n)`.
    pub fn from_draws(draws: Vec<usize>, n: usize, seed: u64) -> Result<Self, DistError> {
        if let Some(&index) = draws.iter().find(|&&d| d >= n) {
            return Err(DistError::OutOfDomain { index, n });
        }
        Ok(SampleSet { draws, n, seed })
    }

    pub(crate) fn from_trusted(draws: Vec<usize>, n: usize, seed: u64) -> Self {
        SampleSet { draws, n, seed }
    }

    pub fn draws(&self) -> &[usize] {
        &self.draws
    }

    /// Number of samples `m`.
    pub fn count(&self) -> usize {
        self.draws.len()
    }

    pub fn domain_size(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl fmt::Display for SampleSet {
    /// Newline-separated 0-based indices, the on-disk samples format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.draws {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Total variation distance, `(1/2) * sum_i |p(i) - q(i)|`.
pub fn tv_distance(p: &Pmf, q: &Pmf) -> Result<f64, DistError> {
    check_same_len(p.len(), q.len())?;
    let l1: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * l1)
}

/// Largest gap between the two CDFs over the ordered domain `0..n`.
pub fn kolmogorov_distance(p: &Pmf, q: &Pmf) -> Result<f64, DistError> {
    check_same_len(p.len(), q.len())?;
    let (mut cp, mut cq, mut best) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in p.probs.iter().zip(&q.probs) {
        cp += a;
        cq += b;
        best = best.max((cp - cq).abs());
    }
    Ok(best)
}

/// Relabels `q` by `pi`: the result assigns `q(pi(i))` to element `i`.
pub fn apply_permutation(q: &Pmf, pi: &Permutation) -> Result<Pmf, DistError> {
    check_same_len(q.len(), pi.len())?;
    Ok(Pmf { probs: pi.mapping.iter().map(|&j| q.probs[j]).collect() })
}

/// Histogram of the draws, divided by the sample count.
pub fn empirical_pmf(samples: &SampleSet, n: usize) -> Result<Pmf, DistError> {
    if samples.count() == 0 {
        return Err(DistError::EmptySample);
    }
    let mut counts = vec![0u64; n];
    for &d in samples.draws() {
        if d >= n {
            return Err(DistError::OutOfDomain { index: d, n });
        }
        counts[d] += 1;
    }
    let m = samples.count() as f64;
    Ok(Pmf { probs: counts.into_iter().map(|c| c as f64 / m).collect() })
}

/// Sample size after which the empirical distribution is within Kolmogorov
/// distance `delta` of the truth except with probability `beta`, using the
/// tail bound `2 exp(-2 m delta^2)` with Massart's constant.
pub fn dkw_sample_count(delta: f64, beta: f64) -> Result<u64, DistError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(DistError::Parameter(format!("delta = {delta} not in (0, 1]")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(DistError::Parameter(format!("beta = {beta} not in (0, 1)")));
    }
    let m = ((2.0 / beta).ln() / (2.0 * delta * delta)).ceil();
    Ok((m as u64).max(1))
}
