//! Identity testing under the promise that the unknown distribution is a
//! relabeling of the reference.
//!
//! The reference `q` is split into geometric probability bands of ratio
//! `1 + eps/4`; a relabeling that moves real mass between bands shows up as a
//! discrepancy in some suffix of the band histogram, which an empirical
//! estimate of the band distribution detects with `O(L^2 / eps^2)` samples.
//!
//! Bucket indices are 1-based (`1..=L`); bucket `L` is the tail that collects
//! every element with reference mass at most `(1 + eps/4)^-(L-1)`, including
//! zero-mass elements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{check_same_len, dkw_sample_count, empirical_pmf, tv_distance, DistError, Pmf, SampleSet};
use crate::sampling::{rng_from_seed, SampleSource};

/// Failure probability of the band-histogram learner.
pub const LEARNER_BETA: f64 = 0.1;

/// Constant in the plug-in tester's sample budget `8 n / gap^2`.
pub const PLUGIN_CONSTANT: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TesterError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Yes,
    No,
}

impl Decision {
    pub fn is_yes(self) -> bool {
        self == Decision::Yes
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Yes => "YES",
            Decision::No => "NO",
        })
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), TesterError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(TesterError::Parameter(format!("epsilon = {epsilon} not in (0, 1]")));
    }
    Ok(())
}

/// `L = 1 + ceil(log(4n/eps) / log(1 + eps/4))`.
pub fn bucket_count(n: usize, epsilon: f64) -> usize {
    let ratio = (4.0 * n as f64 / epsilon).ln() / (1.0 + epsilon / 4.0).ln();
    1 + ratio.ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TesterParams {
    pub n: usize,
    pub epsilon: f64,
    /// Number of buckets `L`.
    pub num_buckets: usize,
    /// Suffix-deviation resolution `eps / (4 (L - 1))`.
    pub alg_delta: f64,
    pub learner_samples: u64,
    pub learner_beta: f64,
}

pub fn compute_params(n: usize, epsilon: f64) -> Result<TesterParams, TesterError> {
    check_epsilon(epsilon)?;
    if n < 2 {
        return Err(TesterError::Parameter(format!("domain size {n} < 2")));
    }
    let num_buckets = bucket_count(n, epsilon);
    let alg_delta = epsilon / (4.0 * (num_buckets - 1) as f64);
    let learner_samples = dkw_sample_count(alg_delta / 3.0, LEARNER_BETA)?;
    Ok(TesterParams { n, epsilon, num_buckets, alg_delta, learner_samples, learner_beta: LEARNER_BETA })
}

/// Geometric bucketing of the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketPartition {
    pub epsilon: f64,
    pub num_buckets: usize,
    /// Bucket index in `1..=L` for each domain element.
    pub assignment: Vec<usize>,
    /// Reference mass of each bucket; entry `l - 1` holds bucket `l`.
    pub ref_bucket_mass: Vec<f64>,
}

impl BucketPartition {
    pub fn bucket_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn members(&self, bucket: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment.iter().enumerate().filter(move |(_, &b)| b == bucket).map(|(i, _)| i)
    }
}

/// Band index of a single probability value; `tail` for values at or below
/// the last threshold.
fn band_of(value: f64, ratio: f64, tail: usize) -> usize {
    if value.is_nan() || value <= 0.0 {
        return tail;
    }
    let threshold = |l: usize| ratio.powi(-(l as i32));
    let mut l = ((1.0 / value).ln() / ratio.ln()).floor().max(0.0) as usize + 1;
    if l >= tail {
        l = tail;
    }
    // Correct floating-point drift so that threshold(l) < value <= threshold(l - 1).
    while l > 1 && value > threshold(l - 1) {
        l -= 1;
    }
    while l < tail && value <= threshold(l) {
        l += 1;
    }
    l.min(tail)
}

pub fn build_buckets(q: &Pmf, epsilon: f64) -> Result<BucketPartition, TesterError> {
    check_epsilon(epsilon)?;
    let num_buckets = bucket_count(q.len(), epsilon);
    let ratio = 1.0 + epsilon / 4.0;
    let assignment: Vec<usize> = q.probs().iter().map(|&v| band_of(v, ratio, num_buckets)).collect();
    let ref_bucket_mass = bucket_masses(q, &assignment, num_buckets);
    Ok(BucketPartition { epsilon, num_buckets, assignment, ref_bucket_mass })
}

/// Per-bucket mass of `p`, summing each bucket's values in sorted order so
/// that two pmfs with the same values inside every bucket give bit-identical
/// results.
fn bucket_masses(p: &Pmf, assignment: &[usize], num_buckets: usize) -> Vec<f64> {
    let mut per_bucket: Vec<Vec<f64>> = vec![Vec::new(); num_buckets];
    for (&v, &b) in p.probs().iter().zip(assignment) {
        per_bucket[b - 1].push(v);
    }
    per_bucket
        .into_iter()
        .map(|mut vals| {
            vals.sort_by(f64::total_cmp);
            vals.iter().sum()
        })
        .collect()
}

/// Largest `|p(S_l) - q(S_l)|` over the suffixes `S_l = B_l u .. u B_{L-1}`,
/// `l in 1..L`, and the `l` attaining it.
fn max_suffix_deviation(p_mass: &[f64], q_mass: &[f64]) -> (f64, usize) {
    let tail = p_mass.len();
    let (mut sp, mut sq) = (0.0, 0.0);
    let (mut best, mut arg) = (0.0, 1);
    for l in (1..tail).rev() {
        sp += p_mass[l - 1];
        sq += q_mass[l - 1];
        let dev = (sp - sq).abs();
        if dev >= best {
            best = dev;
            arg = l;
        }
    }
    (best, arg)
}

/// Exact (sampling-free) largest suffix deviation between `p` and `q`.
pub fn exact_suffix_gap(p: &Pmf, q: &Pmf, bp: &BucketPartition) -> Result<(f64, usize), TesterError> {
    check_same_len(p.len(), q.len())?;
    check_same_len(p.len(), bp.assignment.len())?;
    let p_mass = bucket_masses(p, &bp.assignment, bp.num_buckets);
    let q_mass = bucket_masses(q, &bp.assignment, bp.num_buckets);
    Ok(max_suffix_deviation(&p_mass, &q_mass))
}

/// Exact mass `p(B_L)` of the tail bucket.
pub fn exact_tail_mass(p: &Pmf, bp: &BucketPartition) -> Result<f64, TesterError> {
    check_same_len(p.len(), bp.assignment.len())?;
    Ok(bucket_masses(p, &bp.assignment, bp.num_buckets)[bp.num_buckets - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub decision: Decision,
    /// Empirical mass of the tail bucket.
    pub tail_mass_hat: f64,
    pub max_suffix_dev: f64,
    pub argmax_suffix: usize,
    pub samples_used: u64,
}

/// Decision rule on a band histogram: reject iff the tail holds more than
/// `3 eps / 8` or some suffix deviates from the reference by more than
/// `delta / 3`.
fn decide(params: &TesterParams, bp: &BucketPartition, counts: &[u64]) -> Verdict {
    let m: u64 = counts.iter().sum();
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
    let tail_mass_hat = freq[bp.num_buckets - 1];
    let (max_suffix_dev, argmax_suffix) = max_suffix_deviation(&freq, &bp.ref_bucket_mass);
    let reject = tail_mass_hat > 3.0 * params.epsilon / 8.0 || max_suffix_dev > params.alg_delta / 3.0;
    Verdict {
        decision: if reject { Decision::No } else { Decision::Yes },
        tail_mass_hat,
        max_suffix_dev,
        argmax_suffix,
        samples_used: m,
    }
}

/// Runs the tester with its own DKW budget.
pub fn permutation_identity_test<S: SampleSource>(
    q: &Pmf,
    epsilon: f64,
    source: &S,
    seed: u64,
) -> Result<Verdict, TesterError> {
    permutation_identity_test_with_budget(q, epsilon, source, seed, None)
}

/// Same decision rule, drawing `budget` samples instead of the learner budget
/// when one is given. Used by the harness to sweep sample sizes.
pub fn permutation_identity_test_with_budget<S: SampleSource>(
    q: &Pmf,
    epsilon: f64,
    source: &S,
    seed: u64,
    budget: Option<u64>,
) -> Result<Verdict, TesterError> {
    check_same_len(q.len(), source.domain_size())?;
    let params = compute_params(q.len(), epsilon)?;
    let bp = build_buckets(q, epsilon)?;
    let m = budget.unwrap_or(params.learner_samples);
    if m == 0 {
        return Err(TesterError::Parameter("sample budget must be positive".into()));
    }
    let mut counts = vec![0u64; bp.num_buckets];
    let mut rng = rng_from_seed(seed);
    for _ in 0..m {
        counts[bp.assignment[source.draw(&mut rng)] - 1] += 1;
    }
    Ok(decide(&params, &bp, &counts))
}

/// Applies the decision rule to a fixed sample set, using every draw. The
/// 2/3 guarantee needs at least `compute_params(..).learner_samples` draws.
pub fn permutation_identity_test_on_samples(
    q: &Pmf,
    epsilon: f64,
    samples: &SampleSet,
) -> Result<Verdict, TesterError> {
    check_same_len(q.len(), samples.domain_size())?;
    if samples.count() == 0 {
        return Err(DistError::EmptySample.into());
    }
    let params = compute_params(q.len(), epsilon)?;
    let bp = build_buckets(q, epsilon)?;
    let mut counts = vec![0u64; bp.num_buckets];
    for &d in samples.draws() {
        counts[bp.assignment[d] - 1] += 1;
    }
    Ok(decide(&params, &bp, &counts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PluginVerdict {
    pub decision: Decision,
    /// TV distance between the empirical distribution and the reference.
    pub estimate: f64,
    /// Acceptance threshold `(eps_close + eps_far) / 2`.
    pub threshold: f64,
    pub samples_used: u64,
}

fn check_tolerance_pair(eps_close: f64, eps_far: f64) -> Result<(), TesterError> {
    if !(eps_close >= 0.0 && eps_close < eps_far && eps_far <= 1.0) {
        return Err(TesterError::Parameter(format!(
            "need 0 <= eps_close < eps_far <= 1, got {eps_close} and {eps_far}"
        )));
    }
    Ok(())
}

/// `ceil(8 n / (eps_far - eps_close)^2)`.
pub fn plugin_sample_count(n: usize, eps_close: f64, eps_far: f64) -> Result<u64, TesterError> {
    check_tolerance_pair(eps_close, eps_far)?;
    let gap = eps_far - eps_close;
    Ok((PLUGIN_CONSTANT * n as f64 / (gap * gap)).ceil() as u64)
}

/// Tolerant tester: estimate TV by the empirical distribution and compare
/// against the midpoint of the two distance parameters.
pub fn plugin_tolerant_test<S: SampleSource>(
    q: &Pmf,
    eps_close: f64,
    eps_far: f64,
    source: &S,
    seed: u64,
) -> Result<PluginVerdict, TesterError> {
    plugin_tolerant_test_with_budget(q, eps_close, eps_far, source, seed, None)
}

pub fn plugin_tolerant_test_with_budget<S: SampleSource>(
    q: &Pmf,
    eps_close: f64,
    eps_far: f64,
    source: &S,
    seed: u64,
    budget: Option<u64>,
) -> Result<PluginVerdict, TesterError> {
    check_same_len(q.len(), source.domain_size())?;
    let m = match budget {
        Some(m) => {
            check_tolerance_pair(eps_close, eps_far)?;
            m
        }
        None => plugin_sample_count(q.len(), eps_close, eps_far)?,
    };
    if m == 0 {
        return Err(TesterError::Parameter("sample budget must be positive".into()));
    }
    let mut counts = vec![0u64; q.len()];
    let mut rng = rng_from_seed(seed);
    for _ in 0..m {
        counts[source.draw(&mut rng)] += 1;
    }
    Ok(plugin_decide(q, eps_close, eps_far, &counts, m))
}

/// Plug-in estimate from a fixed sample set, using every draw.
pub fn plugin_tolerant_test_on_samples(
    q: &Pmf,
    eps_close: f64,
    eps_far: f64,
    samples: &SampleSet,
) -> Result<PluginVerdict, TesterError> {
    check_tolerance_pair(eps_close, eps_far)?;
    check_same_len(q.len(), samples.domain_size())?;
    let empirical = empirical_pmf(samples, q.len())?;
    let estimate = tv_distance(&empirical, q)?;
    let threshold = 0.5 * (eps_close + eps_far);
    Ok(PluginVerdict {
        decision: if estimate <= threshold { Decision::Yes } else { Decision::No },
        estimate,
        threshold,
        samples_used: samples.count() as u64,
    })
}

fn plugin_decide(q: &Pmf, eps_close: f64, eps_far: f64, counts: &[u64], m: u64) -> PluginVerdict {
    let estimate = 0.5 * counts.iter().zip(q.probs()).map(|(&c, &v)| (c as f64 / m as f64 - v).abs()).sum::<f64>();
    let threshold = 0.5 * (eps_close + eps_far);
    PluginVerdict {
        decision: if estimate <= threshold { Decision::Yes } else { Decision::No },
        estimate,
        threshold,
        samples_used: m,
    }
}
