//! Identity testing of discrete distributions when the unknown distribution
//! is promised to be a relabeling of a known reference.
//!
//! - [`dist`]: pmfs, permutations, distances, sampling and DKW learning.
//! - [`tester`]: the bucketed permutation-identity tester and a plug-in
//!   tolerant tester.
//! - [`instances`]: exact generators for hard instance families.
//! - [`harness`]: seeded Monte Carlo error-rate experiments.

pub mod dist;
pub mod harness;
pub mod instances;
pub mod sampling;
pub mod tester;

pub use dist::{
    apply_permutation, dkw_sample_count, empirical_pmf, kolmogorov_distance, tv_distance, DistError, Permutation, Pmf,
    SampleSet,
};
pub use sampling::{derive_seed, sample, AliasSampler, SampleSource};
pub use tester::{
    build_buckets, compute_params, exact_suffix_gap, permutation_identity_test, plugin_tolerant_test,
    BucketPartition, Decision, PluginVerdict, TesterError, TesterParams, Verdict,
};
