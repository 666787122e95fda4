//! Generators for hard instances of the permutation-promise testing problem.
//!
//! Every generator returns a [`HardInstance`]: a reference pmf, a member of
//! its permutation orbit, the permutation that produces the member, and the
//! exact TV distance between the two. Metadata is always recomputed from the
//! constructed vectors, never copied from an idealized formula.

mod birthday;
mod cfr;
mod moments;
mod multiplicative;
mod testing_lb;

pub use birthday::{birthday_load, birthday_load_weighted};
pub use cfr::{build_cfr, family_member, family_member_unpermuted, verify_cfr_gap, CfrGapCheck, CfrSide, CfrTriple};
pub use moments::{find_moment_pair, MomentPair, MAX_MOMENT_K, MAX_MOMENT_ORDER, MAX_MOMENT_VALUE};
pub use multiplicative::{
    multiplicative_instance, verify_lemmas, LemmaCheck, MultKind, MultiplicativeConfig, Rational,
};
pub use testing_lb::{testing_lb_config, testing_lb_perturbation, testing_lb_reference, TestingLbConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{apply_permutation, tv_distance, DistError, Permutation, Pmf};

/// Tolerance for the two instance invariants.
pub const INSTANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("no moment-matched pair of order {order} found with k <= {max_k} and values <= {max_value}")]
    NotFound { order: usize, max_k: usize, max_value: u64 },
    #[error("instance invariant violated: {0}")]
    Invariant(String),
}

/// Instance families understood by the generators and the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Equal,
    TestingLb,
    CfrC,
    CfrF,
    MultClose,
    MultFar,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Equal => "EQUAL",
            Family::TestingLb => "TESTING_LB",
            Family::CfrC => "CFR_C",
            Family::CfrF => "CFR_F",
            Family::MultClose => "MULT_CLOSE",
            Family::MultFar => "MULT_FAR",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Construction metadata carried alongside an instance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceParams {
    pub family: Option<Family>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "C")]
    pub c: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_buckets: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Exact distance as a reduced fraction, when known in closed form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_tv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub reference: Pmf,
    pub member: Pmf,
    /// `member = reference ∘ witness`.
    pub witness: Permutation,
    pub true_tv: f64,
    pub params: InstanceParams,
}

impl HardInstance {
    /// Builds an instance, computing `true_tv` from the vectors.
    pub(crate) fn from_parts(
        reference: Pmf,
        member: Pmf,
        witness: Permutation,
        params: InstanceParams,
    ) -> Result<Self, InstanceError> {
        let true_tv = tv_distance(&reference, &member)?;
        let inst = HardInstance { reference, member, witness, true_tv, params };
        if cfg!(debug_assertions) {
            inst.check()?;
        }
        Ok(inst)
    }

    /// The instance where the member is the reference itself.
    pub fn equal(reference: Pmf, params: InstanceParams) -> Self {
        let n = reference.len();
        HardInstance {
            member: reference.clone(),
            reference,
            witness: Permutation::identity(n),
            true_tv: 0.0,
            params: InstanceParams { family: Some(Family::Equal), n, exact_tv: Some("0".into()), ..params },
        }
    }

    pub fn n(&self) -> usize {
        self.reference.len()
    }

    /// Checks that the witness reproduces the member entrywise and that the
    /// stored distance matches a fresh computation, both within 1e-12.
    pub fn check(&self) -> Result<(), InstanceError> {
        let rebuilt = apply_permutation(&self.reference, &self.witness)?;
        let worst = rebuilt
            .probs()
            .iter()
            .zip(self.member.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if worst > INSTANCE_TOLERANCE {
            return Err(InstanceError::Invariant(format!("witness misses member by {worst:e}")));
        }
        let tv = tv_distance(&self.reference, &self.member)?;
        if (tv - self.true_tv).abs() > INSTANCE_TOLERANCE {
            return Err(InstanceError::Invariant(format!("true_tv {} but recomputed {tv}", self.true_tv)));
        }
        Ok(())
    }
}

/// Pairs equal values of `reference` and `member` to produce a witness with
/// `member(i) = reference(witness(i))`. Fails unless the two value multisets
/// are identical.
pub(crate) fn witness_by_values(reference: &Pmf, member: &Pmf) -> Result<Permutation, InstanceError> {
    let n = reference.len();
    if member.len() != n {
        return Err(DistError::Dimension { left: n, right: member.len() }.into());
    }
    let order = |p: &Pmf| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
        idx
    };
    let (ref_order, mem_order) = (order(reference), order(member));
    let mut mapping = vec![0usize; n];
    for (&i, &j) in mem_order.iter().zip(&ref_order) {
        if member[i] != reference[j] {
            return Err(InstanceError::Construction(format!(
                "member is not a permutation of the reference ({} vs {})",
                member[i], reference[j]
            )));
        }
        mapping[i] = j;
    }
    Ok(Permutation::new(mapping)?)
}
