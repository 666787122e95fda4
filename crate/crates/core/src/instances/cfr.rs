//! "Repeat and alternate" construction for tolerant testing: from two pmfs
//! `p`, `q` over `[k]`, build `c`, `f` and the bucket-constant reference `r`
//! over `[2k^2]`, then tile `blocks` independently bucket-permuted copies.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::{witness_by_values, Family, HardInstance, InstanceError, InstanceParams};
use crate::dist::{tv_distance, Pmf};
use crate::sampling::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct CfrTriple {
    pub k: usize,
    /// `p` sorted non-decreasing.
    pub base_p: Pmf,
    /// `q` sorted non-decreasing.
    pub base_q: Pmf,
    pub c: Pmf,
    pub f: Pmf,
    pub r: Pmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfrSide {
    C,
    F,
}

impl CfrTriple {
    pub fn side(&self, which: CfrSide) -> &Pmf {
        match which {
            CfrSide::C => &self.c,
            CfrSide::F => &self.f,
        }
    }

    /// Positions of bucket `I_{k,l}` for `l` in `1..=2k`.
    pub fn bucket(&self, l: usize) -> std::ops::Range<usize> {
        (l - 1) * self.k..l * self.k
    }
}

fn sorted(p: &Pmf) -> Result<Pmf, InstanceError> {
    Ok(Pmf::new(p.sorted_values())?)
}

/// Both inputs are sorted internally. Bucket `l <= k` of `c` holds
/// `p(1..k)/(2k)` in order and bucket `k + l` holds `q(1..k)/(2k)`; `f` swaps
/// the two halves; `r` is constant `p(l)/(2k)` on bucket `l` and
/// `q(l)/(2k)` on bucket `k + l`.
pub fn build_cfr(p: &Pmf, q: &Pmf) -> Result<CfrTriple, InstanceError> {
    if p.len() != q.len() {
        return Err(crate::dist::DistError::Dimension { left: p.len(), right: q.len() }.into());
    }
    let k = p.len();
    if k < 2 {
        return Err(InstanceError::Parameter(format!("k = {k} < 2")));
    }
    let (p, q) = (sorted(p)?, sorted(q)?);
    let scale = 2.0 * k as f64;
    let pv: Vec<f64> = p.probs().iter().map(|v| v / scale).collect();
    let qv: Vec<f64> = q.probs().iter().map(|v| v / scale).collect();

    let mut c = Vec::with_capacity(2 * k * k);
    let mut f = Vec::with_capacity(2 * k * k);
    let mut r = Vec::with_capacity(2 * k * k);
    for _ in 0..k {
        c.extend_from_slice(&pv);
        f.extend_from_slice(&qv);
    }
    for _ in 0..k {
        c.extend_from_slice(&qv);
        f.extend_from_slice(&pv);
    }
    for &v in pv.iter().chain(&qv) {
        r.extend(std::iter::repeat_n(v, k));
    }
    Ok(CfrTriple { k, base_p: p, base_q: q, c: Pmf::new(c)?, f: Pmf::new(f)?, r: Pmf::new(r)? })
}

fn tile(block_values: &[Vec<f64>], blocks: usize) -> Result<Pmf, InstanceError> {
    let scale = blocks as f64;
    Ok(Pmf::new(block_values.iter().flatten().map(|v| v / scale).collect())?)
}

fn assemble(
    triple: &CfrTriple,
    which: CfrSide,
    blocks: usize,
    mut permute: impl FnMut(usize, &mut Vec<f64>),
    seed: Option<u64>,
) -> Result<HardInstance, InstanceError> {
    if blocks < 1 {
        return Err(InstanceError::Parameter("blocks must be at least 1".into()));
    }
    let base = triple.side(which).probs();
    let member_blocks: Vec<Vec<f64>> = (0..blocks)
        .map(|b| {
            let mut v = base.to_vec();
            permute(b, &mut v);
            v
        })
        .collect();
    let reference_blocks = vec![triple.r.probs().to_vec(); blocks];
    let reference = tile(&reference_blocks, blocks)?;
    let member = tile(&member_blocks, blocks)?;
    let witness = witness_by_values(&reference, &member)?;
    let exact = tv_distance(triple.side(which), &triple.r)?;
    let params = InstanceParams {
        family: Some(match which {
            CfrSide::C => Family::CfrC,
            CfrSide::F => Family::CfrF,
        }),
        n: reference.len(),
        k: Some(triple.k),
        blocks: Some(blocks),
        seed,
        ..Default::default()
    };
    let inst = HardInstance::from_parts(reference, member, witness, params)?;
    if (inst.true_tv - exact).abs() > super::INSTANCE_TOLERANCE {
        return Err(InstanceError::Invariant(format!(
            "tiled distance {} differs from single-block distance {exact}",
            inst.true_tv
        )));
    }
    Ok(inst)
}

/// Member of the C or F family: `blocks` copies of `c` (or `f`), each
/// shuffled within every bucket `I_{k,l}` by its own seeded Fisher-Yates pass,
/// scaled by `1/blocks`. The reference is `blocks` copies of `r`.
pub fn family_member(
    triple: &CfrTriple,
    which: CfrSide,
    blocks: usize,
    seed: u64,
) -> Result<HardInstance, InstanceError> {
    let k = triple.k;
    assemble(
        triple,
        which,
        blocks,
        |b, v| {
            let mut rng = rng_from_seed(derive_seed(seed, b as u64, 0));
            for bucket in v.chunks_mut(k) {
                bucket.shuffle(&mut rng);
            }
        },
        Some(seed),
    )
}

/// Family member with every block permutation the identity.
pub fn family_member_unpermuted(
    triple: &CfrTriple,
    which: CfrSide,
    blocks: usize,
) -> Result<HardInstance, InstanceError> {
    assemble(triple, which, blocks, |_, _| {}, None)
}

/// Result of checking `tv(f, r) >= tv(c, r) + tv(p, q) / k` on random pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CfrGapCheck {
    pub pairs: usize,
    /// Smallest `tv(f, r) - tv(c, r) - tv(p, q) / k` observed.
    pub min_slack: f64,
    /// Description of the first violating pair, if any.
    pub failure: Option<String>,
}

fn random_sorted_pmf<R: Rng>(rng: &mut R, k: usize) -> Result<Pmf, InstanceError> {
    let mut w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + f64::MIN_POSITIVE).collect();
    w.sort_by(f64::total_cmp);
    Ok(Pmf::normalized(w)?)
}

/// Checks the distance gap on `pairs` random sorted pairs with `k` in `2..=8`,
/// computing every distance directly on the `2k^2`-vectors. A violation is a
/// slack below `-1e-12`.
pub fn verify_cfr_gap(pairs: usize, seed: u64) -> Result<CfrGapCheck, InstanceError> {
    let mut rng = rng_from_seed(seed);
    let mut min_slack = f64::INFINITY;
    let mut failure = None;
    for i in 0..pairs {
        let k = rng.random_range(2..=8);
        let (p, q) = (random_sorted_pmf(&mut rng, k)?, random_sorted_pmf(&mut rng, k)?);
        let t = build_cfr(&p, &q)?;
        let slack = tv_distance(&t.f, &t.r)? - tv_distance(&t.c, &t.r)? - tv_distance(&p, &q)? / k as f64;
        if slack < -1e-12 && failure.is_none() {
            failure = Some(format!("pair {i} (k = {k}): slack {slack:e}"));
        }
        min_slack = min_slack.min(slack);
    }
    Ok(CfrGapCheck { pairs, min_slack, failure })
}
