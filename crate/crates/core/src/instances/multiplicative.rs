//! Multiplicative-gap tolerant-testing family: a reference `r` on `C + 1`
//! buckets, a close pmf `p` at distance `1/(4C-1)` and a far pmf `q` at
//! distance `C/(4C-1)`, with identical bucket masses, tiled over `t` blocks.
//!
//! All values are integer numerators over the common denominator `s`, stored
//! as runs so the exact checks never materialize the vectors.

use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{witness_by_values, Family, HardInstance, InstanceError, InstanceParams};
use crate::dist::Pmf;
use crate::sampling::{derive_seed, rng_from_seed};

pub type Rational = Ratio<i128>;

/// Upper limit on `n = t * w` for materialized instances.
const MAX_DOMAIN: u64 = 1 << 27;
/// Largest `C` accepted by the exact checks (keeps `s` well inside `i128`).
const MAX_EXACT_C: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MultKind {
    Close,
    Far,
}

/// A bucket described as `(count, numerator)` runs over denominator `s`.
type Runs = Vec<(u64, u64)>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplicativeConfig {
    #[serde(rename = "C")]
    pub c: u32,
    /// `2^C - 1`.
    pub mval: u64,
    /// Common denominator `mval (4C - 1) 2^(C-1)`.
    pub s: u64,
    /// Single-block width `mval (2^(C+1) + 2^(C-1) - 3)`.
    pub w: u64,
    pub bucket_sizes: Vec<u64>,
    pub t: u64,
}

impl MultiplicativeConfig {
    pub fn new(c: u32, t: u64) -> Result<Self, InstanceError> {
        if !(2..=MAX_EXACT_C).contains(&c) {
            return Err(InstanceError::Parameter(format!("C = {c} must be in 2..={MAX_EXACT_C}")));
        }
        if t < 1 {
            return Err(InstanceError::Parameter("t must be at least 1".into()));
        }
        let mval = (1u64 << c) - 1;
        let s = (mval * (4 * c as u64 - 1)) << (c - 1);
        let w = mval * ((1u64 << (c + 1)) + (1u64 << (c - 1)) - 3);
        let mut bucket_sizes = vec![mval];
        bucket_sizes.extend((1..c).map(|i| mval << (i + 1)));
        bucket_sizes.push(mval << (c - 1));
        debug_assert_eq!(bucket_sizes.iter().sum::<u64>(), w);
        Ok(MultiplicativeConfig { c, mval, s, w, bucket_sizes, t })
    }

    /// Domain size `t * w`.
    pub fn n(&self) -> u64 {
        self.t * self.w
    }

    fn reference_runs(&self) -> Vec<Runs> {
        let c = self.c;
        let mut b = vec![vec![(self.mval, 1u64 << c)]];
        b.extend((1..c).map(|i| vec![(self.mval << (i + 1), 1u64 << (c - i))]));
        b.push(vec![(self.mval << (c - 1), 1)]);
        b
    }

    fn far_runs(&self) -> Vec<Runs> {
        let (c, m) = (self.c, self.mval);
        let mut b = vec![vec![(m, 1u64 << (c - 1))]];
        b.extend((1..c).map(|i| {
            vec![(m << i, 1u64 << (c - i - 1)), (m << (i - 1), 1u64 << (c - i)), (m << (i - 1), 1u64 << (c - i + 1))]
        }));
        b.push(vec![(m << (c - 1), 2)]);
        b
    }

    fn close_runs(&self) -> Vec<Runs> {
        let (c, m) = (self.c, self.mval);
        let half = 1u64 << (c - 1);
        let mut b = vec![vec![(half, 1), (half - 1, 1u64 << c)]];
        b.extend((1..c).map(|i| vec![(m << (i + 1), 1u64 << (c - i))]));
        b.push(vec![((m - 1) * half, 1), (half, 1u64 << c)]);
        b
    }

    fn runs(&self, kind: Option<MultKind>) -> Vec<Runs> {
        match kind {
            None => self.reference_runs(),
            Some(MultKind::Close) => self.close_runs(),
            Some(MultKind::Far) => self.far_runs(),
        }
    }

    /// Single-block numerators, bucket by bucket.
    fn block_numerators(&self, kind: Option<MultKind>) -> Vec<Vec<u64>> {
        self.runs(kind)
            .into_iter()
            .map(|runs| runs.into_iter().flat_map(|(cnt, v)| std::iter::repeat_n(v, cnt as usize)).collect())
            .collect()
    }

    fn check_size(&self) -> Result<(), InstanceError> {
        if self.n() > MAX_DOMAIN {
            return Err(InstanceError::Construction(format!(
                "domain t * w = {} exceeds the limit {MAX_DOMAIN}",
                self.n()
            )));
        }
        Ok(())
    }

    fn to_pmf(&self, values: impl Iterator<Item = u64>) -> Result<Pmf, InstanceError> {
        let denom = self.s as f64 * self.t as f64;
        Ok(Pmf::new(values.map(|v| v as f64 / denom).collect())?)
    }

    /// `r*`: `t` unpermuted copies of `r`, scaled by `1/t`.
    pub fn reference(&self) -> Result<Pmf, InstanceError> {
        self.check_size()?;
        let block: Vec<u64> = self.block_numerators(None).concat();
        self.to_pmf((0..self.t).flat_map(|_| block.iter().copied()))
    }

    /// Exact distance between `r` and the close or far pmf.
    pub fn exact_tv(&self, kind: MultKind) -> Rational {
        let l1: u128 = self
            .reference_runs()
            .iter()
            .zip(self.runs(Some(kind)))
            .map(|(a, b)| runs_l1(a, &b))
            .sum();
        Rational::new(l1 as i128, 2 * self.s as i128)
    }
}

/// `sum |a_j - b_j|` (as numerators) over one bucket given two run lists of
/// equal total length.
fn runs_l1(a: &Runs, b: &Runs) -> u128 {
    let (mut i, mut j) = (0, 0);
    let (mut left_a, mut left_b) = (a.first().map_or(0, |r| r.0), b.first().map_or(0, |r| r.0));
    let mut total = 0u128;
    while i < a.len() && j < b.len() {
        let step = left_a.min(left_b);
        total += step as u128 * a[i].1.abs_diff(b[j].1) as u128;
        left_a -= step;
        left_b -= step;
        if left_a == 0 {
            i += 1;
            left_a = a.get(i).map_or(0, |r| r.0);
        }
        if left_b == 0 {
            j += 1;
            left_b = b.get(j).map_or(0, |r| r.0);
        }
    }
    total
}

fn bucket_masses(runs: &[Runs], s: u64) -> Vec<Rational> {
    runs.iter()
        .map(|b| {
            let num: u128 = b.iter().map(|&(cnt, v)| cnt as u128 * v as u128).sum();
            Rational::new(num as i128, s as i128)
        })
        .collect()
}

/// Outcome of the exact checks for one value of `C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCheck {
    #[serde(rename = "C")]
    pub c: u32,
    /// The reference, close and far pmfs each sum to one.
    pub normalized: bool,
    /// Close and far pmfs are permutations of the reference.
    pub same_values: bool,
    /// Close and far pmfs put the same mass on every bucket.
    pub equal_bucket_masses: bool,
    pub tv_far: Rational,
    pub tv_far_expected: Rational,
    /// Largest bucket mass over the close and far pmfs.
    pub max_bucket_mass: Rational,
    pub bucket_bound: Rational,
    pub tv_close: Rational,
    pub tv_close_expected: Rational,
    pub bucket_masses: Vec<Rational>,
}

impl LemmaCheck {
    /// Name of the first failed check, if any.
    pub fn first_failure(&self) -> Option<String> {
        let c = self.c;
        if !self.normalized {
            Some(format!("C={c}: pmfs do not sum to 1"))
        } else if !self.same_values {
            Some(format!("C={c}: members are not permutations of the reference"))
        } else if !self.equal_bucket_masses {
            Some(format!("C={c}: close and far bucket masses differ"))
        } else if self.tv_far != self.tv_far_expected {
            Some(format!("C={c}: tv(r,q) = {} != {}", self.tv_far, self.tv_far_expected))
        } else if self.max_bucket_mass > self.bucket_bound {
            Some(format!("C={c}: bucket mass {} > {}", self.max_bucket_mass, self.bucket_bound))
        } else if self.tv_close != self.tv_close_expected {
            Some(format!("C={c}: tv(r,p) = {} != {}", self.tv_close, self.tv_close_expected))
        } else {
            None
        }
    }

    pub fn passed(&self) -> bool {
        self.first_failure().is_none()
    }
}

fn value_histogram(runs: &[Runs]) -> std::collections::BTreeMap<u64, u64> {
    let mut h = std::collections::BTreeMap::new();
    for &(cnt, v) in runs.iter().flatten() {
        *h.entry(v).or_insert(0) += cnt;
    }
    h
}

/// Exact rational checks of the single-block construction for one `C`.
pub fn verify_lemmas(c: u32) -> Result<LemmaCheck, InstanceError> {
    let cfg = MultiplicativeConfig::new(c, 1)?;
    let (r, p, q) = (cfg.reference_runs(), cfg.close_runs(), cfg.far_runs());
    let (mr, mp, mq) = (bucket_masses(&r, cfg.s), bucket_masses(&p, cfg.s), bucket_masses(&q, cfg.s));
    let total = |m: &[Rational]| m.iter().fold(Rational::zero(), |acc, x| acc + x);
    let four_c = 4 * c as i128 - 1;
    let max_bucket_mass = mp.iter().chain(&mq).copied().max().unwrap_or_else(Rational::zero);
    Ok(LemmaCheck {
        c,
        normalized: [&mr, &mp, &mq].iter().all(|m| total(m).is_one()),
        same_values: value_histogram(&r) == value_histogram(&p) && value_histogram(&r) == value_histogram(&q),
        equal_bucket_masses: mp == mq,
        tv_far: cfg.exact_tv(MultKind::Far),
        tv_far_expected: Rational::new(c as i128, four_c),
        max_bucket_mass,
        bucket_bound: Rational::new(2, c as i128 + 1),
        tv_close: cfg.exact_tv(MultKind::Close),
        tv_close_expected: Rational::new(1, four_c),
        bucket_masses: mp,
    })
}

/// Member of the close or far family over `t` blocks: each block is `p` (or
/// `q`) shuffled within every bucket by its own seeded Fisher-Yates pass.
pub fn multiplicative_instance(c: u32, t: u64, which: MultKind, seed: u64) -> Result<HardInstance, InstanceError> {
    let cfg = MultiplicativeConfig::new(c, t)?;
    cfg.check_size()?;
    let reference = cfg.reference()?;
    let base = cfg.block_numerators(Some(which));
    let mut member_values = Vec::with_capacity(cfg.n() as usize);
    for b in 0..t {
        let mut rng = rng_from_seed(derive_seed(seed, b, 0));
        for bucket in &base {
            let mut v = bucket.clone();
            v.shuffle(&mut rng);
            member_values.extend(v);
        }
    }
    let member = cfg.to_pmf(member_values.into_iter())?;
    let witness = witness_by_values(&reference, &member)?;
    let exact = cfg.exact_tv(which);
    let params = InstanceParams {
        family: Some(match which {
            MultKind::Close => Family::MultClose,
            MultKind::Far => Family::MultFar,
        }),
        n: reference.len(),
        c: Some(c),
        blocks: Some(t as usize),
        seed: Some(seed),
        exact_tv: Some(exact.to_string()),
        ..Default::default()
    };
    let inst = HardInstance::from_parts(reference, member, witness, params)?;
    let exact_f = *exact.numer() as f64 / *exact.denom() as f64;
    if (inst.true_tv - exact_f).abs() > super::INSTANCE_TOLERANCE {
        return Err(InstanceError::Invariant(format!("computed distance {} but exact {exact}", inst.true_tv)));
    }
    Ok(inst)
}
