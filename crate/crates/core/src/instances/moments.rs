//! Constructive search for pairs of pmfs over `[k]` whose value power sums
//! agree up to a given order.

use serde::Serialize;

use super::InstanceError;
use crate::dist::Pmf;

pub const MAX_MOMENT_K: usize = 8;
pub const MAX_MOMENT_ORDER: usize = 4;
pub const MAX_MOMENT_VALUE: u64 = 60;

/// Largest number of multisets enumerated for a single `k`.
const MULTISETS_PER_K: u64 = 1_500_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentPair {
    pub k: usize,
    pub order: usize,
    /// Integer numerators of `p`, non-decreasing; `p(i) = a_i / denominator`.
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub denominator: u64,
    pub p: Pmf,
    pub q: Pmf,
    /// `sum_i a_i^j` for `j = 1..=order`; equal for both numerator vectors, so
    /// the probability power sums are these divided by `denominator^j`.
    pub power_sums: Vec<u128>,
    /// TV distance as the reduced fraction `tv_num / tv_den`.
    pub tv_num: u64,
    pub tv_den: u64,
    pub tv: f64,
}

fn power_sums(v: &[u64], order: usize) -> Vec<u128> {
    (1..=order as u32).map(|j| v.iter().map(|&x| (x as u128).pow(j)).sum()).collect()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl MomentPair {
    fn from_numerators(order: usize, a: Vec<u64>, b: Vec<u64>) -> Result<Self, InstanceError> {
        let denominator: u64 = a.iter().sum();
        let to_pmf = |v: &[u64]| Pmf::new(v.iter().map(|&x| x as f64 / denominator as f64).collect());
        let l1: u64 = a.iter().zip(&b).map(|(&x, &y)| x.abs_diff(y)).sum();
        let den = 2 * denominator;
        let g = gcd(l1, den);
        let pair = MomentPair {
            k: a.len(),
            order,
            p: to_pmf(&a)?,
            q: to_pmf(&b)?,
            power_sums: power_sums(&a, order),
            tv_num: l1 / g,
            tv_den: den / g,
            tv: l1 as f64 / den as f64,
            a,
            b,
            denominator,
        };
        pair.verify()?;
        Ok(pair)
    }

    /// Re-checks the power-sum equalities and distinctness in integer arithmetic.
    pub fn verify(&self) -> Result<(), InstanceError> {
        if self.a.len() != self.b.len() || self.a.len() != self.k {
            return Err(InstanceError::Invariant("numerator vectors differ in length".into()));
        }
        let (pa, pb) = (power_sums(&self.a, self.order), power_sums(&self.b, self.order));
        if pa != pb || pa != self.power_sums {
            return Err(InstanceError::Invariant(format!("power sums differ: {pa:?} vs {pb:?}")));
        }
        let (mut sa, mut sb) = (self.a.clone(), self.b.clone());
        sa.sort_unstable();
        sb.sort_unstable();
        if sa == sb {
            return Err(InstanceError::Invariant("pair is identical as multisets".into()));
        }
        Ok(())
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let mut r: u128 = 1;
    for i in 0..k as u128 {
        r = r * (n as u128 - i) / (i + 1);
        if r > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    r as u64
}

/// Largest value bound `V <= MAX_MOMENT_VALUE` keeping the number of
/// size-`k` multisets over `{0..V}`, `C(V + k, k)`, within budget.
fn value_bound(k: usize) -> u64 {
    let mut v = MAX_MOMENT_VALUE;
    while v > 1 && binomial(v + k as u64, k as u64) > MULTISETS_PER_K {
        v -= 1;
    }
    v
}

/// All non-decreasing length-`k` vectors over `0..=max_value` with positive
/// sum, flattened.
fn multisets(k: usize, max_value: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut cur = vec![0u64; k];
    loop {
        if cur[k - 1] > 0 {
            out.extend_from_slice(&cur);
        }
        // Advance to the next non-decreasing vector.
        let Some(pos) = (0..k).rev().find(|&i| cur[i] < max_value) else {
            break;
        };
        let next = cur[pos] + 1;
        cur[pos..].fill(next);
    }
    out
}

/// Pair of size-`k` multisets matching `order` power sums with the largest
/// `l1 / sum`, compared by cross-multiplication. Ties keep the pair that
/// comes first in key order.
fn best_for_k(k: usize, order: usize, max_value: u64) -> Option<(Vec<u64>, Vec<u64>)> {
    let flat = multisets(k, max_value);
    // k * 60^4 fits comfortably in u64.
    let key = |v: &[u64]| {
        let mut out = [0u64; MAX_MOMENT_ORDER];
        for &x in v {
            let mut pow = 1;
            for slot in out.iter_mut().take(order) {
                pow *= x;
                *slot += pow;
            }
        }
        out
    };
    let mut keyed: Vec<([u64; MAX_MOMENT_ORDER], u32)> =
        flat.chunks(k).enumerate().map(|(i, v)| (key(v), i as u32)).collect();
    keyed.sort_unstable();

    // Best so far as (l1, sum, x, y); larger l1 / sum wins.
    let mut best: Option<(u64, u64, usize, usize)> = None;
    for group in keyed.chunk_by(|x, y| x.0 == y.0) {
        for (gi, &(key_x, x)) in group.iter().enumerate() {
            let s = key_x[0];
            let a = &flat[x as usize * k..(x as usize + 1) * k];
            for &(_, y) in &group[gi + 1..] {
                let b = &flat[y as usize * k..(y as usize + 1) * k];
                let l1: u64 = a.iter().zip(b).map(|(&u, &v)| u.abs_diff(v)).sum();
                let better = match best {
                    None => true,
                    Some((bl, bs, _, _)) => (l1 as u128) * (bs as u128) > (bl as u128) * (s as u128),
                };
                if better {
                    best = Some((l1, s, x as usize, y as usize));
                }
            }
        }
    }
    best.map(|(_, _, x, y)| (flat[x * k..(x + 1) * k].to_vec(), flat[y * k..(y + 1) * k].to_vec()))
}

/// Exhaustive search over integer multisets with `k` from `order + 1` to
/// `min(k_max, 8)` and values bounded per `k`, returning the matched pair of
/// largest TV distance. Order 1 is matched by any two distinct pmfs; the
/// extreme pair (point mass vs uniform on `k_max` elements) is returned.
pub fn find_moment_pair(k_max: usize, order: usize) -> Result<MomentPair, InstanceError> {
    if order == 0 || order > MAX_MOMENT_ORDER {
        return Err(InstanceError::Parameter(format!("order must be in 1..={MAX_MOMENT_ORDER}")));
    }
    if k_max < order + 2 {
        return Err(InstanceError::Parameter(format!("k_max = {k_max} must be at least order + 2")));
    }
    let k_top = k_max.min(MAX_MOMENT_K);
    if order == 1 {
        let k = k_top as u64;
        let mut a = vec![0; k_top];
        a[k_top - 1] = k;
        return MomentPair::from_numerators(1, a, vec![1; k_top]);
    }

    let mut best: Option<MomentPair> = None;
    for k in order + 1..=k_top {
        if let Some((a, b)) = best_for_k(k, order, value_bound(k)) {
            let cand = MomentPair::from_numerators(order, a, b)?;
            if best.as_ref().is_none_or(|cur| cand.tv_num * cur.tv_den > cur.tv_num * cand.tv_den) {
                best = Some(cand);
            }
        }
    }
    best.ok_or(InstanceError::NotFound { order, max_k: k_top, max_value: MAX_MOMENT_VALUE })
}
