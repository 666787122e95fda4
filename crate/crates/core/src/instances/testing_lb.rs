//! Lower-bound family for (non-tolerant) testing: a reference that is uniform
//! on `L` buckets of doubling size, and relabelings that cascade mass from
//! each middle bucket into the next so that only the two end buckets change
//! total mass.

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{Family, HardInstance, InstanceError, InstanceParams};
use crate::dist::{Permutation, Pmf};
use crate::sampling::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestingLbConfig {
    pub n: usize,
    /// Largest `L` with `L * 2^L <= sqrt(n)`.
    pub num_buckets: usize,
    /// `ceil(sqrt(n))`.
    pub root: usize,
    pub bucket_sizes: Vec<usize>,
    /// Elements covered by the buckets; the rest carry no base mass.
    pub used: usize,
    /// Additive change in each end bucket of the base construction,
    /// `1 / (9 (L - 2))`.
    pub dev_delta: f64,
    pub mix_eps: f64,
}

fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Whether the mixture weight `9 eps` is one, i.e. the unmixed construction.
fn is_unmixed(mix_eps: f64) -> bool {
    (9.0 * mix_eps - 1.0).abs() < 1e-12
}

pub fn testing_lb_config(n: usize, mix_eps: f64) -> Result<TestingLbConfig, InstanceError> {
    if !(mix_eps > 0.0 && (mix_eps < 1.0 / 9.0 || is_unmixed(mix_eps))) {
        return Err(InstanceError::Parameter(format!("mix_eps = {mix_eps} not in (0, 1/9]")));
    }
    // L * 2^L <= sqrt(n)  <=>  (L * 2^L)^2 <= n
    let fits = |l: u32| -> bool {
        let v = (l as u128) << l;
        v * v <= n as u128
    };
    let mut l = 0u32;
    while l < 60 && fits(l + 1) {
        l += 1;
    }
    let num_buckets = l as usize;
    if num_buckets < 4 {
        return Err(InstanceError::Construction(format!("n = {n} gives L = {num_buckets} < 4")));
    }
    let root = ceil_sqrt(n);
    let mut bucket_sizes: Vec<usize> = (0..num_buckets - 1).map(|i| root << i).collect();
    let last = 2 * (num_buckets - 2) * bucket_sizes[num_buckets - 2];
    bucket_sizes.push(last);
    let used: usize = bucket_sizes.iter().sum();
    if used > n {
        return Err(InstanceError::Construction(format!("buckets need {used} > n = {n} elements")));
    }
    Ok(TestingLbConfig {
        n,
        num_buckets,
        root,
        bucket_sizes,
        used,
        dev_delta: 1.0 / (9.0 * (num_buckets - 2) as f64),
        mix_eps,
    })
}

impl TestingLbConfig {
    /// Index range of bucket `l` (0-based, `0..L`).
    pub fn bucket_range(&self, l: usize) -> std::ops::Range<usize> {
        let start: usize = self.bucket_sizes[..l].iter().sum();
        start..start + self.bucket_sizes[l]
    }

    /// Base (unmixed) mass of bucket `l`: 1/3 at the ends, `1/(3(L-2))` in between.
    pub fn base_bucket_mass(&self, l: usize) -> f64 {
        if l == 0 || l + 1 == self.num_buckets {
            1.0 / 3.0
        } else {
            1.0 / (3.0 * (self.num_buckets - 2) as f64)
        }
    }

    fn base_values(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        for l in 0..self.num_buckets {
            let value = self.base_bucket_mass(l) / self.bucket_sizes[l] as f64;
            v[self.bucket_range(l)].fill(value);
        }
        v
    }

    /// `(1 - 9 eps) u + 9 eps q`, or the base `q` when `9 eps = 1`.
    pub fn reference(&self) -> Result<Pmf, InstanceError> {
        let base = self.base_values();
        if is_unmixed(self.mix_eps) {
            return Ok(Pmf::new(base)?);
        }
        let w = 9.0 * self.mix_eps;
        let uniform = (1.0 - w) / self.n as f64;
        Ok(Pmf::new(base.into_iter().map(|b| uniform + w * b).collect())?)
    }

    /// Size of each of the three parts of middle bucket `l` (`1..=L-2`).
    ///
    /// Bucket 1 uses the largest multiple of `2L - 5` not above `|B_1| / 3`
    /// so that the swap with bucket 0 has integral size; later buckets double
    /// it. Elements beyond the three parts stay fixed.
    pub fn part_size(&self, l: usize) -> usize {
        let stride = 2 * self.num_buckets - 5;
        let first = (self.bucket_sizes[1] / 3) / stride * stride;
        first << (l - 1)
    }

    /// Size of the random subset of bucket 0 that trades places with part of
    /// bucket 1.
    pub fn head_swap_size(&self) -> usize {
        self.part_size(1) / (2 * self.num_buckets - 5)
    }
}

pub fn testing_lb_reference(n: usize, mix_eps: f64) -> Result<(Pmf, TestingLbConfig), InstanceError> {
    let cfg = testing_lb_config(n, mix_eps)?;
    Ok((cfg.reference()?, cfg))
}

/// Draws one relabeling of the testing lower-bound reference.
pub fn testing_lb_perturbation(cfg: &TestingLbConfig, seed: u64) -> Result<HardInstance, InstanceError> {
    let reference = cfg.reference()?;
    let mut rng = rng_from_seed(seed);
    let l_count = cfg.num_buckets;
    let mut mapping: Vec<usize> = (0..cfg.n).collect();
    let mut swap = |a: &[usize], b: &[usize]| {
        debug_assert_eq!(a.len(), b.len());
        for (&x, &y) in a.iter().zip(b) {
            mapping[x] = y;
            mapping[y] = x;
        }
    };

    // Random 3-way split of every middle bucket: parts[l] = (S_l1, S_l2 u S_l3).
    let mut parts: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new()); l_count];
    for (l, slot) in parts.iter_mut().enumerate().take(l_count - 1).skip(1) {
        let mut idx: Vec<usize> = cfg.bucket_range(l).collect();
        idx.shuffle(&mut rng);
        let u = cfg.part_size(l);
        *slot = (idx[..u].to_vec(), idx[u..3 * u].to_vec());
    }
    // Cascade: S_{l,2} u S_{l,3} <-> S_{l+1,1}.
    for l in 1..l_count - 2 {
        swap(&parts[l].1, &parts[l + 1].0);
    }
    // Head: random S_0 in B_0 <-> random T_1 in S_{1,1}.
    let head = cfg.head_swap_size();
    let mut b0: Vec<usize> = cfg.bucket_range(0).collect();
    let (s0, _) = b0.partial_shuffle(&mut rng, head);
    let s0 = s0.to_vec();
    let mut s11 = parts[1].0.clone();
    let (t1, _) = s11.partial_shuffle(&mut rng, head);
    swap(&s0, t1);
    // Tail: S_{L-2,2} u S_{L-2,3} <-> random T_{L-1} in B_{L-1}.
    let tail_src = &parts[l_count - 2].1;
    let mut last: Vec<usize> = cfg.bucket_range(l_count - 1).collect();
    let (t_last, _) = last.partial_shuffle(&mut rng, tail_src.len());
    swap(tail_src, t_last);

    let witness = Permutation::new(mapping)?;
    let member = Pmf::new(witness.mapping().iter().map(|&j| reference[j]).collect())?;
    let params = InstanceParams {
        family: Some(Family::TestingLb),
        n: cfg.n,
        epsilon: Some(cfg.mix_eps),
        num_buckets: Some(cfg.num_buckets),
        seed: Some(seed),
        ..Default::default()
    };
    HardInstance::from_parts(reference, member, witness, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_at_two_to_the_twenty() {
        let cfg = testing_lb_config(1 << 20, 0.05).unwrap();
        // 7 * 2^7 = 896 <= 1024 < 8 * 2^8
        assert_eq!(cfg.num_buckets, 7);
        assert_eq!(cfg.root, 1024);
        let expect: Vec<usize> = (0..6).map(|l| 1024 << l).chain([327_680]).collect();
        assert_eq!(cfg.bucket_sizes, expect);
        assert_eq!(cfg.used, 392_192);
        assert!((cfg.dev_delta - 1.0 / 45.0).abs() < 1e-15);
        assert!(cfg.n / 8 <= cfg.used && cfg.used <= cfg.n);
    }

    #[test]
    fn l_is_largest_fitting() {
        for n in [4096usize, 10_000, 1 << 14, 50_000, 1 << 16, 1 << 18] {
            let cfg = testing_lb_config(n, 0.05).unwrap();
            let l = cfg.num_buckets as f64;
            let s = (n as f64).sqrt();
            assert!(l * 2f64.powf(l) <= s && s < (l + 1.0) * 2f64.powf(l + 1.0), "n = {n}");
        }
        assert!(testing_lb_config(1000, 0.05).is_err());
        assert!(testing_lb_config(4096, 0.2).is_err());
        assert!(testing_lb_config(4096, 0.0).is_err());
    }

    #[test]
    fn base_bucket_masses() {
        let (q, cfg) = testing_lb_reference(1 << 20, 1.0 / 9.0).unwrap();
        let masses: Vec<f64> = (0..7).map(|l| q.mass_of(cfg.bucket_range(l))).collect();
        let expect = [1.0 / 3.0, 1.0 / 15.0, 1.0 / 15.0, 1.0 / 15.0, 1.0 / 15.0, 1.0 / 15.0, 1.0 / 3.0];
        for (m, e) in masses.iter().zip(expect) {
            assert!((m - e).abs() < 1e-12, "{masses:?}");
        }
        assert!(q.probs()[cfg.used..].iter().all(|&v| v == 0.0));
        // 9 * (1/9) = 1 selects the base exactly.
        let v0 = (1.0 / 3.0) / 1024.0;
        assert_eq!(q[0], v0);
    }

    #[test]
    fn perturbation_preserves_middle_buckets() {
        let cfg = testing_lb_config(1 << 14, 0.05).unwrap();
        let inst = testing_lb_perturbation(&cfg, 11).unwrap();
        inst.check().unwrap();
        assert_eq!(inst.reference.sorted_values(), inst.member.sorted_values());
        for l in 1..cfg.num_buckets - 1 {
            let r = inst.reference.mass_of(cfg.bucket_range(l));
            let m = inst.member.mass_of(cfg.bucket_range(l));
            assert!((r - m).abs() < 1e-12, "bucket {l}: {r} vs {m}");
        }
        let d0 = inst.reference.mass_of(cfg.bucket_range(0)) - inst.member.mass_of(cfg.bucket_range(0));
        assert!(d0 > 0.0);
        // Mass leaving bucket 0 lands in the last bucket.
        let last = cfg.num_buckets - 1;
        let dl = inst.member.mass_of(cfg.bucket_range(last)) - inst.reference.mass_of(cfg.bucket_range(last));
        assert!((d0 - dl).abs() < 1e-12);
    }

    #[test]
    fn perturbation_is_seeded() {
        let cfg = testing_lb_config(1 << 12, 0.1).unwrap();
        let a = testing_lb_perturbation(&cfg, 5).unwrap();
        assert_eq!(a, testing_lb_perturbation(&cfg, 5).unwrap());
        assert_ne!(a.witness, testing_lb_perturbation(&cfg, 6).unwrap().witness);
    }
}
