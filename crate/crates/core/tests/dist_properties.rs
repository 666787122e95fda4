use permtest::{
    apply_permutation, dkw_sample_count, empirical_pmf, kolmogorov_distance, sample, tv_distance, Permutation, Pmf,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

fn pmf_strategy(n: usize) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("needs positive mass", |w| {
        (w.iter().sum::<f64>() > 1e-6).then(|| Pmf::normalized(w).unwrap())
    })
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle().prop_map(|v| Permutation::new(v).unwrap())
}

fn triple() -> impl Strategy<Value = (Pmf, Pmf, Pmf, Permutation)> {
    (1usize..40).prop_flat_map(|n| (pmf_strategy(n), pmf_strategy(n), pmf_strategy(n), perm_strategy(n)))
}

proptest! {
    #[test]
    fn tv_is_a_metric((p, q, r, _) in triple()) {
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert_eq!(pq, tv_distance(&q, &p).unwrap());
        prop_assert!(tv_distance(&p, &p).unwrap().abs() < 1e-15);
        let pr = tv_distance(&p, &r).unwrap();
        let rq = tv_distance(&r, &q).unwrap();
        prop_assert!(pq <= pr + rq + 1e-12);
    }

    #[test]
    fn kolmogorov_below_tv((p, q, _, _) in triple()) {
        prop_assert!(kolmogorov_distance(&p, &q).unwrap() <= tv_distance(&p, &q).unwrap() + 1e-12);
    }

    #[test]
    fn permutation_keeps_sorted_values((p, _, _, pi) in triple()) {
        let moved = apply_permutation(&p, &pi).unwrap();
        prop_assert_eq!(moved.sorted_values(), p.sorted_values());
    }

    #[test]
    fn shared_permutation_keeps_tv((p, q, _, pi) in triple()) {
        let a = tv_distance(&apply_permutation(&p, &pi).unwrap(), &apply_permutation(&q, &pi).unwrap()).unwrap();
        prop_assert!((a - tv_distance(&p, &q).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn spec_values() {
    let p = Pmf::new(vec![0.5, 0.5, 0.0]).unwrap();
    let q = Pmf::new(vec![0.25, 0.25, 0.5]).unwrap();
    assert!((tv_distance(&p, &q).unwrap() - 0.5).abs() < 1e-15);
    assert!((kolmogorov_distance(&p, &q).unwrap() - 0.5).abs() < 1e-15);
    let q = Pmf::new(vec![0.1, 0.2, 0.7]).unwrap();
    let moved = apply_permutation(&q, &Permutation::new(vec![2, 0, 1]).unwrap()).unwrap();
    assert_eq!(moved.probs(), &[0.7, 0.1, 0.2]);
    let u = Pmf::uniform(5).unwrap();
    assert_eq!(apply_permutation(&u, &Permutation::new(vec![4, 2, 0, 1, 3]).unwrap()).unwrap(), u);
    assert_eq!(dkw_sample_count(0.1, 0.1).unwrap(), 150);
    assert_eq!(dkw_sample_count(1.0, 0.5).unwrap(), 1);
    assert_eq!(dkw_sample_count(0.01, 0.1).unwrap(), 14979);
}

#[test]
fn dkw_failure_rate() {
    // 1000 repetitions at delta = beta = 0.1 over n = 50: failure rate <= 0.1 + 0.03.
    let mut rng = Pcg64Mcg::seed_from_u64(99);
    let m = dkw_sample_count(0.1, 0.1).unwrap() as usize;
    let mut failures = 0;
    for rep in 0..1000u64 {
        let w: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let p = Pmf::normalized(w).unwrap();
        let s = sample(&p, m, rep);
        let emp = empirical_pmf(&s, 50).unwrap();
        failures += (kolmogorov_distance(&emp, &p).unwrap() > 0.1) as usize;
    }
    assert!(failures as f64 / 1000.0 <= 0.13, "failure rate {}", failures as f64 / 1000.0);
}

#[test]
fn sample_files_round_trip() {
    let p = Pmf::new(vec![0.2, 0.3, 0.5]).unwrap();
    let s = sample(&p, 20, 5);
    let text = s.to_string();
    let parsed: Vec<usize> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(parsed, s.draws());
    assert!(permtest::SampleSet::from_draws(vec![0, 3], 3, 0).is_err());
}
