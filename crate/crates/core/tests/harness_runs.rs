use permtest::harness::{
    run_experiment, summarize, write_csv, ExperimentConfig, TesterKind, CSV_HEADER,
};
use permtest::instances::Family;
use permtest::Decision;

fn base(tester: TesterKind, family: Family, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        tester,
        family,
        n,
        epsilon: None,
        eps_close: None,
        eps_far: None,
        c: None,
        k: None,
        order: None,
        mix_eps: None,
        sample_grid: Vec::new(),
        with_null: false,
        trials: 1,
        master_seed: 1,
    }
}

#[test]
fn single_equal_trial() {
    let cfg = ExperimentConfig { epsilon: Some(0.5), sample_grid: vec![10], ..base(TesterKind::PermId, Family::Equal, 16) };
    let recs = run_experiment(&cfg).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].decision, Decision::Yes);
    assert_eq!(recs[0].m_used, 10);
    assert_eq!(recs[0].expected, Decision::Yes);
}

#[test]
fn runs_are_reproducible() {
    let cfg = ExperimentConfig {
        epsilon: Some(0.5),
        mix_eps: Some(0.1),
        sample_grid: vec![1000, 4000],
        with_null: true,
        trials: 6,
        master_seed: 77,
        ..base(TesterKind::PermId, Family::TestingLb, 1 << 12)
    };
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.len(), 2 * 6 * 2);
    for (i, r) in a.iter().enumerate() {
        assert_eq!((r.grid_index, r.trial_index), (i / 12, (i % 12) / 2));
    }
    let other = run_experiment(&ExperimentConfig { master_seed: 78, ..cfg }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn plugin_rejects_far_multiplicative_members() {
    let cfg = ExperimentConfig {
        c: Some(2),
        eps_close: Some(1.0 / 7.0),
        eps_far: Some(2.0 / 7.0),
        trials: 60,
        master_seed: 5,
        ..base(TesterKind::PluginTol, Family::MultFar, 4200)
    };
    let recs = run_experiment(&cfg).unwrap();
    assert!(recs.iter().all(|r| r.n == 4200 && r.expected == Decision::No));
    let s = summarize(&recs).unwrap();
    assert!(s[0].no.unwrap().rate >= 2.0 / 3.0, "{:?}", s[0]);
}

#[test]
fn config_errors() {
    let ok = ExperimentConfig { epsilon: Some(0.5), ..base(TesterKind::PermId, Family::Equal, 16) };
    assert!(run_experiment(&ExperimentConfig { trials: 0, ..ok.clone() }).is_err());
    assert!(run_experiment(&ExperimentConfig { sample_grid: vec![10, 10], ..ok.clone() }).is_err());
    assert!(run_experiment(&ExperimentConfig { epsilon: None, ..ok.clone() }).is_err());
    assert!(run_experiment(&ExperimentConfig { family: Family::MultFar, ..ok.clone() }).is_err());
    assert!(run_experiment(&ExperimentConfig { tester: TesterKind::PluginTol, ..ok }).is_err());
    let json = r#"{"tester":"PERM_ID","family":"EQUAL","n":8,"epsilon":0.5,"trials":2,"master_seed":3,"bogus":1}"#;
    assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
}

#[test]
fn csv_layout() {
    let cfg = ExperimentConfig {
        epsilon: Some(1.0),
        mix_eps: Some(1.0 / 9.0),
        sample_grid: vec![200, 20_000],
        with_null: true,
        trials: 10,
        ..base(TesterKind::PermId, Family::TestingLb, 1 << 12)
    };
    let s = summarize(&run_experiment(&cfg).unwrap()).unwrap();
    let mut buf = Vec::new();
    write_csv(&cfg, &s, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for (row, m) in rows.iter().zip(["200", "20000"]) {
        assert_eq!(row.len(), 12);
        assert_eq!(&row[..3], &["TESTING_LB", "PERM_ID", "4096"]);
        assert_eq!((row[3], row[4], row[5], row[6], row[11]), ("1", "", m, "10", "1"));
        let lo: f64 = row[9].parse().unwrap();
        let hi: f64 = row[10].parse().unwrap();
        assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    }
}

#[test]
fn error_rate_does_not_grow_with_more_samples() {
    // Statistical monotonicity: quadrupling m does not raise the error rate
    // by more than the interval width.
    let m_star = 2000u64;
    let cfg = ExperimentConfig {
        epsilon: Some(1.0),
        mix_eps: Some(1.0 / 9.0),
        sample_grid: vec![m_star, 4 * m_star],
        trials: 40,
        master_seed: 9,
        ..base(TesterKind::PermId, Family::TestingLb, 1 << 12)
    };
    let s = summarize(&run_experiment(&cfg).unwrap()).unwrap();
    let (lo, hi) = (s[0].no.unwrap(), s[1].no.unwrap());
    assert!(hi.error() <= lo.error() + (lo.ci_high - lo.ci_low), "{lo:?} vs {hi:?}");
}
