//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p permtest-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use permtest::harness::{
    run_experiment, summarize, threshold, write_csv, ExperimentConfig, RateSummary, TesterKind, DEFAULT_MAX_ERROR,
};
use permtest::instances::{
    birthday_load, build_cfr, family_member, find_moment_pair, multiplicative_instance, testing_lb_config,
    testing_lb_perturbation, verify_cfr_gap, verify_lemmas, CfrSide, Family, HardInstance, InstanceParams, MultKind,
    MultiplicativeConfig, Rational,
};
use permtest::{compute_params, dkw_sample_count, empirical_pmf, kolmogorov_distance, sample, tv_distance, Pmf};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn config(tester: TesterKind, family: Family, n: usize) -> ExperimentConfig {
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
        master_seed: 0,
    }
}

fn single_summary(cfg: &ExperimentConfig) -> Result<RateSummary, String> {
    let recs = run_experiment(cfg).map_err(|e| e.to_string())?;
    let mut s = summarize(&recs).map_err(|e| e.to_string())?;
    ensure(s.len() == 1, "expected one grid point")?;
    Ok(s.remove(0))
}

fn exact_construction_values() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_permtest"))
        .args(["verify", "--family", "mult", "--C", "2..5"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(out.status.code() == Some(0), format!("verify exited with {:?}", out.status.code()))?;
    for c in 2..=5u32 {
        let check = verify_lemmas(c).map_err(|e| e.to_string())?;
        if let Some(f) = check.first_failure() {
            return Err(f);
        }
        let four_c = 4 * c as i128 - 1;
        ensure(check.tv_far == Rational::new(c as i128, four_c), format!("C={c}: tv far {}", check.tv_far))?;
        ensure(check.tv_close == Rational::new(1, four_c), format!("C={c}: tv close {}", check.tv_close))?;
    }
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("C=2..5 exact, C=2 gives 1/7 and 2/7, {elapsed:.2?}"))
}

fn cfr_gap_inequality() -> Outcome {
    let start = Instant::now();
    let check = verify_cfr_gap(100, 2024).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if let Some(f) = check.failure {
        return Err(f);
    }
    let p = Pmf::new(vec![0.5, 0.5]).unwrap();
    let q = Pmf::new(vec![0.25, 0.75]).unwrap();
    let t = build_cfr(&p, &q).map_err(|e| e.to_string())?;
    let gap = tv_distance(&t.f, &t.r).unwrap() - tv_distance(&t.c, &t.r).unwrap();
    ensure((gap - 0.125).abs() <= 1e-12, format!("k=2 gap {gap}"))?;
    ensure((gap - tv_distance(&p, &q).unwrap() / 2.0).abs() <= 1e-12, "k=2 example is not tight")?;
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("100 pairs, min slack {:.3e}, k=2 gap 1/8, {elapsed:.2?}", check.min_slack))
}

fn instance_integrity() -> Outcome {
    let lb = testing_lb_config(1 << 14, 0.08).map_err(|e| e.to_string())?;
    let pair = find_moment_pair(4, 2).map_err(|e| e.to_string())?;
    let cfr = build_cfr(&pair.p, &pair.q).map_err(|e| e.to_string())?;
    let mut all: Vec<HardInstance> = Vec::new();
    for seed in 0..34u64 {
        let c = 2 + (seed % 3) as u32;
        all.push(testing_lb_perturbation(&lb, seed).map_err(|e| e.to_string())?);
        all.push(family_member(&cfr, CfrSide::C, 12, seed).map_err(|e| e.to_string())?);
        all.push(family_member(&cfr, CfrSide::F, 12, seed).map_err(|e| e.to_string())?);
        all.push(multiplicative_instance(c, 4, MultKind::Close, seed).map_err(|e| e.to_string())?);
        all.push(multiplicative_instance(c, 4, MultKind::Far, seed).map_err(|e| e.to_string())?);
        let r = MultiplicativeConfig::new(c, 4).and_then(|m| m.reference()).map_err(|e| e.to_string())?;
        all.push(HardInstance::equal(r, InstanceParams::default()));
    }
    ensure(all.len() >= 200, format!("only {} instances", all.len()))?;
    for inst in &all {
        inst.check().map_err(|e| format!("{:?}: {e}", inst.params.family))?;
    }
    Ok(format!("{} instances over 6 families", all.len()))
}

fn algorithm_contract() -> Outcome {
    let params = compute_params(4096, 1.0 / 3.0).map_err(|e| e.to_string())?;
    ensure(params.num_buckets == 136, format!("L = {}", params.num_buckets))?;
    ensure((params.alg_delta - 1.0 / 1620.0).abs() < 1e-15, format!("delta = {}", params.alg_delta))?;

    let yes_cfg = ExperimentConfig {
        epsilon: Some(1.0 / 3.0),
        c: Some(2),
        trials: 50,
        master_seed: 41,
        ..config(TesterKind::PermId, Family::Equal, 4096)
    };
    let yes = single_summary(&yes_cfg)?;
    let accept = yes.yes.ok_or("no YES-side records")?.rate;
    let no_cfg = ExperimentConfig {
        epsilon: Some(0.25),
        c: Some(2),
        trials: 50,
        master_seed: 42,
        ..config(TesterKind::PermId, Family::MultFar, 4096)
    };
    let no = single_summary(&no_cfg)?;
    let reject = no.no.ok_or("no NO-side records")?.rate;
    let detail = format!(
        "n={}, L=136, delta=1/1620, {} samples/trial: accept {accept:.2} on p=q; reject {reject:.2} on far member at eps=0.25 ({} samples/trial)",
        yes.n, yes.m, no.m
    );
    ensure(accept >= 0.8 && reject >= 2.0 / 3.0, detail.clone())?;
    Ok(detail)
}

fn testing_lb_sanity() -> Outcome {
    let eps = 0.05;
    let cfg = testing_lb_config(1 << 20, eps).map_err(|e| e.to_string())?;
    let mut tvs = Vec::new();
    for seed in 0..3 {
        let inst = testing_lb_perturbation(&cfg, seed).map_err(|e| e.to_string())?;
        for l in 1..cfg.num_buckets - 1 {
            let (r, m) = (inst.reference.mass_of(cfg.bucket_range(l)), inst.member.mass_of(cfg.bucket_range(l)));
            ensure((r - m).abs() <= 1e-12, format!("bucket {l}: {r} vs {m}"))?;
        }
        tvs.push(inst.true_tv);
    }
    let detail = format!(
        "middle buckets exact; true_tv = {:.6} ({:.3} eps), window [{:.3}, {:.3}]",
        tvs[0],
        tvs[0] / eps,
        0.9 * eps,
        1.1 * eps
    );
    ensure(tvs.iter().all(|&tv| (0.9 * eps..=1.1 * eps).contains(&tv)), detail.clone())?;
    Ok(detail)
}

fn dkw_learner() -> Outcome {
    let m = dkw_sample_count(0.1, 0.1).map_err(|e| e.to_string())? as usize;
    let mut rng = Pcg64Mcg::seed_from_u64(6);
    let mut failures = 0;
    for rep in 0..1000u64 {
        let p = Pmf::normalized((0..50).map(|_| rng.random::<f64>()).collect()).unwrap();
        let emp = empirical_pmf(&sample(&p, m, rep), 50).unwrap();
        failures += (kolmogorov_distance(&emp, &p).unwrap() > 0.1) as usize;
    }
    let rate = failures as f64 / 1000.0;
    let detail = format!("m={m}, failure rate {rate:.3}");
    ensure(rate <= 0.13, detail.clone())?;
    Ok(detail)
}

fn plugin_tester() -> Outcome {
    let base = ExperimentConfig {
        eps_close: Some(1.0 / 7.0),
        eps_far: Some(2.0 / 7.0),
        c: Some(2),
        trials: 60,
        ..config(TesterKind::PluginTol, Family::MultClose, 4200)
    };
    let close = single_summary(&ExperimentConfig { master_seed: 71, ..base.clone() })?;
    let far = single_summary(&ExperimentConfig { family: Family::MultFar, master_seed: 72, ..base })?;
    let yes_err = close.yes.ok_or("close member not classified as YES")?.error();
    let no_err = far.no.ok_or("far member not classified as NO")?.error();
    let detail = format!("t=200, m={}: error {yes_err:.3} on 1/7-close, {no_err:.3} on 2/7-far", close.m);
    ensure(yes_err <= 1.0 / 3.0 && no_err <= 1.0 / 3.0, detail.clone())?;
    Ok(detail)
}

fn birthday_mechanism() -> Outcome {
    let load = birthday_load(10_000, 232, 2, 8, 200).map_err(|e| e.to_string())?;
    let detail = format!("P[some block gets 3 of 232 samples] = {load:.3}");
    ensure(load <= 0.05, detail.clone())?;
    Ok(detail)
}

fn moment_search() -> Outcome {
    let start = Instant::now();
    let two = find_moment_pair(8, 2).map_err(|e| e.to_string())?;
    let three = find_moment_pair(8, 3).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    two.verify().map_err(|e| e.to_string())?;
    three.verify().map_err(|e| e.to_string())?;
    let detail = format!(
        "order 2: {:?} vs {:?} tv {}/{}; order 3: {:?} vs {:?} tv {}/{}; {elapsed:.2?}",
        two.a, two.b, two.tv_num, two.tv_den, three.a, three.b, three.tv_num, three.tv_den
    );
    ensure(two.tv >= 1.0 / 6.0 - 1e-12 && three.tv >= 0.1, detail.clone())?;
    ensure(elapsed < Duration::from_secs(10), detail.clone())?;
    Ok(detail)
}

fn scaling() -> Outcome {
    let grid: Vec<u64> = (0..14).map(|i| (16_000.0 * 2f64.powf(i as f64 / 2.0)).round() as u64).collect();
    let mut csv = Vec::new();
    let mut thresholds = Vec::new();
    for (i, n) in [1usize << 12, 1 << 14, 1 << 16].into_iter().enumerate() {
        let cfg = ExperimentConfig {
            epsilon: Some(1.0),
            mix_eps: Some(1.0 / 9.0),
            sample_grid: grid.clone(),
            with_null: true,
            trials: 60,
            master_seed: 1000 + i as u64,
            ..config(TesterKind::PermId, Family::TestingLb, n)
        };
        let s = summarize(&run_experiment(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_csv(&cfg, &s, &mut buf).map_err(|e| e.to_string())?;
        let text = String::from_utf8(buf).unwrap();
        let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |x| x.1) };
        csv.extend_from_slice(body.as_bytes());
        thresholds.push((n, threshold(&s, DEFAULT_MAX_ERROR)));
    }
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("scaling.csv");
    std::fs::write(&path, &csv).map_err(|e| e.to_string())?;
    let shown: Vec<String> =
        thresholds.iter().map(|(n, t)| format!("n={n}: {}", t.map_or("none".into(), |m| m.to_string()))).collect();
    let detail = format!("thresholds {} (csv: {})", shown.join(", "), path.display());
    let ms: Vec<u64> = thresholds.iter().map(|t| t.1).collect::<Option<_>>().ok_or(detail.clone())?;
    ensure(ms.windows(2).all(|w| (w[1] as f64) < 4.0 * w[0] as f64), detail.clone())?;
    Ok(detail)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("exact multiplicative construction values", exact_construction_values),
        ("c/f/r distance gap inequality", cfr_gap_inequality),
        ("hard instance integrity", instance_integrity),
        ("permutation tester statistical contract", algorithm_contract),
        ("testing lower-bound family sanity", testing_lb_sanity),
        ("DKW learner failure rate", dkw_learner),
        ("plug-in tolerant tester", plugin_tester),
        ("birthday mechanism", birthday_mechanism),
        ("moment-pair search", moment_search),
        ("threshold scaling", scaling),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: {name}: FAIL ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
