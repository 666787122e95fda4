//! `permtest`: generate hard instances, run the testers on files or simulated
//! sources, run Monte Carlo benches and re-check the constructions exactly.
//!
//! Standard output is one `key=value` pair per line. Exit codes: 0 ok,
//! 2 usage, 3 construction failure, 4 malformed input, 5 failed verification.

mod input;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use permtest::harness::{run_experiment, summarize, threshold, write_csv, ExperimentConfig, HarnessError, DEFAULT_MAX_ERROR};
use permtest::instances::{
    build_cfr, family_member, find_moment_pair, multiplicative_instance, testing_lb_config, testing_lb_perturbation,
    verify_cfr_gap, verify_lemmas, CfrSide, HardInstance, InstanceError, MultKind, MultiplicativeConfig,
    MAX_MOMENT_K,
};
use permtest::tester::{permutation_identity_test_on_samples, plugin_tolerant_test_on_samples};
use permtest::{
    compute_params, derive_seed, permutation_identity_test, plugin_tolerant_test, AliasSampler, DistError, Pmf,
    TesterError,
};
use serde::Serialize;
use thiserror::Error;

use input::{load_samples, load_source, Bundle, Role};

#[derive(Debug, Error)]
enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Construction(_) => 3,
            CliError::Malformed(_) => 4,
            CliError::Verify(_) => 5,
        }
    }
}

impl From<InstanceError> for CliError {
    fn from(e: InstanceError) -> Self {
        match e {
            InstanceError::Parameter(_) => CliError::Usage(e.to_string()),
            InstanceError::Dist(_) => CliError::Malformed(e.to_string()),
            _ => CliError::Construction(e.to_string()),
        }
    }
}

impl From<TesterError> for CliError {
    fn from(e: TesterError) -> Self {
        match e {
            TesterError::Parameter(_) => CliError::Usage(e.to_string()),
            TesterError::Dist(DistError::Parameter(_)) => CliError::Usage(e.to_string()),
            TesterError::Dist(_) => CliError::Malformed(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Empty => CliError::Usage(e.to_string()),
            HarnessError::Instance(e) => e.into(),
            HarnessError::Tester(e) => e.into(),
            HarnessError::Csv(_) => CliError::Io(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "permtest", version, about = "Identity testing under a permutation promise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenFamily {
    Mult,
    TestingLb,
    Cfr,
    MomentPair,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Close,
    Far,
    C,
    F,
    Both,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum VerifyFamily {
    Mult,
    Cfr,
    Instances,
    All,
}

#[derive(clap::Args)]
struct SourceArgs {
    /// Newline-separated 0-based sample indices.
    #[arg(long, conflicts_with = "simulate", required_unless_present = "simulate")]
    samples: Option<PathBuf>,
    /// Pmf or instance file to draw samples from (an instance contributes its member).
    #[arg(long)]
    simulate: Option<PathBuf>,
    /// Which instance of a multi-instance file to use: an index, close/far/c/f,
    /// or `reference` to sample from the reference itself.
    #[arg(long, default_value = "0")]
    pick: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a hard instance (or a moment-matched pair).
    Gen {
        #[arg(long, value_enum)]
        family: GenFamily,
        /// Domain size (testing-lb), or target size from which mult/cfr derive the block count.
        #[arg(long)]
        n: Option<usize>,
        /// Mixture parameter of the testing lower-bound family.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long = "C")]
        c: Option<u32>,
        /// Largest support size searched for the moment-matched pair.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
        /// Which member(s) to emit for mult and cfr.
        #[arg(long, value_enum, default_value = "both")]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the permutation-identity tester.
    Test {
        /// Reference pmf, or an instance file (its reference is used).
        #[arg(long)]
        q: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Estimate the distance to the reference with the plug-in tolerant tester.
    Estimate {
        #[arg(long)]
        q: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        eps_close: f64,
        #[arg(long)]
        eps_far: f64,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Run a Monte Carlo experiment and write its CSV summary.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check the constructions exactly.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        family: VerifyFamily,
        /// A single value or an inclusive range such as 2..5.
        #[arg(long = "C", default_value = "2..5")]
        c: String,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Collects `key=value` output lines.
#[derive(Default)]
struct Report(Vec<(String, String)>);

impl Report {
    fn add(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.push((key.into(), value.to_string()));
    }

    fn print(&self) {
        let mut out = std::io::stdout().lock();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k}={v}");
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

fn need<T>(v: Option<T>, flag: &str, family: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("--family {family} requires {flag}")))
}

/// Block count from `--blocks`, else `--n / width`, else 1.
fn block_count(blocks: Option<usize>, n: Option<usize>, width: usize) -> Result<usize, CliError> {
    let b = match (blocks, n) {
        (Some(b), _) => b,
        (None, Some(n)) => n / width,
        (None, None) => 1,
    };
    if b == 0 {
        return Err(CliError::Usage(format!("need at least one block of width {width}")));
    }
    Ok(b)
}

fn report_instance(report: &mut Report, prefix: &str, inst: &HardInstance) {
    report.add(format!("{prefix}family"), inst.params.family.map_or("NONE", |f| f.as_str()));
    report.add(format!("{prefix}n"), inst.n());
    report.add(format!("{prefix}true_tv"), inst.true_tv);
    if let Some(exact) = &inst.params.exact_tv {
        report.add(format!("{prefix}exact_tv"), exact);
    }
}

fn emit_instances(report: &mut Report, instances: Vec<HardInstance>, labels: &[&str], out: Option<&Path>) -> Result<(), CliError> {
    if let [only] = instances.as_slice() {
        report_instance(report, "", only);
    } else {
        for (inst, label) in instances.iter().zip(labels) {
            report_instance(report, &format!("{label}."), inst);
        }
    }
    if let Some(path) = out {
        if instances.len() == 1 {
            write_json(path, &instances[0])?;
        } else {
            write_json(path, &Bundle { instances })?;
        }
        report.add("out", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gen(
    family: GenFamily,
    n: Option<usize>,
    epsilon: Option<f64>,
    c: Option<u32>,
    k: Option<usize>,
    order: Option<usize>,
    blocks: Option<usize>,
    kind: Kind,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<Report, CliError> {
    let mut report = Report::default();
    let out = out.as_deref();
    match family {
        GenFamily::Mult => {
            let c = need(c, "--C", "mult")?;
            let w = MultiplicativeConfig::new(c, 1)?.w as usize;
            let t = block_count(blocks, n, w)?;
            let kinds: Vec<(MultKind, &str)> = match kind {
                Kind::Close | Kind::C => vec![(MultKind::Close, "close")],
                Kind::Far | Kind::F => vec![(MultKind::Far, "far")],
                Kind::Both => vec![(MultKind::Close, "close"), (MultKind::Far, "far")],
            };
            report.add("C", c);
            report.add("blocks", t);
            report.add("w", w);
            let instances = kinds
                .iter()
                .map(|&(kind, _)| multiplicative_instance(c, t as u64, kind, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let labels: Vec<&str> = kinds.iter().map(|k| k.1).collect();
            emit_instances(&mut report, instances, &labels, out)?;
        }
        GenFamily::TestingLb => {
            let n = need(n, "--n", "testing-lb")?;
            let eps = need(epsilon, "--epsilon", "testing-lb")?;
            let cfg = testing_lb_config(n, eps)?;
            report.add("L", cfg.num_buckets);
            report.add("root", cfg.root);
            report.add("used", cfg.used);
            report.add("dev_delta", format!("1/{}", 9 * (cfg.num_buckets - 2)));
            report.add("mix_eps", eps);
            let inst = testing_lb_perturbation(&cfg, seed)?;
            emit_instances(&mut report, vec![inst], &[], out)?;
        }
        GenFamily::Cfr => {
            let order = order.unwrap_or(2);
            let pair = find_moment_pair(k.unwrap_or(MAX_MOMENT_K), order)?;
            let triple = build_cfr(&pair.p, &pair.q)?;
            let width = 2 * triple.k * triple.k;
            let b = block_count(blocks, n, width)?;
            report.add("k", triple.k);
            report.add("order", order);
            report.add("pair_tv", format!("{}/{}", pair.tv_num, pair.tv_den));
            report.add("blocks", b);
            let sides: Vec<(CfrSide, &str)> = match kind {
                Kind::Close | Kind::C => vec![(CfrSide::C, "c")],
                Kind::Far | Kind::F => vec![(CfrSide::F, "f")],
                Kind::Both => vec![(CfrSide::C, "c"), (CfrSide::F, "f")],
            };
            let instances = sides
                .iter()
                .map(|&(side, _)| family_member(&triple, side, b, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let labels: Vec<&str> = sides.iter().map(|s| s.1).collect();
            emit_instances(&mut report, instances, &labels, out)?;
        }
        GenFamily::MomentPair => {
            let order = order.unwrap_or(2);
            let pair = find_moment_pair(k.unwrap_or(MAX_MOMENT_K), order)?;
            let list = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
            report.add("order", order);
            report.add("k", pair.k);
            report.add("denominator", pair.denominator);
            report.add("p_numerators", list(&pair.a));
            report.add("q_numerators", list(&pair.b));
            report.add(
                "power_sums",
                pair.power_sums.iter().map(u128::to_string).collect::<Vec<_>>().join(","),
            );
            report.add("tv", format!("{}/{}", pair.tv_num, pair.tv_den));
            if let Some(path) = out {
                write_json(path, &pair)?;
                report.add("out", path.display());
            }
        }
    }
    Ok(report)
}

fn check_epsilon(epsilon: f64) -> Result<(), CliError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(CliError::Usage(format!("--epsilon {epsilon} not in (0, 1]")));
    }
    Ok(())
}

fn test(q: &Path, epsilon: f64, source: &SourceArgs) -> Result<Report, CliError> {
    check_epsilon(epsilon)?;
    let reference = load_source(q, &source.pick, Role::Reference)?;
    let params = compute_params(reference.len(), epsilon)?;
    let verdict = match (&source.samples, &source.simulate) {
        (Some(path), _) => permutation_identity_test_on_samples(&reference, epsilon, &load_samples(path, reference.len())?)?,
        (None, Some(path)) => {
            let p = load_source(path, &source.pick, Role::Member)?;
            if p.len() != reference.len() {
                return Err(CliError::Malformed(format!("domain sizes differ: {} vs {}", p.len(), reference.len())));
            }
            permutation_identity_test(&reference, epsilon, &AliasSampler::new(&p), source.seed)?
        }
        (None, None) => return Err(CliError::Usage("one of --samples or --simulate is required".into())),
    };
    let mut r = Report::default();
    r.add("decision", verdict.decision);
    r.add("tail_mass_hat", verdict.tail_mass_hat);
    r.add("max_suffix_dev", verdict.max_suffix_dev);
    r.add("argmax_suffix", verdict.argmax_suffix);
    r.add("samples_used", verdict.samples_used);
    r.add("L", params.num_buckets);
    r.add("delta", params.alg_delta);
    r.add("learner_samples", params.learner_samples);
    Ok(r)
}

fn estimate(q: &Path, eps_close: f64, eps_far: f64, source: &SourceArgs) -> Result<Report, CliError> {
    let reference = load_source(q, &source.pick, Role::Reference)?;
    let verdict = match (&source.samples, &source.simulate) {
        (Some(path), _) => {
            plugin_tolerant_test_on_samples(&reference, eps_close, eps_far, &load_samples(path, reference.len())?)?
        }
        (None, Some(path)) => {
            let p = load_source(path, &source.pick, Role::Member)?;
            if p.len() != reference.len() {
                return Err(CliError::Malformed(format!("domain sizes differ: {} vs {}", p.len(), reference.len())));
            }
            plugin_tolerant_test(&reference, eps_close, eps_far, &AliasSampler::new(&p), source.seed)?
        }
        (None, None) => return Err(CliError::Usage("one of --samples or --simulate is required".into())),
    };
    let mut r = Report::default();
    r.add("estimate", verdict.estimate);
    r.add("samples_used", verdict.samples_used);
    r.add("threshold", verdict.threshold);
    r.add("decision", verdict.decision);
    Ok(r)
}

fn bench(config: &Path, out: &Path) -> Result<Report, CliError> {
    let text = fs::read_to_string(config).map_err(|e| CliError::Malformed(format!("{}: {e}", config.display())))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Malformed(format!("{}: {e}", config.display())))?;
    if cfg.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let records = run_experiment(&cfg)?;
    let summaries = summarize(&records)?;
    let mut buf = Vec::new();
    write_csv(&cfg, &summaries, &mut buf)?;
    write_atomic(out, &buf)?;
    let mut r = Report::default();
    r.add("records", records.len());
    r.add("rows", summaries.len());
    r.add("n", summaries[0].n);
    r.add("threshold", threshold(&summaries, DEFAULT_MAX_ERROR).map_or("NONE".to_string(), |m| m.to_string()));
    r.add("out", out.display());
    Ok(r)
}

fn parse_c_range(s: &str) -> Result<std::ops::RangeInclusive<u32>, CliError> {
    let bad = || CliError::Usage(format!("--C expects N or A..B, got {s:?}"));
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
            if a > b {
                return Err(bad());
            }
            Ok(a..=b)
        }
        None => {
            let v = parse(s)?;
            Ok(v..=v)
        }
    }
}

fn verify_instances(seed: u64, report: &mut Report) -> Result<(), CliError> {
    let lb = testing_lb_config(1 << 14, 0.08)?;
    let pair = find_moment_pair(4, 2)?;
    let cfr = build_cfr(&pair.p, &pair.q)?;
    let mut count = 0;
    for i in 0..40u64 {
        let s = derive_seed(seed, i, 0);
        let c = 2 + (i % 3) as u32;
        let batch = [
            testing_lb_perturbation(&lb, s)?,
            family_member(&cfr, CfrSide::C, 10, s)?,
            family_member(&cfr, CfrSide::F, 10, s)?,
            multiplicative_instance(c, 3, MultKind::Close, s)?,
            multiplicative_instance(c, 3, MultKind::Far, s)?,
        ];
        for inst in batch {
            inst.check().map_err(|e| {
                CliError::Verify(format!("{} seed {s}: {e}", inst.params.family.map_or("?", |f| f.as_str())))
            })?;
            count += 1;
        }
    }
    report.add("instances.checked", count);
    report.add("instances", "ok");
    Ok(())
}

fn verify(family: VerifyFamily, c: &str, pairs: usize, seed: u64) -> Result<Report, CliError> {
    let mut r = Report::default();
    let all = family == VerifyFamily::All;
    if all || family == VerifyFamily::Mult {
        for c in parse_c_range(c)? {
            let check = verify_lemmas(c)?;
            if let Some(f) = check.first_failure() {
                return Err(CliError::Verify(f));
            }
            r.add(format!("mult.C{c}.tv_close"), check.tv_close);
            r.add(format!("mult.C{c}.tv_far"), check.tv_far);
            r.add(format!("mult.C{c}.max_bucket_mass"), check.max_bucket_mass);
            r.add(format!("mult.C{c}"), "ok");
        }
    }
    if all || family == VerifyFamily::Cfr {
        // Worked example: equality at gap 1/8.
        let half = Pmf::new(vec![0.5, 0.5]).map_err(InstanceError::from)?;
        let skew = Pmf::new(vec![0.25, 0.75]).map_err(InstanceError::from)?;
        let t = build_cfr(&half, &skew)?;
        let tv = |a: &Pmf, b: &Pmf| permtest::tv_distance(a, b).map_err(|e| CliError::Verify(e.to_string()));
        let gap = tv(&t.f, &t.r)? - tv(&t.c, &t.r)?;
        if (gap - 0.125).abs() > 1e-12 {
            return Err(CliError::Verify(format!("k=2 example: gap {gap} != 1/8")));
        }
        let check = verify_cfr_gap(pairs, seed)?;
        if let Some(f) = check.failure {
            return Err(CliError::Verify(format!("cfr gap: {f}")));
        }
        r.add("cfr.pairs", check.pairs);
        r.add("cfr.min_slack", check.min_slack);
        r.add("cfr", "ok");
    }
    if all || family == VerifyFamily::Instances {
        verify_instances(seed, &mut r)?;
    }
    r.add("status", "ok");
    Ok(r)
}

fn run(cli: Cli) -> Result<Report, CliError> {
    match cli.command {
        Command::Gen { family, n, epsilon, c, k, order, blocks, kind, seed, out } => {
            gen(family, n, epsilon, c, k, order, blocks, kind, seed, out)
        }
        Command::Test { q, epsilon, source } => test(&q, epsilon, &source),
        Command::Estimate { q, eps_close, eps_far, source } => estimate(&q, eps_close, eps_far, &source),
        Command::Bench { config, out } => bench(&config, &out),
        Command::Verify { family, c, pairs, seed } => verify(family, &c, pairs, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(report) => {
            report.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Verify(msg) = &e {
                println!("status=failed");
                println!("failed={msg}");
            }
            eprintln!("permtest: {e}");
            ExitCode::from(e.code())
        }
    }
}
