//! Seeded Monte Carlo experiments over (tester x instance family) grids.
//!
//! Every trial gets its own seed `derive_seed(master_seed, grid_index,
//! trial_index)`, from which the instance and the sample stream are derived,
//! so a run is a pure function of its configuration no matter how trials are
//! scheduled across threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::Pmf;
use crate::instances::{
    build_cfr, family_member, find_moment_pair, multiplicative_instance, testing_lb_config, testing_lb_perturbation,
    CfrSide, CfrTriple, Family, HardInstance, InstanceError, InstanceParams, MultKind, MultiplicativeConfig,
    TestingLbConfig, INSTANCE_TOLERANCE, MAX_MOMENT_K,
};
use crate::sampling::{derive_seed, AliasSampler};
use crate::tester::{
    permutation_identity_test_with_budget, plugin_tolerant_test_with_budget, Decision, TesterError,
};

/// Default error-rate target, matching the usual 2/3 success convention.
pub const DEFAULT_MAX_ERROR: f64 = 1.0 / 3.0;
const WILSON_Z: f64 = 1.96;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Tester(#[from] TesterError),
    #[error("no trial records to summarize")]
    Empty,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TesterKind {
    PermId,
    PluginTol,
}

impl TesterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TesterKind::PermId => "PERM_ID",
            TesterKind::PluginTol => "PLUGIN_TOL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tester: TesterKind,
    pub family: Family,
    /// Requested domain size; block constructions round down to a whole
    /// number of blocks and records carry the size actually used.
    pub n: usize,
    /// Distance parameter of the permutation tester.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_close: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_far: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "C")]
    pub c: Option<u32>,
    /// Largest support size for the moment-pair search (CFR families).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Matched moment order (CFR families), default 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Mixture weight of the testing lower-bound family; defaults to `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_eps: Option<f64>,
    /// Sample sizes to sweep; empty means the tester's own budget.
    #[serde(default)]
    pub sample_grid: Vec<u64>,
    /// Also run every trial against the reference itself (a YES instance).
    #[serde(default)]
    pub with_null: bool,
    pub trials: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub trial_index: usize,
    pub derived_seed: u64,
    /// Domain size of the generated instance.
    pub n: usize,
    pub m_used: u64,
    pub decision: Decision,
    pub true_tv: f64,
    /// The correct answer for the instance the samples came from.
    pub expected: Decision,
}

impl TrialRecord {
    pub fn is_error(&self) -> bool {
        self.decision != self.expected
    }
}

/// Everything about a config that does not change between trials.
enum Generator {
    Fixed(HardInstance),
    TestingLb(TestingLbConfig),
    Cfr(CfrTriple, CfrSide, usize),
    Mult(u32, u64, MultKind),
}

impl Generator {
    fn instance(&self, seed: u64) -> Result<HardInstance, InstanceError> {
        match self {
            Generator::Fixed(inst) => Ok(inst.clone()),
            Generator::TestingLb(cfg) => testing_lb_perturbation(cfg, seed),
            Generator::Cfr(triple, side, blocks) => family_member(triple, *side, *blocks, seed),
            Generator::Mult(c, t, kind) => multiplicative_instance(*c, *t, *kind, seed),
        }
    }
}

fn require<T>(v: Option<T>, what: &str, cfg: &ExperimentConfig) -> Result<T, HarnessError> {
    v.ok_or_else(|| HarnessError::Config(format!("{} with {} needs `{what}`", cfg.family, cfg.tester.as_str())))
}

fn mult_blocks(cfg: &ExperimentConfig, c: u32) -> Result<u64, HarnessError> {
    let w = MultiplicativeConfig::new(c, 1)?.w;
    let t = cfg.n as u64 / w;
    if t == 0 {
        return Err(HarnessError::Config(format!("n = {} is below one block of width {w}", cfg.n)));
    }
    Ok(t)
}

fn generator(cfg: &ExperimentConfig) -> Result<Generator, HarnessError> {
    Ok(match cfg.family {
        Family::Equal => {
            let reference = match cfg.c {
                Some(c) => MultiplicativeConfig::new(c, mult_blocks(cfg, c)?)?.reference()?,
                None => Pmf::uniform(cfg.n).map_err(InstanceError::from)?,
            };
            let params = InstanceParams { c: cfg.c, ..Default::default() };
            Generator::Fixed(HardInstance::equal(reference, params))
        }
        Family::TestingLb => {
            let mix = require(cfg.mix_eps.or(cfg.epsilon), "mix_eps", cfg)?;
            Generator::TestingLb(testing_lb_config(cfg.n, mix)?)
        }
        Family::CfrC | Family::CfrF => {
            let order = cfg.order.unwrap_or(2);
            let pair = find_moment_pair(cfg.k.unwrap_or(MAX_MOMENT_K), order)?;
            let triple = build_cfr(&pair.p, &pair.q)?;
            let width = 2 * triple.k * triple.k;
            let blocks = cfg.n / width;
            if blocks == 0 {
                return Err(HarnessError::Config(format!("n = {} is below one block of width {width}", cfg.n)));
            }
            let side = if cfg.family == Family::CfrC { CfrSide::C } else { CfrSide::F };
            Generator::Cfr(triple, side, blocks)
        }
        Family::MultClose | Family::MultFar => {
            let c = require(cfg.c, "C", cfg)?;
            let kind = if cfg.family == Family::MultClose { MultKind::Close } else { MultKind::Far };
            Generator::Mult(c, mult_blocks(cfg, c)?, kind)
        }
    })
}

/// Largest distance still counted as a YES instance for the configured tester.
fn close_tolerance(cfg: &ExperimentConfig) -> f64 {
    match cfg.tester {
        TesterKind::PermId => 0.0,
        TesterKind::PluginTol => cfg.eps_close.unwrap_or(0.0),
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    if cfg.trials < 1 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    if cfg.sample_grid.first() == Some(&0) || cfg.sample_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Config("sample_grid must be positive and strictly increasing".into()));
    }
    match cfg.tester {
        TesterKind::PermId => {
            let eps = require(cfg.epsilon, "epsilon", cfg)?;
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(HarnessError::Config(format!("epsilon = {eps} not in (0, 1]")));
            }
        }
        TesterKind::PluginTol => {
            let (lo, hi) = (require(cfg.eps_close, "eps_close", cfg)?, require(cfg.eps_far, "eps_far", cfg)?);
            if !(lo >= 0.0 && lo < hi && hi <= 1.0) {
                return Err(HarnessError::Config(format!("need 0 <= eps_close < eps_far <= 1, got {lo}, {hi}")));
            }
        }
    }
    Ok(())
}

fn run_tester(cfg: &ExperimentConfig, reference: &Pmf, source: &Pmf, seed: u64, budget: Option<u64>) -> Result<(Decision, u64), HarnessError> {
    let sampler = AliasSampler::new(source);
    Ok(match cfg.tester {
        TesterKind::PermId => {
            let eps = cfg.epsilon.expect("validated");
            let v = permutation_identity_test_with_budget(reference, eps, &sampler, seed, budget)?;
            (v.decision, v.samples_used)
        }
        TesterKind::PluginTol => {
            let (lo, hi) = (cfg.eps_close.expect("validated"), cfg.eps_far.expect("validated"));
            let v = plugin_tolerant_test_with_budget(reference, lo, hi, &sampler, seed, budget)?;
            (v.decision, v.samples_used)
        }
    })
}

/// Runs every (grid point, trial) pair and returns the records ordered by
/// `(grid_index, trial_index)`; with `with_null` each trial contributes a
/// second record for the reference-vs-itself instance right after its own.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>, HarnessError> {
    validate(cfg)?;
    let gen = generator(cfg)?;
    let budgets: Vec<Option<u64>> =
        if cfg.sample_grid.is_empty() { vec![None] } else { cfg.sample_grid.iter().map(|&m| Some(m)).collect() };
    let tolerance = close_tolerance(cfg);
    let tasks: Vec<(usize, usize)> =
        (0..budgets.len()).flat_map(|g| (0..cfg.trials).map(move |t| (g, t))).collect();

    let per_task: Vec<Vec<TrialRecord>> = tasks
        .par_iter()
        .map(|&(g, t)| -> Result<Vec<TrialRecord>, HarnessError> {
            let seed = derive_seed(cfg.master_seed, g as u64, t as u64);
            let inst = gen.instance(derive_seed(seed, 1, 0))?;
            let expected = if inst.true_tv <= tolerance + INSTANCE_TOLERANCE { Decision::Yes } else { Decision::No };
            let (decision, m_used) = run_tester(cfg, &inst.reference, &inst.member, derive_seed(seed, 2, 0), budgets[g])?;
            let mut out = vec![TrialRecord {
                grid_index: g,
                trial_index: t,
                derived_seed: seed,
                n: inst.n(),
                m_used,
                decision,
                true_tv: inst.true_tv,
                expected,
            }];
            if cfg.with_null {
                let (decision, m_used) =
                    run_tester(cfg, &inst.reference, &inst.reference, derive_seed(seed, 3, 0), budgets[g])?;
                out.push(TrialRecord { m_used, decision, true_tv: 0.0, expected: Decision::Yes, ..out[0].clone() });
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_task.into_iter().flatten().collect())
}

/// Wilson score interval at 95% for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Success rate and interval for one side of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideRate {
    pub trials: usize,
    /// Fraction of trials answered correctly.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SideRate {
    fn new(correct: usize, trials: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(correct, trials);
        SideRate { trials, rate: correct as f64 / trials as f64, ci_low, ci_high }
    }

    pub fn error(&self) -> f64 {
        1.0 - self.rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub grid_index: usize,
    /// Samples per trial (the largest used, when budgets differ).
    pub m: u64,
    pub n: usize,
    /// Accept rate on YES instances, if any were run.
    pub yes: Option<SideRate>,
    /// Reject rate on NO instances, if any were run.
    pub no: Option<SideRate>,
}

impl RateSummary {
    /// The side with the larger error rate.
    pub fn binding(&self) -> Option<SideRate> {
        match (self.yes, self.no) {
            (Some(y), Some(n)) => Some(if y.error() >= n.error() { y } else { n }),
            (y, n) => y.or(n),
        }
    }
}

/// Exact per-grid-point counts with Wilson intervals.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<RateSummary>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let points = records.iter().map(|r| r.grid_index).max().unwrap_or(0) + 1;
    let mut out = Vec::new();
    for g in 0..points {
        let at: Vec<&TrialRecord> = records.iter().filter(|r| r.grid_index == g).collect();
        if at.is_empty() {
            continue;
        }
        let side = |expected: Decision| {
            let s: Vec<_> = at.iter().filter(|r| r.expected == expected).collect();
            (!s.is_empty()).then(|| SideRate::new(s.iter().filter(|r| !r.is_error()).count(), s.len()))
        };
        out.push(RateSummary {
            grid_index: g,
            m: at.iter().map(|r| r.m_used).max().unwrap_or(0),
            n: at[0].n,
            yes: side(Decision::Yes),
            no: side(Decision::No),
        });
    }
    Ok(out)
}

/// Smallest `m` whose error rates on both sides (where present) are at most
/// `max_error`.
pub fn threshold(summaries: &[RateSummary], max_error: f64) -> Option<u64> {
    summaries
        .iter()
        .find(|s| {
            let ok = |side: Option<SideRate>| side.is_none_or(|r| r.error() <= max_error);
            (s.yes.is_some() || s.no.is_some()) && ok(s.yes) && ok(s.no)
        })
        .map(|s| s.m)
}

pub const CSV_HEADER: [&str; 12] = [
    "family",
    "tester",
    "n",
    "param1",
    "param2",
    "m",
    "trials",
    "yes_instance_accept_rate",
    "no_instance_reject_rate",
    "ci_low",
    "ci_high",
    "master_seed",
];

/// Writes one CSV row per grid point. `param1`/`param2` are `epsilon` and
/// empty for the permutation tester, `eps_close`/`eps_far` for the plug-in
/// tester; the interval is that of the binding (higher-error) side.
pub fn write_csv<W: Write>(cfg: &ExperimentConfig, summaries: &[RateSummary], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let (p1, p2) = match cfg.tester {
        TesterKind::PermId => (opt(cfg.epsilon), String::new()),
        TesterKind::PluginTol => (opt(cfg.eps_close), opt(cfg.eps_far)),
    };
    for s in summaries {
        let (lo, hi) = s.binding().map(|b| (b.ci_low.to_string(), b.ci_high.to_string())).unwrap_or_default();
        w.write_record([
            cfg.family.as_str().to_string(),
            cfg.tester.as_str().to_string(),
            s.n.to_string(),
            p1.clone(),
            p2.clone(),
            s.m.to_string(),
            cfg.trials.to_string(),
            opt(s.yes.map(|r| r.rate)),
            opt(s.no.map(|r| r.rate)),
            lo,
            hi,
            cfg.master_seed.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
