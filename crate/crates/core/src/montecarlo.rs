//! Seeded trial execution, exact branch enumeration and outcome statistics.
//!
//! Trial `i` draws from a ChaCha8 stream keyed by the master seed with stream
//! number `i`, so trials are independent of each other and of execution
//! order. Per-trial results are reduced through [`Tally`], whose merge is
//! associative and commutative over integer counts, which keeps [`RunStats`]
//! bit-identical under any parallel schedule.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::device::{DeviceLayout, DeviceState};
use crate::outcome::{
    BranchError, BranchPoint, BranchRecord, Forcing, OutcomeSource, RandomSource, SwapPolicy, Traced,
};
use crate::protocols::{
    bell_qnd, ghz3_device, ghz3_prepare, ghz_prepare_with, BellQndRecord, GhzRunRecord, GrowthPlan, MergeOptions,
    ProtocolError, RESTORE_TOLERANCE,
};
use crate::state::{BellLabel, ParityOutcome, PureState};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_900_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("n_trials must be positive")]
    ZeroTrials,
    #[error("more than {0} branch points on one path")]
    DepthExceeded(usize),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("trial {trial}: {source}")]
    Trial { trial: u64, source: ProtocolError },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolSpec {
    BellQnd { input: PureState },
    BellGenerate { input: PureState },
    Ghz3 { max_rounds: u32 },
    GhzN { plan: GrowthPlan, options: MergeOptions },
}

/// Deterministic outcome overrides applied in every trial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Overrides {
    pub swap_policy: SwapPolicy,
    /// Consumed in order by successive parity windows.
    pub parities: Vec<ParityOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub protocol: ProtocolSpec,
    pub overrides: Overrides,
    /// Device for the Bell protocols; `None` means the two-dot default. The
    /// electrons start in the first coupled pair.
    pub layout: Option<DeviceLayout>,
}

impl Scenario {
    pub fn new(protocol: ProtocolSpec) -> Self {
        Scenario { protocol, overrides: Overrides::default(), layout: None }
    }

    pub fn with_layout(mut self, layout: DeviceLayout) -> Self {
        self.layout = Some(layout);
        self
    }

    pub fn with_overrides(mut self, overrides: Overrides) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn validate(&self) -> Result<(), MonteCarloError> {
        if let Some(layout) = &self.layout {
            self.validate_layout(layout)?;
        }
        match &self.protocol {
            ProtocolSpec::BellQnd { input } | ProtocolSpec::BellGenerate { input } if input.num_qubits() != 2 => Err(
                MonteCarloError::InvalidScenario(format!("Bell input has {} qubits, expected 2", input.num_qubits())),
            ),
            ProtocolSpec::Ghz3 { max_rounds: 0 } => {
                Err(MonteCarloError::InvalidScenario("max_rounds must be ≥ 1".into()))
            }
            ProtocolSpec::GhzN { plan, .. } => {
                plan.validate().map_err(|e| MonteCarloError::InvalidScenario(e.to_string()))
            }
            _ => Ok(()),
        }
    }

    fn validate_layout(&self, layout: &DeviceLayout) -> Result<(), MonteCarloError> {
        let invalid = |msg: String| Err(MonteCarloError::InvalidScenario(msg));
        match &self.protocol {
            ProtocolSpec::BellQnd { .. } | ProtocolSpec::BellGenerate { .. } => {
                let Some((a, b)) = layout.coupled_pairs().first().copied() else {
                    return invalid("layout has no coupled dots".into());
                };
                for dot in [a, b] {
                    let idx = layout.dot_index(dot.as_str()).expect("dot from layout");
                    if layout.detector_for(idx).is_none() {
                        return invalid(format!("dot {dot} has no detector"));
                    }
                }
                Ok(())
            }
            ProtocolSpec::Ghz3 { .. } if *layout == DeviceLayout::fig2() => Ok(()),
            ProtocolSpec::Ghz3 { .. } => invalid("ghz3 runs on the A-B-C chain only".into()),
            ProtocolSpec::GhzN { .. } => invalid("ghz_n builds its own chain; layout not allowed".into()),
        }
    }

    fn bell_device(&self, input: &PureState) -> Result<DeviceState, ProtocolError> {
        let Some(layout) = &self.layout else {
            return Ok(DeviceState::fig1(input.clone())?);
        };
        let (a, b) = layout
            .coupled_pairs()
            .first()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .ok_or_else(|| ProtocolError::Setup("layout has no coupled dots".into()))?;
        Ok(DeviceState::new(layout.clone(), input.clone(), &[&a, &b])?)
    }

    fn forcing<S: OutcomeSource>(&self, inner: S) -> Forcing<S> {
        Forcing::new(inner)
            .with_swap_policy(self.overrides.swap_policy)
            .with_parities(self.overrides.parities.iter().map(|p| p.is_parallel()))
    }

    /// Runs the protocol once against `source`; overrides are not applied.
    pub fn execute(&self, source: &mut dyn OutcomeSource) -> Result<TrialOutcome, ProtocolError> {
        match &self.protocol {
            ProtocolSpec::BellQnd { input } | ProtocolSpec::BellGenerate { input } => {
                bell_qnd(self.bell_device(input)?, source).map(TrialOutcome::Bell)
            }
            ProtocolSpec::Ghz3 { max_rounds } => {
                ghz3_prepare(*max_rounds, ghz3_device(&BellLabel::PhiPlus.state())?, source).map(TrialOutcome::Ghz)
            }
            ProtocolSpec::GhzN { plan, options } => ghz_prepare_with(*plan, *options, source).map(TrialOutcome::Ghz),
        }
    }

    /// Condenses one protocol run into the quantities [`RunStats`] tracks.
    pub fn summarize(&self, outcome: &TrialOutcome) -> TrialSummary {
        let snapshots = outcome.log();
        let mut summary = TrialSummary {
            key: String::new(),
            success: false,
            parity_checks: 0,
            parity_snapshots: snapshots.iter().filter(|s| s.window.is_some()).count() as u64,
            anticorrelation_violations: snapshots.iter().filter(|s| !s.is_anticorrelated()).count() as u64,
            fidelity: None,
            failure: None,
            success_round: None,
        };
        match (&self.protocol, outcome) {
            (ProtocolSpec::BellQnd { .. }, TrialOutcome::Bell(rec)) => {
                summary.key = rec.label.name().to_string();
                summary.success = rec.restored;
                summary.parity_checks = 2;
                summary.fidelity = rec.final_state.fidelity_up_to_phase(&rec.initial).ok();
                summary.failure = (!rec.restored).then_some("not_restored");
            }
            (ProtocolSpec::BellGenerate { .. }, TrialOutcome::Bell(rec)) => {
                let fidelity = rec.final_state.fidelity_up_to_phase(&rec.label.state()).unwrap_or(0.0);
                summary.key = rec.label.name().to_string();
                summary.success = fidelity >= 1.0 - RESTORE_TOLERANCE;
                summary.parity_checks = 2;
                summary.fidelity = Some(fidelity);
                summary.failure = (!summary.success).then_some("post_state_mismatch");
            }
            (_, TrialOutcome::Ghz(rec)) => {
                summary.key = if rec.success { "success" } else { "failure" }.to_string();
                summary.success = rec.success;
                summary.parity_checks = rec.parity_checks;
                if rec.success {
                    summary.success_round = Some(rec.rounds_used);
                    let c = rec.final_class;
                    if c.is_ghz {
                        summary.fidelity = PureState::ghz(c.num_qubits, c.bitmask, c.relative_phase)
                            .and_then(|g| g.fidelity_up_to_phase(&rec.final_state))
                            .ok();
                    } else {
                        summary.fidelity = Some(0.0);
                        summary.failure = Some("success_not_ghz_class");
                    }
                } else {
                    summary.failure = Some("antiparallel_exhausted");
                }
            }
            (_, TrialOutcome::Bell(rec)) => summary.key = rec.label.name().to_string(),
        }
        summary
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Bell(BellQndRecord),
    Ghz(GhzRunRecord),
}

impl TrialOutcome {
    pub fn log(&self) -> &[crate::device::DetectorSnapshot] {
        match self {
            TrialOutcome::Bell(r) => &r.log,
            TrialOutcome::Ghz(r) => &r.log,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub outcome: TrialOutcome,
    pub trace: Vec<BranchRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub key: String,
    pub success: bool,
    pub parity_checks: u32,
    pub parity_snapshots: u64,
    pub anticorrelation_violations: u64,
    pub fidelity: Option<f64>,
    pub failure: Option<&'static str>,
    pub success_round: Option<u32>,
}

/// The random stream for one trial.
pub fn trial_rng(seed: Seed, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    rng.set_stream(trial_index);
    rng
}

/// Runs trial `trial_index` of a seeded run in isolation.
pub fn run_trial(scenario: &Scenario, seed: Seed, trial_index: u64) -> Result<TrialRecord, MonteCarloError> {
    let mut source = Traced::new(scenario.forcing(RandomSource::new(trial_rng(seed, trial_index))));
    let outcome =
        scenario.execute(&mut source).map_err(|source| MonteCarloError::Trial { trial: trial_index, source })?;
    let (_, trace) = source.into_parts();
    Ok(TrialRecord { trial_index, outcome, trace })
}

/// Re-runs a trial from its branch trace alone.
pub fn replay(scenario: &Scenario, trace: &[BranchRecord]) -> Result<TrialOutcome, ProtocolError> {
    let mut source = crate::outcome::ScriptedSource::from_trace(trace);
    scenario.execute(&mut source)
}

/// Normal-approximation 99% interval for `count / n`, widened by a
/// continuity term of `1/(2n)` and clipped to [0, 1].
pub fn confidence_interval(count: u64, n: u64) -> (f64, f64) {
    let n_f = n as f64;
    let q = count as f64 / n_f;
    let half = Z_99 * (q * (1.0 - q) / n_f).sqrt() + 0.5 / n_f;
    ((q - half).max(0.0), (q + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeStat {
    pub count: u64,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl OutcomeStat {
    pub fn new(count: u64, n: u64) -> Self {
        let (ci_low, ci_high) = confidence_interval(count, n);
        OutcomeStat { count, frequency: count as f64 / n as f64, ci_low, ci_high }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// Mergeable partial counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tally {
    pub trials: u64,
    pub outcomes: BTreeMap<String, u64>,
    pub successes: u64,
    pub parity_checks: u64,
    pub failures: BTreeMap<String, u64>,
    pub parity_snapshots: u64,
    pub anticorrelation_violations: u64,
    pub min_fidelity: Option<f64>,
    pub success_rounds: BTreeMap<u32, u64>,
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl Tally {
    pub fn record(mut self, s: &TrialSummary) -> Self {
        self.trials += 1;
        *self.outcomes.entry(s.key.clone()).or_default() += 1;
        self.successes += s.success as u64;
        self.parity_checks += s.parity_checks as u64;
        if let Some(f) = s.failure {
            *self.failures.entry(f.to_string()).or_default() += 1;
        }
        self.parity_snapshots += s.parity_snapshots;
        self.anticorrelation_violations += s.anticorrelation_violations;
        self.min_fidelity = min_opt(self.min_fidelity, s.fidelity);
        if let Some(r) = s.success_round {
            *self.success_rounds.entry(r).or_default() += 1;
        }
        self
    }

    pub fn merge(mut self, other: Tally) -> Self {
        self.trials += other.trials;
        for (k, v) in other.outcomes {
            *self.outcomes.entry(k).or_default() += v;
        }
        self.successes += other.successes;
        self.parity_checks += other.parity_checks;
        for (k, v) in other.failures {
            *self.failures.entry(k).or_default() += v;
        }
        self.parity_snapshots += other.parity_snapshots;
        self.anticorrelation_violations += other.anticorrelation_violations;
        self.min_fidelity = min_opt(self.min_fidelity, other.min_fidelity);
        for (k, v) in other.success_rounds {
            *self.success_rounds.entry(k).or_default() += v;
        }
        self
    }

    pub fn finish(self) -> RunStats {
        let n = self.trials;
        RunStats {
            n_trials: n,
            outcomes: self.outcomes.iter().map(|(k, &c)| (k.clone(), OutcomeStat::new(c, n))).collect(),
            success: OutcomeStat::new(self.successes, n),
            mean_parity_checks: self.parity_checks as f64 / n as f64,
            failures: self.failures,
            parity_snapshots: self.parity_snapshots,
            anticorrelation_violations: self.anticorrelation_violations,
            min_fidelity: self.min_fidelity,
            success_rounds: self.success_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub n_trials: u64,
    pub outcomes: BTreeMap<String, OutcomeStat>,
    pub success: OutcomeStat,
    pub mean_parity_checks: f64,
    pub failures: BTreeMap<String, u64>,
    /// Parity windows observed across all trials.
    pub parity_snapshots: u64,
    /// Parity windows where the two window detectors were not anti-correlated.
    pub anticorrelation_violations: u64,
    pub min_fidelity: Option<f64>,
    /// Successful trials by the growth round that succeeded.
    pub success_rounds: BTreeMap<u32, u64>,
}

impl RunStats {
    pub fn frequency(&self, key: &str) -> f64 {
        self.outcomes.get(key).map_or(0.0, |o| o.frequency)
    }

    /// Fraction of trials reaching `round` that succeeded there.
    pub fn conditional_round_success(&self, round: u32) -> Option<(u64, f64)> {
        let earlier: u64 = self.success_rounds.range(..round).map(|(_, c)| c).sum();
        let reached = self.n_trials - earlier;
        let hit = self.success_rounds.get(&round).copied().unwrap_or(0);
        (reached > 0).then(|| (reached, hit as f64 / reached as f64))
    }
}

pub fn run_trials(scenario: &Scenario, n_trials: u64, seed: Seed) -> Result<RunStats, MonteCarloError> {
    if n_trials == 0 {
        return Err(MonteCarloError::ZeroTrials);
    }
    scenario.validate()?;
    let tally = (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial(scenario, seed, i).map(|rec| scenario.summarize(&rec.outcome)))
        .try_fold(Tally::default, |t, s| s.map(|s| t.record(&s)))
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    Ok(tally.finish())
}

/// Walks a recorded prefix, then takes the first possible branch at every
/// new point.
struct Enumerator {
    prefix: Vec<bool>,
    points: Vec<(BranchPoint, bool)>,
    max_depth: usize,
}

impl OutcomeSource for Enumerator {
    fn decide(&mut self, point: BranchPoint) -> Result<bool, BranchError> {
        if self.points.len() >= self.max_depth {
            return Err(BranchError::DepthExceeded(self.max_depth));
        }
        let outcome = self.prefix.get(self.points.len()).copied().unwrap_or_else(|| point.is_possible(true));
        self.points.push((point, outcome));
        Ok(outcome)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPath {
    pub trace: Vec<BranchRecord>,
    /// Product of the probabilities of every non-overridden branch taken.
    pub probability: f64,
    pub outcome: TrialOutcome,
}

/// Visits every possible branch path in depth-first order.
pub fn for_each_branch(
    scenario: &Scenario,
    max_depth: usize,
    mut visit: impl FnMut(BranchPath),
) -> Result<u64, MonteCarloError> {
    scenario.validate()?;
    let mut stack = vec![Vec::<bool>::new()];
    let mut visited = 0;
    while let Some(prefix) = stack.pop() {
        let fixed = prefix.len();
        let enumerator = Enumerator { prefix, points: Vec::new(), max_depth };
        let mut source = Traced::new(scenario.forcing(enumerator));
        let outcome = scenario.execute(&mut source).map_err(|e| match e.branch_error() {
            Some(BranchError::DepthExceeded(d)) => MonteCarloError::DepthExceeded(*d),
            _ => MonteCarloError::Protocol(e),
        })?;
        let (forcing, trace) = source.into_parts();
        let points = forcing.into_inner().points;
        let probability = points.iter().map(|(p, o)| p.probability_of(*o)).product();
        let choices: Vec<bool> = points.iter().map(|(_, o)| *o).collect();
        for i in (fixed..points.len()).rev() {
            if points[i].0.is_possible(!choices[i]) {
                let mut alt = choices[..i].to_vec();
                alt.push(!choices[i]);
                stack.push(alt);
            }
        }
        visited += 1;
        visit(BranchPath { trace, probability, outcome });
    }
    Ok(visited)
}

/// Every branch path with its exact probability.
pub fn exhaustive_branches(scenario: &Scenario, max_depth: usize) -> Result<Vec<BranchPath>, MonteCarloError> {
    let mut paths = Vec::new();
    for_each_branch(scenario, max_depth, |p| paths.push(p))?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExactStats {
    pub paths: u64,
    pub total_probability: f64,
    pub outcomes: BTreeMap<String, f64>,
    pub success_probability: f64,
    pub expected_parity_checks: f64,
    pub failures: BTreeMap<String, f64>,
    pub parity_snapshots: u64,
    pub anticorrelation_violations: u64,
    pub min_fidelity: Option<f64>,
    pub success_rounds: BTreeMap<u32, f64>,
}

impl ExactStats {
    pub fn probability(&self, key: &str) -> f64 {
        self.outcomes.get(key).copied().unwrap_or(0.0)
    }

    fn add(&mut self, summary: &TrialSummary, p: f64) {
        self.paths += 1;
        self.total_probability += p;
        *self.outcomes.entry(summary.key.clone()).or_default() += p;
        if summary.success {
            self.success_probability += p;
        }
        self.expected_parity_checks += p * summary.parity_checks as f64;
        if let Some(f) = summary.failure {
            *self.failures.entry(f.to_string()).or_default() += p;
        }
        self.parity_snapshots += summary.parity_snapshots;
        self.anticorrelation_violations += summary.anticorrelation_violations;
        self.min_fidelity = min_opt(self.min_fidelity, summary.fidelity);
        if let Some(r) = summary.success_round {
            *self.success_rounds.entry(r).or_default() += p;
        }
    }
}

/// Exact outcome probabilities by full enumeration.
pub fn exact_stats(scenario: &Scenario, max_depth: usize) -> Result<ExactStats, MonteCarloError> {
    let mut stats = ExactStats::default();
    for_each_branch(scenario, max_depth, |path| stats.add(&scenario.summarize(&path.outcome), path.probability))?;
    Ok(stats)
}
