//! Sources of binary branch decisions.
//!
//! Every stochastic event in a protocol (a parity window or a nonadiabatic
//! separation) is a binary branch point. Protocol code asks an
//! [`OutcomeSource`] to decide each one, which lets the same code path run
//! sampled, replayed from a script, partially forced, or enumerated.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Probabilities at or below this are treated as impossible.
pub const ZERO_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchKind {
    /// `true` = parallel spins.
    Parity,
    /// `true` = the two electrons left with exchanged spin labels.
    Swap,
}

impl fmt::Display for BranchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchKind::Parity => f.write_str("parity"),
            BranchKind::Swap => f.write_str("swap"),
        }
    }
}

/// A pending binary decision and the probability of its `true` branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub kind: BranchKind,
    pub p_true: f64,
}

impl BranchPoint {
    pub fn new(kind: BranchKind, p_true: f64) -> Self {
        BranchPoint { kind, p_true: p_true.clamp(0.0, 1.0) }
    }

    pub fn probability_of(&self, outcome: bool) -> f64 {
        if outcome {
            self.p_true
        } else {
            1.0 - self.p_true
        }
    }

    pub fn is_possible(&self, outcome: bool) -> bool {
        self.probability_of(outcome) > ZERO_PROBABILITY
    }
}

/// One decided branch point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchRecord {
    pub kind: BranchKind,
    pub outcome: bool,
    /// Probability of the chosen outcome at the moment it was chosen.
    pub probability: f64,
    /// Set when the outcome came from an override rather than the stream.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BranchError {
    #[error("forced {kind} outcome `{}` has probability {probability:e}", outcome_name(*kind, *outcome))]
    ImpossibleOutcome { kind: BranchKind, outcome: bool, probability: f64 },
    #[error("branch script exhausted after {0} decisions")]
    ScriptExhausted(usize),
    #[error("scripted {expected} decision met a {found} branch point")]
    KindMismatch { expected: BranchKind, found: BranchKind },
    #[error("branch depth exceeded limit of {0}")]
    DepthExceeded(usize),
}

/// Human-readable name of a branch outcome.
pub fn outcome_name(kind: BranchKind, outcome: bool) -> &'static str {
    match (kind, outcome) {
        (BranchKind::Parity, true) => "parallel",
        (BranchKind::Parity, false) => "antiparallel",
        (BranchKind::Swap, true) => "swapped",
        (BranchKind::Swap, false) => "not swapped",
    }
}

pub trait OutcomeSource {
    fn decide(&mut self, point: BranchPoint) -> Result<bool, BranchError>;

    /// Like [`decide`](Self::decide), also reporting whether the outcome was
    /// an override.
    fn decide_tagged(&mut self, point: BranchPoint) -> Result<(bool, bool), BranchError> {
        self.decide(point).map(|o| (o, false))
    }
}

impl<S: OutcomeSource + ?Sized> OutcomeSource for &mut S {
    fn decide(&mut self, point: BranchPoint) -> Result<bool, BranchError> {
        (**self).decide(point)
    }

    fn decide_tagged(&mut self, point: BranchPoint) -> Result<(bool, bool), BranchError> {
        (**self).decide_tagged(point)
    }
}

fn check_forced(point: BranchPoint, outcome: bool) -> Result<bool, BranchError> {
    if point.is_possible(outcome) {
        Ok(outcome)
    } else {
        Err(BranchError::ImpossibleOutcome { kind: point.kind, outcome, probability: point.probability_of(outcome) })
    }
}

/// Born-rule sampling from a random stream.
#[derive(Debug, Clone)]
pub struct RandomSource<R> {
    rng: R,
}

impl<R: Rng> RandomSource<R> {
    pub fn new(rng: R) -> Self {
        RandomSource { rng }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

impl<R: Rng> OutcomeSource for RandomSource<R> {
    fn decide(&mut self, point: BranchPoint) -> Result<bool, BranchError> {
        // Always draw so the stream position does not depend on the state.
        let u: f64 = self.rng.gen();
        if !point.is_possible(true) {
            return Ok(false);
        }
        if !point.is_possible(false) {
            return Ok(true);
        }
        Ok(u < point.p_true)
    }
}

/// Replays a fixed sequence of outcomes, one per branch point.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSource {
    script: Vec<bool>,
    kinds: Option<Vec<BranchKind>>,
    pos: usize,
}

impl ScriptedSource {
    pub fn new(script: impl Into<Vec<bool>>) -> Self {
        ScriptedSource { script: script.into(), kinds: None, pos: 0 }
    }

    /// Replays a recorded trace, also checking that each branch kind matches.
    pub fn from_trace(trace: &[BranchRecord]) -> Self {
        ScriptedSource {
            script: trace.iter().map(|r| r.outcome).collect(),
            kinds: Some(trace.iter().map(|r| r.kind).collect()),
            pos: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - self.pos
    }
}

impl OutcomeSource for ScriptedSource {
    fn decide(&mut self, point: BranchPoint) -> Result<bool, BranchError> {
        let Some(&outcome) = self.script.get(self.pos) else {
            return Err(BranchError::ScriptExhausted(self.pos));
        };
        if let Some(kinds) = &self.kinds {
            if kinds[self.pos] != point.kind {
                return Err(BranchError::KindMismatch { expected: kinds[self.pos], found: point.kind });
            }
        }
        self.pos += 1;
        check_forced(point, outcome)
    }
}

/// How separation swaps are decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwapPolicy {
    /// Every separation exchanges the spin labels.
    On,
    /// No separation exchanges the spin labels.
    Off,
    #[default]
    Random,
}

/// Applies deterministic overrides before delegating to an inner source.
///
/// Queued swap outcomes take precedence over the swap policy; queued parity
/// outcomes are consumed in order. Anything not overridden goes to `inner`.
#[derive(Debug, Clone)]
pub struct Forcing<S> {
    inner: S,
    swap_policy: SwapPolicy,
    swaps: VecDeque<bool>,
    parities: VecDeque<bool>,
}

impl<S: OutcomeSource> Forcing<S> {
    pub fn new(inner: S) -> Self {
        Forcing { inner, swap_policy: SwapPolicy::Random, swaps: VecDeque::new(), parities: VecDeque::new() }
    }

    pub fn with_swap_policy(mut self, policy: SwapPolicy) -> Self {
        self.swap_policy = policy;
        self
    }

    pub fn with_swaps(mut self, swaps: impl IntoIterator<Item = bool>) -> Self {
        self.swaps.extend(swaps);
        self
    }

    /// Queue parity outcomes, `true` = parallel.
    pub fn with_parities(mut self, parities: impl IntoIterator<Item = bool>) -> Self {
        self.parities.extend(parities);
        self
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }

    /// Returns `Some(outcome)` if the point is overridden.
    fn forced(&mut self, point: BranchPoint) -> Option<bool> {
        match point.kind {
            BranchKind::Swap => self.swaps.pop_front().or(match self.swap_policy {
                SwapPolicy::On => Some(true),
                SwapPolicy::Off => Some(false),
                SwapPolicy::Random => None,
            }),
            BranchKind::Parity => self.parities.pop_front(),
        }
    }
}

impl<S: OutcomeSource> OutcomeSource for Forcing<S> {
    fn decide(&mut self, point: BranchPoint) -> Result<bool, BranchError> {
        self.decide_tagged(point).map(|(o, _)| o)
    }

    fn decide_tagged(&mut self, point: BranchPoint) -> Result<(bool, bool), BranchError> {
        match self.forced(point) {
            Some(outcome) => check_forced(point, outcome).map(|o| (o, true)),
            None => self.inner.decide_tagged(point),
        }
    }
}

/// Records every decision made through it.
#[derive(Debug, Clone)]
pub struct Traced<S> {
    inner: S,
    trace: Vec<BranchRecord>,
}

impl<S> Traced<S> {
    pub fn new(inner: S) -> Self {
        Traced { inner, trace: Vec::new() }
    }

    pub fn trace(&self) -> &[BranchRecord] {
        &self.trace
    }

    pub fn into_parts(self) -> (S, Vec<BranchRecord>) {
        (self.inner, self.trace)
    }
}

impl<S: OutcomeSource> OutcomeSource for Traced<S> {
    fn decide(&mut self, point: BranchPoint) -> Result<bool, BranchError> {
        self.decide_tagged(point).map(|(o, _)| o)
    }

    fn decide_tagged(&mut self, point: BranchPoint) -> Result<(bool, bool), BranchError> {
        let (outcome, forced) = self.inner.decide_tagged(point)?;
        self.trace.push(BranchRecord { kind: point.kind, outcome, probability: point.probability_of(outcome), forced });
        Ok((outcome, forced))
    }
}
