//! Classical device layer: dots, electron locations, gates and charge detectors.
//!
//! Charge is classical. Every gate-open window is followed by a detector read,
//! so charge configurations are never held in superposition; only the spin
//! register is quantum.

use std::fmt;

use thiserror::Error;

use crate::outcome::{BranchError, BranchKind, BranchPoint, OutcomeSource};
use crate::state::{PureState, StateError};

pub use crate::state::ParityOutcome;

/// Electrons per dot never exceed this.
pub const DOT_CAPACITY: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("unknown dot {0:?}")]
    UnknownDot(String),
    #[error("unknown electron {0}")]
    UnknownElectron(usize),
    #[error("dot {0} is full")]
    DotFull(String),
    #[error("dot {dot} holds {found} electrons, expected {expected}")]
    Occupancy { dot: String, expected: usize, found: usize },
    #[error("dots {0} and {1} share no gate")]
    NotCoupled(String, String),
    #[error("dot {0} has no charge detector")]
    Unmonitored(String),
    #[error("separation targets must be distinct, got {0} twice")]
    SameTarget(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Branch(#[from] BranchError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DotId(String);

impl DotId {
    pub fn new(label: impl Into<String>) -> Self {
        DotId(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Dots, tunable gates between dot pairs, and detector assignments.
///
/// Detector `k` (1-based) monitors `detectors[k - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceLayout {
    dots: Vec<DotId>,
    detectors: Vec<usize>,
    coupled: Vec<(usize, usize)>,
}

impl DeviceLayout {
    pub fn new(dots: &[&str], coupled: &[(&str, &str)], detectors: &[&str]) -> Result<Self, DeviceError> {
        let dots: Vec<DotId> = dots.iter().map(|d| DotId::new(*d)).collect();
        if dots.is_empty() {
            return Err(DeviceError::InvalidLayout("no dots".into()));
        }
        for (i, d) in dots.iter().enumerate() {
            if d.as_str().is_empty() || dots[..i].contains(d) {
                return Err(DeviceError::InvalidLayout(format!("dot label {d:?} empty or repeated")));
            }
        }
        let find = |label: &str| {
            dots.iter().position(|d| d.as_str() == label).ok_or_else(|| DeviceError::UnknownDot(label.to_string()))
        };
        let mut pairs = Vec::new();
        for (x, y) in coupled {
            let (i, j) = (find(x)?, find(y)?);
            if i == j {
                return Err(DeviceError::InvalidLayout(format!("gate from {x} to itself")));
            }
            pairs.push((i.min(j), i.max(j)));
        }
        let detectors = detectors.iter().map(|d| find(d)).collect::<Result<Vec<_>, _>>()?;
        Ok(DeviceLayout { dots, detectors, coupled: pairs })
    }

    /// Two coupled dots A–B, D1 on A and D2 on B.
    pub fn fig1() -> Self {
        Self::new(&["A", "B"], &[("A", "B")], &["A", "B"]).expect("static layout")
    }

    /// A–B–C chain with parity checks made in B; one detector per dot.
    pub fn fig2() -> Self {
        Self::new(&["A", "B", "C"], &[("A", "B"), ("B", "C")], &["A", "B", "C"]).expect("static layout")
    }

    /// Linear chain `Q1 … Qn`, adjacent dots coupled, one detector per dot.
    pub fn chain(n: usize) -> Self {
        let labels: Vec<String> = (1..=n).map(|i| format!("Q{i}")).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let pairs: Vec<(&str, &str)> = refs.windows(2).map(|w| (w[0], w[1])).collect();
        Self::new(&refs, &pairs, &refs).expect("chain layout")
    }

    pub fn dots(&self) -> &[DotId] {
        &self.dots
    }

    pub fn dot_index(&self, label: &str) -> Result<usize, DeviceError> {
        self.dots.iter().position(|d| d.as_str() == label).ok_or_else(|| DeviceError::UnknownDot(label.to_string()))
    }

    pub fn are_coupled(&self, a: usize, b: usize) -> bool {
        self.coupled.contains(&(a.min(b), a.max(b)))
    }

    /// `(a, b)` pairs by label.
    pub fn coupled_pairs(&self) -> Vec<(&DotId, &DotId)> {
        self.coupled.iter().map(|&(a, b)| (&self.dots[a], &self.dots[b])).collect()
    }

    /// Monitored dot per detector, in detector order.
    pub fn detector_dots(&self) -> Vec<&DotId> {
        self.detectors.iter().map(|&d| &self.dots[d]).collect()
    }

    /// 1-based index of the first detector monitoring `dot`.
    pub fn detector_for(&self, dot: usize) -> Option<usize> {
        self.detectors.iter().position(|&d| d == dot).map(|i| i + 1)
    }

    /// True when `dots[k]` and `dots[k + 1]` are coupled for every `k < len - 1`.
    pub fn is_chain(&self, len: usize) -> bool {
        len <= self.dots.len() && (1..len).all(|k| self.are_coupled(k - 1, k))
    }
}

/// Electron → dot index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargeConfig {
    location: Vec<usize>,
}

impl ChargeConfig {
    pub fn location(&self, electron: usize) -> Option<usize> {
        self.location.get(electron).copied()
    }

    pub fn occupancy(&self, dot: usize) -> usize {
        self.location.iter().filter(|&&d| d == dot).count()
    }

    pub fn residents(&self, dot: usize) -> Vec<usize> {
        self.location.iter().enumerate().filter(|(_, &d)| d == dot).map(|(e, _)| e).collect()
    }

    pub fn num_electrons(&self) -> usize {
        self.location.len()
    }
}

/// Charge-detector readout after one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorSnapshot {
    /// Event counter; nominal time only.
    pub step: u64,
    /// One bit per detector, `true` = charge present in the monitored dot.
    pub readings: Vec<bool>,
    /// 1-based detectors watching the (home, partner) dots of a parity window.
    pub window: Option<(usize, usize)>,
}

impl DetectorSnapshot {
    pub fn reading(&self, detector: usize) -> bool {
        self.readings[detector - 1]
    }

    /// Exactly one of the two window detectors sees charge.
    pub fn is_anticorrelated(&self) -> bool {
        match self.window {
            Some((h, p)) => self.reading(h) != self.reading(p),
            None => true,
        }
    }

    /// Readings as a bit string, detector 1 first.
    pub fn bits(&self) -> String {
        self.readings.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    layout: DeviceLayout,
    spins: PureState,
    charge: ChargeConfig,
    log: Vec<DetectorSnapshot>,
    next_step: u64,
}

impl DeviceState {
    /// Places electron `e` in `locations[e]`.
    pub fn new(layout: DeviceLayout, spins: PureState, locations: &[&str]) -> Result<Self, DeviceError> {
        if locations.len() != spins.num_qubits() {
            return Err(DeviceError::InvalidLayout(format!(
                "{} electron locations for {} spins",
                locations.len(),
                spins.num_qubits()
            )));
        }
        let location = locations.iter().map(|l| layout.dot_index(l)).collect::<Result<Vec<_>, _>>()?;
        let charge = ChargeConfig { location };
        for d in 0..layout.dots.len() {
            if charge.occupancy(d) > DOT_CAPACITY {
                return Err(DeviceError::DotFull(layout.dots[d].to_string()));
            }
        }
        Ok(DeviceState { layout, spins, charge, log: Vec::new(), next_step: 1 })
    }

    /// Two-dot layout with electron 0 in A and electron 1 in B.
    pub fn fig1(spins: PureState) -> Result<Self, DeviceError> {
        Self::new(DeviceLayout::fig1(), spins, &["A", "B"])
    }

    pub fn layout(&self) -> &DeviceLayout {
        &self.layout
    }

    pub fn spins(&self) -> &PureState {
        &self.spins
    }

    pub fn charge(&self) -> &ChargeConfig {
        &self.charge
    }

    pub fn read_log(&self) -> &[DetectorSnapshot] {
        &self.log
    }

    pub fn into_log(self) -> Vec<DetectorSnapshot> {
        self.log
    }

    pub fn num_electrons(&self) -> usize {
        self.charge.num_electrons()
    }

    pub fn location(&self, electron: usize) -> Result<&DotId, DeviceError> {
        self.charge.location(electron).map(|d| &self.layout.dots[d]).ok_or(DeviceError::UnknownElectron(electron))
    }

    pub fn occupancy(&self, dot: &str) -> Result<usize, DeviceError> {
        Ok(self.charge.occupancy(self.layout.dot_index(dot)?))
    }

    /// Replaces the spin register with a state of the same size.
    ///
    /// Stands in for single-electron rotations, which need no charge motion.
    pub fn with_spins(mut self, spins: PureState) -> Result<Self, DeviceError> {
        if spins.num_qubits() != self.spins.num_qubits() {
            return Err(StateError::DimensionMismatch(spins.num_qubits(), self.spins.num_qubits()).into());
        }
        self.spins = spins;
        Ok(self)
    }

    /// Loads a fresh electron with single-spin state `spin` into `dot`; it
    /// takes the next electron index.
    pub fn attach_electron(mut self, dot: &str, spin: &PureState) -> Result<Self, DeviceError> {
        let d = self.layout.dot_index(dot)?;
        if self.charge.occupancy(d) >= DOT_CAPACITY {
            return Err(DeviceError::DotFull(dot.to_string()));
        }
        self.spins = self.spins.tensor(spin)?;
        self.charge.location.push(d);
        Ok(self)
    }

    /// Moves one electron; the spin register is untouched.
    pub fn transfer(mut self, electron: usize, to: &str) -> Result<Self, DeviceError> {
        let dest = self.layout.dot_index(to)?;
        let here = self.charge.location(electron).ok_or(DeviceError::UnknownElectron(electron))?;
        if here == dest {
            return Ok(self);
        }
        if self.charge.occupancy(dest) >= DOT_CAPACITY {
            return Err(DeviceError::DotFull(to.to_string()));
        }
        self.charge.location[electron] = dest;
        Ok(self)
    }

    fn pair_in(&self, dot: usize) -> Result<(usize, usize), DeviceError> {
        match self.charge.residents(dot)[..] {
            [a, b] => Ok((a, b)),
            ref other => {
                Err(DeviceError::Occupancy { dot: self.layout.dots[dot].to_string(), expected: 2, found: other.len() })
            }
        }
    }

    /// Nonadiabatic split of the two electrons in `from`: with probability 1/2
    /// their spin labels are exchanged. The lower-index electron then goes to
    /// `targets.0` and the other to `targets.1`. Returns whether the exchange
    /// branch fired.
    pub fn separate_nonadiabatic(
        mut self,
        from: &str,
        targets: (&str, &str),
        source: &mut dyn OutcomeSource,
    ) -> Result<(Self, bool), DeviceError> {
        let src = self.layout.dot_index(from)?;
        let (t0, t1) = (self.layout.dot_index(targets.0)?, self.layout.dot_index(targets.1)?);
        if t0 == t1 {
            return Err(DeviceError::SameTarget(targets.0.to_string()));
        }
        let (lo, hi) = self.pair_in(src)?;
        for (t, label) in [(t0, targets.0), (t1, targets.1)] {
            let after_leaving = self.charge.occupancy(t) - if t == src { 2 } else { 0 };
            if after_leaving >= DOT_CAPACITY {
                return Err(DeviceError::DotFull(label.to_string()));
            }
        }
        let swapped = source.decide(BranchPoint::new(BranchKind::Swap, 0.5))?;
        if swapped {
            self.spins = self.spins.apply_swap(lo, hi)?;
        }
        self.charge.location[lo] = t0;
        self.charge.location[hi] = t1;
        Ok((self, swapped))
    }

    /// Opens the gate between `home` (holding two electrons) and the empty
    /// `partner`. Antiparallel spins tunnel to `partner`; parallel spins stay.
    pub fn parity_measure(
        mut self,
        home: &str,
        partner: &str,
        source: &mut dyn OutcomeSource,
    ) -> Result<(Self, ParityOutcome, DetectorSnapshot), DeviceError> {
        let (h, p) = (self.layout.dot_index(home)?, self.layout.dot_index(partner)?);
        if !self.layout.are_coupled(h, p) {
            return Err(DeviceError::NotCoupled(home.to_string(), partner.to_string()));
        }
        let (e1, e2) = self.pair_in(h)?;
        let found = self.charge.occupancy(p);
        if found != 0 {
            return Err(DeviceError::Occupancy { dot: partner.to_string(), expected: 0, found });
        }
        let dh = self.layout.detector_for(h).ok_or_else(|| DeviceError::Unmonitored(home.to_string()))?;
        let dp = self.layout.detector_for(p).ok_or_else(|| DeviceError::Unmonitored(partner.to_string()))?;
        let (outcome, _, spins) = self.spins.project_parity(e1, e2, source)?;
        self.spins = spins;
        if outcome == ParityOutcome::Antiparallel {
            self.charge.location[e1] = p;
            self.charge.location[e2] = p;
        }
        let snapshot = DetectorSnapshot { step: self.next_step, readings: self.readings(), window: Some((dh, dp)) };
        self.next_step += 1;
        self.log.push(snapshot.clone());
        Ok((self, outcome, snapshot))
    }

    fn readings(&self) -> Vec<bool> {
        self.layout.detectors.iter().map(|&d| self.charge.occupancy(d) > 0).collect()
    }
}
