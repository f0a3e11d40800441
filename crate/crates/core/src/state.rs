//! Dense pure-state representation of `n` electron spins.
//!
//! Basis convention: bit value 0 is |↑⟩ and 1 is |↓⟩, and qubit `k` occupies
//! bit `k` of the amplitude index. Kets are written with qubit 0 leftmost, so
//! `|↑↓⟩` is index `0b10`.
//!
//! States are immutable values; every gate returns a new state.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::outcome::{BranchError, BranchKind, BranchPoint, OutcomeSource};

pub type ComplexScalar = Complex64;

/// Hard cap on the dense vector size.
pub const MAX_QUBITS: usize = 24;
/// Tolerance for the stored-state normalization invariant.
pub const NORM_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_GHZ_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("qubit count must be in 1..={MAX_QUBITS}, got {0}")]
    QubitCount(usize),
    #[error("amplitude vector of length {found} does not match {expected} = 2^n")]
    BadLength { expected: usize, found: usize },
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit state")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("basis index {index} out of range for a {num_qubits}-qubit state")]
    IndexOutOfRange { index: usize, num_qubits: usize },
    #[error("two-qubit operation needs distinct qubits, got {0} twice")]
    SameQubit(usize),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("state norm² is {0}, expected 1")]
    NotNormalized(f64),
    #[error("non-finite amplitude")]
    NonFinite,
    #[error("dimension mismatch: {0} vs {1} qubits")]
    DimensionMismatch(usize, usize),
    #[error("qubits {0} and {1} are entangled with the rest of the register")]
    Entangled(usize, usize),
    #[error("bad basis label {0:?}")]
    BadBasisLabel(String),
    #[error(transparent)]
    Branch(#[from] BranchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParityOutcome {
    Parallel,
    Antiparallel,
}

impl ParityOutcome {
    pub fn is_parallel(self) -> bool {
        self == ParityOutcome::Parallel
    }

    pub fn from_parallel(parallel: bool) -> Self {
        if parallel {
            ParityOutcome::Parallel
        } else {
            ParityOutcome::Antiparallel
        }
    }
}

impl fmt::Display for ParityOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParityOutcome::Parallel => f.write_str("parallel"),
            ParityOutcome::Antiparallel => f.write_str("antiparallel"),
        }
    }
}

/// The four Bell states; `Phi*` span the parallel-spin subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [BellLabel::PhiPlus, BellLabel::PhiMinus, BellLabel::PsiPlus, BellLabel::PsiMinus];

    pub fn parity(self) -> ParityOutcome {
        match self {
            BellLabel::PhiPlus | BellLabel::PhiMinus => ParityOutcome::Parallel,
            BellLabel::PsiPlus | BellLabel::PsiMinus => ParityOutcome::Antiparallel,
        }
    }

    /// Position in (Φ+, Φ−, Ψ+, Ψ−) coefficient order.
    pub fn index(self) -> usize {
        match self {
            BellLabel::PhiPlus => 0,
            BellLabel::PhiMinus => 1,
            BellLabel::PsiPlus => 2,
            BellLabel::PsiMinus => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BellLabel::PhiPlus => "PhiPlus",
            BellLabel::PhiMinus => "PhiMinus",
            BellLabel::PsiPlus => "PsiPlus",
            BellLabel::PsiMinus => "PsiMinus",
        }
    }

    /// Two-qubit state on qubits (0, 1).
    pub fn state(self) -> PureState {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        // index = q0 | q1 << 1
        let amps = match self {
            BellLabel::PhiPlus => [h, 0.0.into(), 0.0.into(), h],
            BellLabel::PhiMinus => [h, 0.0.into(), 0.0.into(), -h],
            // |↑↓⟩ is index 2, |↓↑⟩ is index 1
            BellLabel::PsiPlus => [0.0.into(), h, h, 0.0.into()],
            BellLabel::PsiMinus => [0.0.into(), -h, h, 0.0.into()],
        };
        PureState { num_qubits: 2, amps: amps.to_vec() }
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coefficients of Φ+, Φ−, Ψ+, Ψ− in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellCoefficients {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl BellCoefficients {
    pub fn as_array(&self) -> [Complex64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn coefficient(&self, label: BellLabel) -> Complex64 {
        self.as_array()[label.index()]
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.as_array().map(|z| z.norm_sqr())
    }

    /// The two-qubit state `aΦ+ + bΦ− + cΨ+ + dΨ−`.
    pub fn to_state(&self) -> Result<PureState, StateError> {
        let h = FRAC_1_SQRT_2;
        let up_up = (self.a + self.b) * h;
        let down_down = (self.a - self.b) * h;
        let up_down = (self.c + self.d) * h;
        let down_up = (self.c - self.d) * h;
        PureState::from_amplitudes(vec![up_up, down_up, up_down, down_down])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhzClassResult {
    pub is_ghz: bool,
    /// Branch label `b`, normalized so that qubit 0 is ↑.
    pub bitmask: usize,
    /// φ in `(|b⟩ + e^{iφ}|~b⟩)/√2`, in `[0, 2π)`.
    pub relative_phase: f64,
    pub num_qubits: usize,
}

impl GhzClassResult {
    pub fn mask_string(&self) -> String {
        basis_string(self.bitmask, self.num_qubits)
    }
}

/// Renders a basis index as a ket label with qubit 0 first.
pub fn basis_string(index: usize, num_qubits: usize) -> String {
    (0..num_qubits).map(|q| if index >> q & 1 == 0 { '↑' } else { '↓' }).collect()
}

/// Parses a ket label such as `"↑↓"`, `"ud"` or `"01"`; qubit 0 is leftmost.
pub fn parse_basis(label: &str) -> Result<(usize, usize), StateError> {
    let mut index = 0usize;
    let mut n = 0usize;
    for ch in label.chars() {
        let bit = match ch {
            '↑' | 'u' | 'U' | '0' => 0,
            '↓' | 'd' | 'D' | '1' => 1,
            _ => return Err(StateError::BadBasisLabel(label.to_string())),
        };
        if n >= MAX_QUBITS {
            return Err(StateError::QubitCount(n + 1));
        }
        index |= bit << n;
        n += 1;
    }
    if n == 0 {
        return Err(StateError::BadBasisLabel(label.to_string()));
    }
    Ok((index, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_qubit_count(n: usize) -> Result<(), StateError> {
    if n == 0 || n > MAX_QUBITS {
        Err(StateError::QubitCount(n))
    } else {
        Ok(())
    }
}

impl PureState {
    /// `|↑↑…↑⟩`.
    pub fn all_up(num_qubits: usize) -> Result<Self, StateError> {
        check_qubit_count(num_qubits)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = 1.0.into();
        Ok(PureState { num_qubits, amps })
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self, StateError> {
        let mut s = Self::all_up(num_qubits)?;
        if index >= s.amps.len() {
            return Err(StateError::IndexOutOfRange { index, num_qubits });
        }
        s.amps.swap(0, index);
        Ok(s)
    }

    /// `(|↑⟩ + |↓⟩)/√2`.
    pub fn plus() -> Self {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        PureState { num_qubits: 1, amps: vec![h, h] }
    }

    /// Builds a state from an already normalized amplitude vector.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, StateError> {
        if !amps.len().is_power_of_two() {
            return Err(StateError::BadLength { expected: amps.len().next_power_of_two(), found: amps.len() });
        }
        let num_qubits = amps.len().trailing_zeros() as usize;
        check_qubit_count(num_qubits)?;
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(PureState { num_qubits, amps })
    }

    /// Builds a state from unnormalized amplitudes, rescaling to norm 1.
    pub fn normalized(mut amps: Vec<Complex64>) -> Result<Self, StateError> {
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= f64::MIN_POSITIVE {
            return Err(StateError::ZeroNorm);
        }
        amps.iter_mut().for_each(|z| *z /= norm);
        Self::from_amplitudes(amps)
    }

    /// Sets the listed basis amplitudes (repeated labels accumulate), zeroes
    /// the rest, and normalizes.
    pub fn make_state(num_qubits: usize, assignments: &[(&str, Complex64)]) -> Result<Self, StateError> {
        check_qubit_count(num_qubits)?;
        if assignments.is_empty() {
            return Err(StateError::ZeroNorm);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        for (label, amp) in assignments {
            let (index, n) = parse_basis(label)?;
            if n != num_qubits {
                return Err(StateError::IndexOutOfRange { index, num_qubits });
            }
            amps[index] += *amp;
        }
        Self::normalized(amps)
    }

    /// Product state of single-qubit states; qubit k is `factors[k]`.
    pub fn product(factors: &[PureState]) -> Result<Self, StateError> {
        let (first, rest) = factors.split_first().ok_or(StateError::QubitCount(0))?;
        rest.iter().try_fold(first.clone(), |acc, f| acc.tensor(f))
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `self ⊗ other`, with `other`'s qubits appended after `self`'s.
    pub fn tensor(&self, other: &PureState) -> Result<Self, StateError> {
        let n = self.num_qubits + other.num_qubits;
        check_qubit_count(n)?;
        let mut amps = Vec::with_capacity(1 << n);
        for hi in &other.amps {
            for lo in &self.amps {
                amps.push(lo * hi);
            }
        }
        Ok(PureState { num_qubits: n, amps })
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), StateError> {
        if qubit >= self.num_qubits {
            Err(StateError::QubitOutOfRange { qubit, num_qubits: self.num_qubits })
        } else {
            Ok(())
        }
    }

    fn check_pair(&self, q1: usize, q2: usize) -> Result<(), StateError> {
        self.check_qubit(q1)?;
        self.check_qubit(q2)?;
        if q1 == q2 {
            Err(StateError::SameQubit(q1))
        } else {
            Ok(())
        }
    }

    fn map_single(&self, qubit: usize, gate: [[Complex64; 2]; 2]) -> Result<Self, StateError> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        let mut amps = self.amps.clone();
        for i in (0..amps.len()).filter(|i| i & bit == 0) {
            let (up, down) = (self.amps[i], self.amps[i | bit]);
            amps[i] = gate[0][0] * up + gate[0][1] * down;
            amps[i | bit] = gate[1][0] * up + gate[1][1] * down;
        }
        Ok(PureState { num_qubits: self.num_qubits, amps })
    }

    /// |↑⟩ → (|↑⟩+|↓⟩)/√2, |↓⟩ → (|↑⟩−|↓⟩)/√2.
    pub fn apply_hadamard(&self, qubit: usize) -> Result<Self, StateError> {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        self.map_single(qubit, [[h, h], [h, -h]])
    }

    /// Spin flip.
    pub fn apply_x(&self, qubit: usize) -> Result<Self, StateError> {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        self.map_single(qubit, [[z, o], [o, z]])
    }

    /// Phase flip of |↓⟩.
    pub fn apply_z(&self, qubit: usize) -> Result<Self, StateError> {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        self.map_single(qubit, [[o, z], [z, -o]])
    }

    /// Exchanges the spin states of two qubits.
    pub fn apply_swap(&self, q1: usize, q2: usize) -> Result<Self, StateError> {
        self.check_pair(q1, q2)?;
        let (b1, b2) = (1usize << q1, 1usize << q2);
        let amps = (0..self.amps.len())
            .map(|i| {
                let differ = ((i & b1) != 0) != ((i & b2) != 0);
                self.amps[if differ { i ^ b1 ^ b2 } else { i }]
            })
            .collect();
        Ok(PureState { num_qubits: self.num_qubits, amps })
    }

    /// Probability that qubits `q1` and `q2` have parallel spins.
    pub fn parallel_probability(&self, q1: usize, q2: usize) -> Result<f64, StateError> {
        self.check_pair(q1, q2)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (i >> q1 & 1) == (i >> q2 & 1))
            .map(|(_, z)| z.norm_sqr())
            .sum())
    }

    /// Projects onto one parity subspace and renormalizes.
    pub fn project_onto(&self, q1: usize, q2: usize, outcome: ParityOutcome) -> Result<(f64, Self), StateError> {
        self.check_pair(q1, q2)?;
        let keep_parallel = outcome.is_parallel();
        let amps: Vec<Complex64> = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, z)| if ((i >> q1 & 1) == (i >> q2 & 1)) == keep_parallel { *z } else { 0.0.into() })
            .collect();
        let p = amps.iter().map(|z| z.norm_sqr()).sum::<f64>();
        Ok((p, Self::normalized(amps)?))
    }

    /// Spin-parity measurement of two qubits; the outcome is drawn from `source`.
    pub fn project_parity(
        &self,
        q1: usize,
        q2: usize,
        source: &mut dyn OutcomeSource,
    ) -> Result<(ParityOutcome, f64, Self), StateError> {
        let p_parallel = self.parallel_probability(q1, q2)?;
        let parallel = source.decide(BranchPoint::new(BranchKind::Parity, p_parallel))?;
        let outcome = ParityOutcome::from_parallel(parallel);
        let (p, state) = self.project_onto(q1, q2, outcome)?;
        Ok((outcome, p, state))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<Complex64, StateError> {
        if self.num_qubits != other.num_qubits {
            return Err(StateError::DimensionMismatch(self.num_qubits, other.num_qubits));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|⟨self|other⟩|²`; 1 iff equal up to a global phase.
    pub fn fidelity_up_to_phase(&self, other: &PureState) -> Result<f64, StateError> {
        Ok(self.inner(other)?.norm_sqr().min(1.0))
    }

    /// Bell-basis coefficients of qubits (q1, q2), which must be in a product
    /// with the remaining qubits.
    ///
    /// For a two-qubit state the coefficients are exact, phase included. With
    /// spectator qubits the global phase is fixed by making the largest
    /// spectator amplitude real and positive.
    pub fn bell_decompose(&self, q1: usize, q2: usize) -> Result<BellCoefficients, StateError> {
        self.check_pair(q1, q2)?;
        let (b1, b2) = (1usize << q1, 1usize << q2);
        // rest configurations: indices with both designated bits clear
        let rest: Vec<usize> = (0..self.amps.len()).filter(|i| i & (b1 | b2) == 0).collect();
        let block = |r: usize| [self.amps[r], self.amps[r | b1], self.amps[r | b2], self.amps[r | b1 | b2]];
        let weight = |r: usize| block(r).iter().map(|z| z.norm_sqr()).sum::<f64>();
        let pivot =
            rest.iter().copied().max_by(|x, y| weight(*x).total_cmp(&weight(*y))).ok_or(StateError::ZeroNorm)?;
        let pivot_weight = weight(pivot).sqrt();
        if pivot_weight <= f64::MIN_POSITIVE {
            return Err(StateError::ZeroNorm);
        }
        // pair vector v (normalized), spectator vector w = v† M
        let v = block(pivot).map(|z| z / pivot_weight);
        let w: Vec<Complex64> =
            rest.iter().map(|&r| v.iter().zip(block(r)).map(|(vi, mi)| vi.conj() * mi).sum()).collect();
        let residual: f64 = rest
            .iter()
            .zip(&w)
            .map(|(&r, wr)| block(r).iter().zip(&v).map(|(m, vi)| (m - vi * wr).norm_sqr()).sum::<f64>())
            .sum();
        if residual.sqrt() > NORM_TOLERANCE {
            return Err(StateError::Entangled(q1, q2));
        }
        let w_max = w.iter().copied().max_by(|x, y| x.norm_sqr().total_cmp(&y.norm_sqr())).unwrap_or_default();
        let phase = if w_max.norm() > 0.0 { w_max / w_max.norm() } else { 1.0.into() };
        let norm_w = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let scale = phase * norm_w;
        // v entries are ordered (↑↑, ↓↑, ↑↓, ↓↓) as (q1 bit, q2 bit)
        let [uu, du, ud, dd] = v.map(|z| z * scale);
        let h = FRAC_1_SQRT_2;
        Ok(BellCoefficients { a: (uu + dd) * h, b: (uu - dd) * h, c: (ud + du) * h, d: (ud - du) * h })
    }

    /// Detects `(|b⟩ + e^{iφ}|~b⟩)/√2` within `tol` of unit fidelity.
    pub fn is_ghz_class(&self, tol: f64) -> GhzClassResult {
        let n = self.num_qubits;
        let full = (1usize << n) - 1;
        let peak = (0..self.amps.len()).max_by(|x, y| self.amps[*x].norm_sqr().total_cmp(&self.amps[*y].norm_sqr()));
        let peak = peak.unwrap_or(0);
        let b = if peak & 1 == 0 { peak } else { peak ^ full };
        let (ab, anb) = (self.amps[b], self.amps[b ^ full]);
        let not_ghz = GhzClassResult { is_ghz: false, bitmask: b, relative_phase: 0.0, num_qubits: n };
        if ab.norm() <= f64::MIN_POSITIVE || anb.norm() <= f64::MIN_POSITIVE {
            return not_ghz;
        }
        // overlap with the best candidate is (|ab| + |anb|)/√2
        let fidelity = (ab.norm() + anb.norm()).powi(2) / 2.0;
        if fidelity < 1.0 - tol {
            return not_ghz;
        }
        let mut phase = (anb / ab).arg().rem_euclid(TAU);
        // snap values that round to 2π back to 0
        if (TAU - phase).abs() < 1e-12 || phase.abs() < 1e-12 {
            phase = 0.0;
        } else if (phase - PI).abs() < 1e-12 {
            phase = PI;
        }
        GhzClassResult { is_ghz: true, bitmask: b, relative_phase: phase, num_qubits: n }
    }

    /// The canonical GHZ state `(|b⟩ + e^{iφ}|~b⟩)/√2`.
    pub fn ghz(num_qubits: usize, bitmask: usize, phase: f64) -> Result<Self, StateError> {
        check_qubit_count(num_qubits)?;
        let full = (1usize << num_qubits) - 1;
        if bitmask > full {
            return Err(StateError::IndexOutOfRange { index: bitmask, num_qubits });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[bitmask] += FRAC_1_SQRT_2;
        amps[bitmask ^ full] += Complex64::from_polar(FRAC_1_SQRT_2, phase);
        Self::normalized(amps)
    }
}

impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, z) in self.amps.iter().enumerate().filter(|(_, z)| z.norm_sqr() > 1e-24) {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "({:+.6}{:+.6}i)|{}⟩", z.re, z.im, basis_string(i, self.num_qubits))?;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}
