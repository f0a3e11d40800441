//! Flat `key=value` scenario files.
//!
//! Tokens are separated by whitespace or newlines and `#` starts a comment
//! running to the end of the line. A file such as
//!
//! ```text
//! protocol=ghz_n
//! n=6 strategy=pair_merge m=1
//! trials=0          # exact mode
//! ```
//!
//! parses into a [`ScenarioConfig`], and [`render`] writes one back in a
//! canonical order that parses to the same config.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use spinparity::montecarlo::{Overrides, Scenario};
use spinparity::outcome::SwapPolicy;
use spinparity::protocols::{GrowthPlan, GrowthStrategy, MergeOptions};
use spinparity::state::{parse_basis, BellCoefficients};
use spinparity::{BellLabel, DeviceLayout, ParityOutcome, ProtocolSpec, PureState};

pub const DEFAULT_TRIALS: u64 = 10_000;
/// Squared-norm deviation above which amplitudes are rescaled.
const RESCALE_THRESHOLD: f64 = 1e-12;
/// Rescaling beyond this is reported as a warning.
const WARN_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {}{message}", key.as_ref().map(|k| format!("key `{k}`: ")).unwrap_or_default())]
pub struct ParseError {
    pub line: usize,
    pub key: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    BellQnd,
    BellGen,
    Ghz3,
    GhzN,
    Table1,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::BellQnd => "bell_qnd",
            ProtocolKind::BellGen => "bell_gen",
            ProtocolKind::Ghz3 => "ghz3",
            ProtocolKind::GhzN => "ghz_n",
            ProtocolKind::Table1 => "table1",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::BellQnd, Self::BellGen, Self::Ghz3, Self::GhzN, Self::Table1].into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    Bell(BellLabel),
    /// Computational basis state, as an index.
    Basis(usize),
    /// Coefficients of Φ+, Φ−, Ψ+, Ψ−, already normalized.
    Amplitudes([Complex64; 4]),
}

impl InputSpec {
    pub fn state(&self) -> PureState {
        match self {
            InputSpec::Bell(label) => label.state(),
            InputSpec::Basis(index) => PureState::basis(2, *index).expect("two-qubit index"),
            InputSpec::Amplitudes([a, b, c, d]) => {
                BellCoefficients { a: *a, b: *b, c: *c, d: *d }.to_state().expect("normalized on load")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutSpec {
    Fig1,
    Fig2,
    Custom { dots: Vec<String>, coupled: Vec<(String, String)>, detectors: Vec<String> },
}

impl LayoutSpec {
    pub fn build(&self) -> Result<DeviceLayout, String> {
        match self {
            LayoutSpec::Fig1 => Ok(DeviceLayout::fig1()),
            LayoutSpec::Fig2 => Ok(DeviceLayout::fig2()),
            LayoutSpec::Custom { dots, coupled, detectors } => {
                let dots: Vec<&str> = dots.iter().map(String::as_str).collect();
                let coupled: Vec<(&str, &str)> = coupled.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
                let detectors: Vec<&str> = detectors.iter().map(String::as_str).collect();
                DeviceLayout::new(&dots, &coupled, &detectors).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub protocol: ProtocolKind,
    pub input: Option<InputSpec>,
    pub n: Option<usize>,
    pub strategy: Option<GrowthStrategy>,
    pub max_rounds: u32,
    /// Zero selects exact enumeration.
    pub trials: u64,
    pub seed: u64,
    pub force_swap: SwapPolicy,
    pub force_parity: Vec<ParityOutcome>,
    pub salvage: bool,
    pub layout: Option<LayoutSpec>,
    pub format: OutputFormat,
}

impl ScenarioConfig {
    pub fn new(protocol: ProtocolKind) -> Self {
        ScenarioConfig {
            protocol,
            input: None,
            n: None,
            strategy: None,
            max_rounds: 1,
            trials: DEFAULT_TRIALS,
            seed: 0,
            force_swap: SwapPolicy::Random,
            force_parity: Vec::new(),
            salvage: false,
            layout: None,
            format: OutputFormat::Text,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.trials == 0
    }

    /// The simulator scenario for this config. Not meaningful for `table1`,
    /// which runs one Bell scenario per label.
    pub fn to_scenario(&self) -> Result<Scenario, String> {
        let protocol = match self.protocol {
            ProtocolKind::Table1 => return Err("table1 runs one scenario per Bell label".into()),
            ProtocolKind::BellQnd => ProtocolSpec::BellQnd { input: self.input_state()? },
            ProtocolKind::BellGen => ProtocolSpec::BellGenerate { input: self.input_state()? },
            ProtocolKind::Ghz3 => ProtocolSpec::Ghz3 { max_rounds: self.max_rounds },
            ProtocolKind::GhzN => ProtocolSpec::GhzN {
                plan: GrowthPlan {
                    strategy: self.strategy.ok_or("missing strategy")?,
                    n: self.n.ok_or("missing n")?,
                    max_rounds: self.max_rounds,
                },
                options: MergeOptions { salvage: self.salvage },
            },
        };
        let mut scenario = Scenario::new(protocol).with_overrides(self.overrides());
        if let Some(layout) = &self.layout {
            scenario = scenario.with_layout(layout.build()?);
        }
        Ok(scenario)
    }

    pub fn overrides(&self) -> Overrides {
        Overrides { swap_policy: self.force_swap, parities: self.force_parity.clone() }
    }

    fn input_state(&self) -> Result<PureState, String> {
        self.input.as_ref().map(InputSpec::state).ok_or_else(|| "missing input".to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedScenario {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
}

struct Token<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

fn tokenize(text: &str) -> Result<Vec<Token<'_>>, ParseError> {
    let mut tokens = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        for word in body.split_whitespace() {
            let Some((key, value)) = word.split_once('=') else {
                return Err(ParseError { line, key: None, message: format!("expected key=value, found {word:?}") });
            };
            if key.is_empty() {
                return Err(ParseError { line, key: None, message: format!("empty key in {word:?}") });
            }
            tokens.push(Token { line, key, value });
        }
    }
    Ok(tokens)
}

/// Parses `1`, `-0.5`, `2i`, `0.3-0.4i`, `1e-3+2e-3i`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let parse = |t: &str| t.parse::<f64>().ok().filter(|x| x.is_finite());
    let Some(body) = s.strip_suffix('i') else {
        return parse(s).map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split =
        (1..bytes.len()).rev().find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| match t {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        _ => parse(t),
    };
    match split {
        Some(k) => Some(Complex64::new(parse(&body[..k])?, imag(&body[k..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im.is_sign_negative() {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn bell_key(label: BellLabel) -> &'static str {
    match label {
        BellLabel::PhiPlus => "phi_plus",
        BellLabel::PhiMinus => "phi_minus",
        BellLabel::PsiPlus => "psi_plus",
        BellLabel::PsiMinus => "psi_minus",
    }
}

fn parity_key(p: ParityOutcome) -> &'static str {
    match p {
        ParityOutcome::Parallel => "parallel",
        ParityOutcome::Antiparallel => "antiparallel",
    }
}

pub fn swap_policy_key(p: SwapPolicy) -> &'static str {
    match p {
        SwapPolicy::On => "on",
        SwapPolicy::Off => "off",
        SwapPolicy::Random => "random",
    }
}

pub fn parse_swap_policy(s: &str) -> Option<SwapPolicy> {
    match s {
        "on" => Some(SwapPolicy::On),
        "off" => Some(SwapPolicy::Off),
        "random" => Some(SwapPolicy::Random),
        _ => None,
    }
}

fn format_basis(index: usize) -> String {
    (0..2).map(|q| if index >> q & 1 == 0 { 'u' } else { 'd' }).collect()
}

const KEYS: &[&str] = &[
    "protocol",
    "input",
    "amplitudes",
    "n",
    "strategy",
    "m",
    "trials",
    "seed",
    "force_swap",
    "force_parity",
    "salvage",
    "layout",
    "dots",
    "coupled",
    "detectors",
    "format",
];

/// Which keys each protocol accepts beyond the common ones.
fn allowed(protocol: ProtocolKind, key: &str) -> bool {
    let bell = matches!(protocol, ProtocolKind::BellQnd | ProtocolKind::BellGen);
    match key {
        "input" | "amplitudes" => bell,
        "layout" | "dots" | "coupled" | "detectors" => bell || protocol == ProtocolKind::Ghz3,
        "n" | "strategy" | "salvage" => protocol == ProtocolKind::GhzN,
        "m" => matches!(protocol, ProtocolKind::Ghz3 | ProtocolKind::GhzN),
        "force_parity" => protocol != ProtocolKind::Table1,
        _ => true,
    }
}

pub fn parse_scenario(text: &str) -> Result<ParsedScenario, ParseError> {
    let tokens = tokenize(text)?;
    let mut seen = BTreeSet::new();
    for t in &tokens {
        if !KEYS.contains(&t.key) {
            return Err(err(t, "unknown key"));
        }
        if !seen.insert(t.key) {
            return Err(err(t, "given more than once"));
        }
    }
    let find = |key: &str| tokens.iter().find(|t| t.key == key);
    let Some(proto) = find("protocol") else {
        let line = tokens.first().map_or(1, |t| t.line);
        return Err(ParseError { line, key: Some("protocol".into()), message: "missing required field".into() });
    };
    let protocol = ProtocolKind::parse(proto.value).ok_or_else(|| {
        err(proto, &format!("unknown protocol {:?}; expected bell_qnd, bell_gen, ghz3, ghz_n or table1", proto.value))
    })?;
    let mut config = ScenarioConfig::new(protocol);
    let mut warnings = Vec::new();
    let mut custom = (None, None, None);

    for t in &tokens {
        if !allowed(protocol, t.key) {
            return Err(err(t, &format!("not used by protocol {}", protocol.name())));
        }
        match t.key {
            "protocol" => {}
            "input" => {
                if find("amplitudes").is_some() {
                    return Err(err(t, "conflicts with `amplitudes`"));
                }
                let label = BellLabel::ALL.into_iter().find(|l| bell_key(*l) == t.value);
                config.input = Some(match label {
                    Some(l) => InputSpec::Bell(l),
                    None => match parse_basis(t.value) {
                        Ok((index, 2)) if t.value.chars().all(|c| c == 'u' || c == 'd') => InputSpec::Basis(index),
                        _ => return Err(err(t, "expected phi_plus, phi_minus, psi_plus, psi_minus or a ket like ud")),
                    },
                });
            }
            "amplitudes" => {
                let (amps, warning) = parse_amplitudes(t)?;
                warnings.extend(warning);
                config.input = Some(InputSpec::Amplitudes(amps));
            }
            "n" => {
                let n: usize = number(t)?;
                if n < 2 {
                    return Err(err(t, &format!("must be at least 2, got {n}")));
                }
                if n > spinparity::state::MAX_QUBITS {
                    return Err(err(t, &format!("must be at most {}, got {n}", spinparity::state::MAX_QUBITS)));
                }
                config.n = Some(n);
            }
            "strategy" => {
                config.strategy = Some(match t.value {
                    "sequential" => GrowthStrategy::Sequential,
                    "pair_merge" => GrowthStrategy::PairMerge,
                    _ => return Err(err(t, "expected sequential or pair_merge")),
                })
            }
            "m" => {
                config.max_rounds = number(t)?;
                if config.max_rounds == 0 {
                    return Err(err(t, "must be at least 1"));
                }
            }
            "trials" => config.trials = number(t)?,
            "seed" => config.seed = number(t)?,
            "force_swap" => {
                config.force_swap = parse_swap_policy(t.value).ok_or_else(|| err(t, "expected on, off or random"))?
            }
            "force_parity" => {
                config.force_parity = t
                    .value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| match s {
                        "parallel" | "p" => Ok(ParityOutcome::Parallel),
                        "antiparallel" | "a" => Ok(ParityOutcome::Antiparallel),
                        _ => Err(err(t, &format!("{s:?} is not parallel or antiparallel"))),
                    })
                    .collect::<Result<_, _>>()?
            }
            "salvage" => {
                config.salvage = match t.value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(err(t, "expected true or false")),
                }
            }
            "layout" => {
                config.layout = Some(match t.value {
                    "fig1" => LayoutSpec::Fig1,
                    "fig2" => LayoutSpec::Fig2,
                    "custom" => LayoutSpec::Custom { dots: vec![], coupled: vec![], detectors: vec![] },
                    _ => return Err(err(t, "expected fig1, fig2 or custom")),
                })
            }
            "dots" => custom.0 = Some(list(t)),
            "coupled" => {
                let pairs = list(t)
                    .into_iter()
                    .map(|p| match p.split_once('-') {
                        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
                        _ => Err(err(t, &format!("{p:?} is not a pair like A-B"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                custom.1 = Some(pairs);
            }
            "detectors" => custom.2 = Some(list(t)),
            "format" => {
                config.format = match t.value {
                    "text" => OutputFormat::Text,
                    "csv" => OutputFormat::Csv,
                    _ => return Err(err(t, "expected text or csv")),
                }
            }
            _ => unreachable!("key list checked above"),
        }
    }

    let last_line = tokens.last().map_or(1, |t| t.line);
    let missing =
        |key: &str| ParseError { line: last_line, key: Some(key.into()), message: "missing required field".into() };
    match protocol {
        ProtocolKind::BellQnd | ProtocolKind::BellGen if config.input.is_none() => return Err(missing("input")),
        ProtocolKind::GhzN if config.n.is_none() => return Err(missing("n")),
        ProtocolKind::GhzN if config.strategy.is_none() => return Err(missing("strategy")),
        _ => {}
    }

    if let Some(LayoutSpec::Custom { .. }) = config.layout {
        match custom {
            (Some(dots), Some(coupled), Some(detectors)) => {
                config.layout = Some(LayoutSpec::Custom { dots, coupled, detectors })
            }
            (None, _, _) => return Err(missing("dots")),
            (_, None, _) => return Err(missing("coupled")),
            (_, _, None) => return Err(missing("detectors")),
        }
    } else if let Some(t) = find("dots").or(find("coupled")).or(find("detectors")) {
        return Err(err(t, "requires layout=custom"));
    }

    if protocol != ProtocolKind::Table1 {
        let layout_line = find("layout").map(|t| t.line);
        let at_layout = |message: String| ParseError {
            line: layout_line.unwrap_or(last_line),
            key: layout_line.map(|_| "layout".to_string()),
            message,
        };
        let scenario = config.to_scenario().map_err(at_layout)?;
        scenario.validate().map_err(|e| at_layout(e.to_string()))?;
    }
    Ok(ParsedScenario { config, warnings })
}

fn err(t: &Token<'_>, message: &str) -> ParseError {
    ParseError { line: t.line, key: Some(t.key.to_string()), message: message.to_string() }
}

fn number<T: std::str::FromStr>(t: &Token<'_>) -> Result<T, ParseError> {
    t.value.parse().map_err(|_| err(t, &format!("{:?} is not a non-negative integer", t.value)))
}

fn list(t: &Token<'_>) -> Vec<String> {
    t.value.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn parse_amplitudes(t: &Token<'_>) -> Result<([Complex64; 4], Option<String>), ParseError> {
    let parts: Vec<&str> = t.value.split(',').collect();
    if parts.len() != 4 {
        return Err(err(t, &format!("expected 4 comma-separated values a,b,c,d, got {}", parts.len())));
    }
    let mut amps = [Complex64::new(0.0, 0.0); 4];
    for (slot, part) in amps.iter_mut().zip(&parts) {
        *slot = parse_complex(part).ok_or_else(|| err(t, &format!("{part:?} is not a complex number")))?;
    }
    let norm_sqr: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    if !norm_sqr.is_finite() || norm_sqr == 0.0 {
        return Err(err(t, "cannot be normalized"));
    }
    let mut warning = None;
    if (norm_sqr - 1.0).abs() > RESCALE_THRESHOLD {
        let scale = norm_sqr.sqrt().recip();
        amps = amps.map(|z| z * scale);
        if (norm_sqr - 1.0).abs() > WARN_THRESHOLD {
            warning = Some(format!("line {}: key `amplitudes`: norm² was {norm_sqr}, renormalized", t.line));
        }
    }
    Ok((amps, warning))
}

/// Canonical text form; [`parse_scenario`] maps it back to `config`.
pub fn render(config: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    put("protocol", config.protocol.name().into());
    match &config.input {
        Some(InputSpec::Bell(l)) => put("input", bell_key(*l).into()),
        Some(InputSpec::Basis(i)) => put("input", format_basis(*i)),
        Some(InputSpec::Amplitudes(a)) => put("amplitudes", a.map(format_complex).join(",")),
        None => {}
    }
    if let Some(n) = config.n {
        put("n", n.to_string());
    }
    if let Some(s) = config.strategy {
        put(
            "strategy",
            match s {
                GrowthStrategy::Sequential => "sequential",
                GrowthStrategy::PairMerge => "pair_merge",
            }
            .into(),
        );
    }
    if matches!(config.protocol, ProtocolKind::Ghz3 | ProtocolKind::GhzN) {
        put("m", config.max_rounds.to_string());
    }
    if config.protocol == ProtocolKind::GhzN {
        put("salvage", config.salvage.to_string());
    }
    match &config.layout {
        Some(LayoutSpec::Fig1) => put("layout", "fig1".into()),
        Some(LayoutSpec::Fig2) => put("layout", "fig2".into()),
        Some(LayoutSpec::Custom { dots, coupled, detectors }) => {
            put("layout", "custom".into());
            put("dots", dots.join(","));
            put("coupled", coupled.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(","));
            put("detectors", detectors.join(","));
        }
        None => {}
    }
    put("trials", config.trials.to_string());
    put("seed", config.seed.to_string());
    put("force_swap", swap_policy_key(config.force_swap).into());
    if !config.force_parity.is_empty() {
        put("force_parity", config.force_parity.iter().map(|p| parity_key(*p)).collect::<Vec<_>>().join(","));
    }
    put(
        "format",
        match config.format {
            OutputFormat::Text => "text",
            OutputFormat::Csv => "csv",
        }
        .into(),
    );
    out
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}
