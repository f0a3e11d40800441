//! Dispatch from a scenario config to the simulator.

use std::collections::BTreeMap;

use thiserror::Error;

use spinparity::montecarlo::{exact_stats, for_each_branch, run_trial, run_trials, MonteCarloError, TrialOutcome};
use spinparity::protocols::{BellQndRecord, Signature};
use spinparity::{BellLabel, ExactStats, ProtocolSpec, RunStats, Scenario, Seed};

use crate::scenario::{ProtocolKind, ScenarioConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Branch points allowed on one path in exact mode.
pub const EXACT_MAX_DEPTH: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Run(#[from] MonteCarloError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Column {
    pub label: BellLabel,
    /// Share of trials (or probability mass) per observed signature.
    pub signatures: BTreeMap<Signature, f64>,
    pub identified: f64,
    pub min_fidelity: f64,
    pub anticorrelation_violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResultBody {
    Sampled(RunStats),
    Exact(ExactStats),
    /// Columns in Ψ+, Ψ−, Φ+, Φ− order.
    Table1(Vec<Table1Column>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultDocument {
    pub artifact_version: &'static str,
    pub config: ScenarioConfig,
    pub body: ResultBody,
}

pub const TABLE1_ORDER: [BellLabel; 4] =
    [BellLabel::PsiPlus, BellLabel::PsiMinus, BellLabel::PhiPlus, BellLabel::PhiMinus];

pub fn run_command(config: &ScenarioConfig) -> Result<ResultDocument, CommandError> {
    let body = if config.protocol == ProtocolKind::Table1 {
        ResultBody::Table1(TABLE1_ORDER.iter().map(|&l| table1_column(config, l)).collect::<Result<_, _>>()?)
    } else {
        let scenario = config.to_scenario().map_err(CommandError::Scenario)?;
        if config.is_exact() {
            ResultBody::Exact(exact_stats(&scenario, EXACT_MAX_DEPTH)?)
        } else {
            ResultBody::Sampled(run_trials(&scenario, config.trials, Seed(config.seed))?)
        }
    };
    Ok(ResultDocument { artifact_version: ARTIFACT_VERSION, config: config.clone(), body })
}

fn table1_column(config: &ScenarioConfig, label: BellLabel) -> Result<Table1Column, CommandError> {
    let mut scenario = Scenario::new(ProtocolSpec::BellQnd { input: label.state() }).with_overrides(config.overrides());
    if let Some(layout) = &config.layout {
        scenario = scenario.with_layout(layout.build().map_err(CommandError::Scenario)?);
    }
    scenario.validate()?;
    let mut column = Table1Column {
        label,
        signatures: BTreeMap::new(),
        identified: 0.0,
        min_fidelity: 1.0,
        anticorrelation_violations: 0,
    };
    let mut add = |rec: &BellQndRecord, weight: f64| {
        *column.signatures.entry(rec.signature).or_default() += weight;
        if rec.label == label {
            column.identified += weight;
        }
        let fidelity = rec.final_state.fidelity_up_to_phase(&rec.initial).unwrap_or(0.0);
        column.min_fidelity = column.min_fidelity.min(fidelity);
        column.anticorrelation_violations += rec.log.iter().filter(|s| !s.is_anticorrelated()).count() as u64;
    };
    if config.is_exact() {
        for_each_branch(&scenario, EXACT_MAX_DEPTH, |path| {
            if let TrialOutcome::Bell(rec) = &path.outcome {
                add(rec, path.probability);
            }
        })?;
    } else {
        // integer counts first, then one division
        for i in 0..config.trials {
            if let TrialOutcome::Bell(rec) = run_trial(&scenario, Seed(config.seed), i)?.outcome {
                add(&rec, 1.0);
            }
        }
        let n = config.trials as f64;
        column.identified /= n;
        column.signatures.values_mut().for_each(|w| *w /= n);
    }
    Ok(column)
}
