//! Text and CSV rendering of result documents.
//!
//! The text form is a sequence of `[section]` blocks with keys in a fixed
//! order. Its `[scenario]` block is a complete scenario file: cutting it
//! out and running it again reproduces every number in the document.

use std::fmt::Write;

use spinparity::protocols::Signature;
use spinparity::{ExactStats, RunStats};

use crate::command::{ResultBody, ResultDocument, Table1Column};
use crate::scenario::{render, OutputFormat};

const PROB_DECIMALS: usize = 9;
const FIDELITY_DECIMALS: usize = 12;

fn prob(x: f64) -> String {
    format!("{:.*}", PROB_DECIMALS, x)
}

fn fidelity(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |f| format!("{:.*}", FIDELITY_DECIMALS, f))
}

fn bits((d1, d2): (bool, bool)) -> String {
    format!("{}{}", u8::from(d1), u8::from(d2))
}

pub fn signature_string((t, t2): Signature) -> String {
    format!("{}/{}", bits(t), bits(t2))
}

pub fn render_document(doc: &ResultDocument) -> String {
    match doc.config.format {
        OutputFormat::Text => render_text(doc),
        OutputFormat::Csv => render_csv(doc),
    }
}

pub fn render_text(doc: &ResultDocument) -> String {
    let mut out = String::new();
    let mode = match doc.body {
        ResultBody::Sampled(_) => "sampled",
        ResultBody::Exact(_) => "exact",
        ResultBody::Table1(_) if doc.config.is_exact() => "exact",
        ResultBody::Table1(_) => "sampled",
    };
    let _ = writeln!(out, "artifact_version={}", doc.artifact_version);
    let _ = writeln!(out, "seed={}", doc.config.seed);
    let _ = writeln!(out, "mode={mode}");
    out.push_str("\n[scenario]\n");
    out.push_str(&render(&doc.config));
    out.push_str("\n[result]\n");
    match &doc.body {
        ResultBody::Sampled(stats) => sampled_text(&mut out, stats),
        ResultBody::Exact(stats) => exact_text(&mut out, stats),
        ResultBody::Table1(columns) => table1_text(&mut out, columns, doc.config.trials),
    }
    out
}

pub fn render_csv(doc: &ResultDocument) -> String {
    let mut out = String::new();
    match &doc.body {
        ResultBody::Sampled(stats) => sampled_outcomes(&mut out, stats),
        ResultBody::Exact(stats) => exact_outcomes(&mut out, stats),
        ResultBody::Table1(columns) => table1_inputs(&mut out, columns),
    }
    out
}

fn sampled_text(out: &mut String, s: &RunStats) {
    let _ = writeln!(out, "n_trials={}", s.n_trials);
    let _ = writeln!(out, "success_count={}", s.success.count);
    let _ = writeln!(out, "success_frequency={}", prob(s.success.frequency));
    let _ = writeln!(out, "success_ci99_low={}", prob(s.success.ci_low));
    let _ = writeln!(out, "success_ci99_high={}", prob(s.success.ci_high));
    let _ = writeln!(out, "mean_parity_checks={}", prob(s.mean_parity_checks));
    let _ = writeln!(out, "parity_snapshots={}", s.parity_snapshots);
    let _ = writeln!(out, "anticorrelation_violations={}", s.anticorrelation_violations);
    let _ = writeln!(out, "min_fidelity={}", fidelity(s.min_fidelity));
    out.push_str("\n[outcomes]\n");
    sampled_outcomes(out, s);
    out.push_str("\n[failures]\ncategory,count\n");
    for (k, c) in &s.failures {
        let _ = writeln!(out, "{k},{c}");
    }
    out.push_str("\n[rounds]\nround,successes,reached,conditional_success\n");
    for &round in s.success_rounds.keys() {
        if let Some((reached, p)) = s.conditional_round_success(round) {
            let _ = writeln!(out, "{round},{},{reached},{}", s.success_rounds[&round], prob(p));
        }
    }
}

fn sampled_outcomes(out: &mut String, s: &RunStats) {
    out.push_str("outcome,count,frequency,ci99_low,ci99_high\n");
    for (k, o) in &s.outcomes {
        let _ = writeln!(out, "{k},{},{},{},{}", o.count, prob(o.frequency), prob(o.ci_low), prob(o.ci_high));
    }
}

fn exact_text(out: &mut String, s: &ExactStats) {
    let _ = writeln!(out, "paths={}", s.paths);
    let _ = writeln!(out, "total_probability={}", prob(s.total_probability));
    let _ = writeln!(out, "success_probability={}", prob(s.success_probability));
    let _ = writeln!(out, "expected_parity_checks={}", prob(s.expected_parity_checks));
    let _ = writeln!(out, "parity_snapshots={}", s.parity_snapshots);
    let _ = writeln!(out, "anticorrelation_violations={}", s.anticorrelation_violations);
    let _ = writeln!(out, "min_fidelity={}", fidelity(s.min_fidelity));
    out.push_str("\n[outcomes]\n");
    exact_outcomes(out, s);
    out.push_str("\n[failures]\ncategory,probability\n");
    for (k, p) in &s.failures {
        let _ = writeln!(out, "{k},{}", prob(*p));
    }
    out.push_str("\n[rounds]\nround,probability\n");
    for (r, p) in &s.success_rounds {
        let _ = writeln!(out, "{r},{}", prob(*p));
    }
}

fn exact_outcomes(out: &mut String, s: &ExactStats) {
    out.push_str("outcome,probability\n");
    for (k, p) in &s.outcomes {
        let _ = writeln!(out, "{k},{}", prob(*p));
    }
}

/// The cell for one column: its signature when every trial agreed.
fn cell(column: &Table1Column) -> Option<Signature> {
    match column.signatures.keys().collect::<Vec<_>>().as_slice() {
        [one] => Some(**one),
        _ => None,
    }
}

fn table1_text(out: &mut String, columns: &[Table1Column], trials: u64) {
    let _ = writeln!(out, "trials_per_input={trials}");
    let violations: u64 = columns.iter().map(|c| c.anticorrelation_violations).sum();
    let _ = writeln!(out, "anticorrelation_violations={violations}");
    out.push_str("\n[table1]\n");
    let mut rows = vec![vec!["detectors".to_string()], vec!["D(t)".to_string()], vec!["D(2t)".to_string()]];
    for c in columns {
        rows[0].push(c.label.name().to_string());
        let (t, t2) = cell(c).map_or(("mixed".into(), "mixed".into()), |(t, t2)| (bits(t), bits(t2)));
        rows[1].push(t);
        rows[2].push(t2);
    }
    let widths: Vec<usize> = (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
    for row in &rows {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out.push_str("\n[inputs]\n");
    table1_inputs(out, columns);
}

fn table1_inputs(out: &mut String, columns: &[Table1Column]) {
    out.push_str("input,signature,identified,min_fidelity,anticorrelation_violations\n");
    for c in columns {
        let sig = cell(c).map_or_else(|| "mixed".to_string(), signature_string);
        let _ = writeln!(
            out,
            "{},{sig},{},{},{}",
            c.label.name(),
            prob(c.identified),
            fidelity(Some(c.min_fidelity)),
            c.anticorrelation_violations
        );
    }
}

/// Extracts the `[scenario]` block of a text document.
pub fn scenario_block(text: &str) -> Option<String> {
    let start = text.find("[scenario]\n")? + "[scenario]\n".len();
    let rest = &text[start..];
    let end = rest.find("\n[").unwrap_or(rest.len());
    Some(rest[..end].to_string())
}
