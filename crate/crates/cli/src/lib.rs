//! Scenario files, command dispatch and result documents for the
//! `spinparity` binary.

pub mod command;
pub mod document;
pub mod scenario;

pub use command::{run_command, CommandError, ResultBody, ResultDocument, ARTIFACT_VERSION};
pub use document::{render_document, render_text};
pub use scenario::{parse_scenario, render, ParseError, ParsedScenario, ScenarioConfig};
