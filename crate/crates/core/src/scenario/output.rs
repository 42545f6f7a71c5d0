use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ScenarioConfig;
use crate::diagnostics::DiagnosticsRecord;
use crate::error::Result;

pub const OUTPUT_ROOT_ENV: &str = "STIEFEL_SYNC_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">")]
    Above,
}

impl Comparison {
    pub fn holds(self, measured: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => measured <= threshold,
            Comparison::AtLeast => measured >= threshold,
            Comparison::Below => measured < threshold,
            Comparison::Above => measured > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    /// The property being checked, in words.
    pub property: String,
    pub measured: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Assertion {
    pub fn new(name: &str, property: &str, measured: f64, comparison: Comparison, threshold: f64) -> Self {
        Assertion {
            name: name.to_owned(),
            property: property.to_owned(),
            measured,
            threshold,
            comparison,
            passed: comparison.holds(measured, threshold),
        }
    }
}

/// A reported number without a pass/fail attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub observations: Vec<Observation>,
    pub repairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Verdict {
    pub fn new(config: &ScenarioConfig) -> Self {
        Verdict {
            scenario: config.scenario.name().to_owned(),
            config: config.clone(),
            passed: true,
            assertions: Vec::new(),
            observations: Vec::new(),
            repairs: 0,
            error: None,
        }
    }

    pub fn check(&mut self, a: Assertion) {
        self.passed &= a.passed;
        self.assertions.push(a);
    }

    pub fn observe(&mut self, name: &str, value: f64) {
        self.observations.push(Observation {
            name: name.to_owned(),
            value,
        });
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn observation(&self, name: &str) -> Option<f64> {
        self.observations.iter().find(|o| o.name == name).map(|o| o.value)
    }
}

/// Where a config's artifacts go: `output_dir` (default `runs/<scenario>`),
/// re-rooted under `$STIEFEL_SYNC_OUTPUT_ROOT` when that is set.
pub fn resolve_output_dir(config: &ScenarioConfig) -> PathBuf {
    let dir = config
        .output_dir
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(config.scenario.name()));
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => {
            if dir.is_absolute() {
                Path::new(&root).join(dir.file_name().unwrap_or(dir.as_os_str()))
            } else {
                Path::new(&root).join(dir)
            }
        }
        _ => dir,
    }
}

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{}", DiagnosticsRecord::csv_header())?;
    for r in records {
        writeln!(f, "{}", r.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}
