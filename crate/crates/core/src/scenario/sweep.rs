//! `stiefel-sync sweep`: cartesian expansion of list-valued config fields.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use super::config::ScenarioConfig;
use super::output::{resolve_output_dir, write_json};
use super::runner::{run_scenario_in, ExitStatus};
use crate::error::{Error, Result};

/// Fields whose values are lists in a plain config and therefore never expand.
const LIST_FIELDS: [&str; 2] = ["kappas", "topology"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMember {
    pub index: usize,
    pub overrides: Map<String, Value>,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberSummary {
    pub index: usize,
    pub overrides: Map<String, Value>,
    pub output_dir: PathBuf,
    pub exit_code: i32,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepVerdict {
    pub passed: bool,
    pub exit_code: i32,
    pub members: Vec<MemberSummary>,
}

/// Expands every top-level array (other than `kappas` and `topology`) into a
/// cartesian product over keys in alphabetical order, the last key varying
/// fastest. Each member's `output_dir` becomes `<base>/member_<index>`.
pub fn expand(text: &str) -> Result<Vec<SweepMember>> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let Value::Object(base) = root else {
        return Err(Error::Config("sweep config must be a JSON object".into()));
    };
    let axes: Vec<(String, Vec<Value>)> = base
        .iter()
        .filter(|(k, _)| !LIST_FIELDS.contains(&k.as_str()))
        .filter_map(|(k, v)| v.as_array().map(|a| (k.clone(), a.clone())))
        .collect();
    if let Some((k, _)) = axes.iter().find(|(_, vs)| vs.is_empty()) {
        return Err(Error::Config(format!("sweep axis {k} is empty")));
    }
    let total: usize = axes.iter().map(|(_, vs)| vs.len()).product();
    let mut members = Vec::with_capacity(total);
    for index in 0..total {
        let mut obj = base.clone();
        let mut overrides = Map::new();
        let mut rem = index;
        for (k, vs) in axes.iter().rev() {
            let v = vs[rem % vs.len()].clone();
            rem /= vs.len();
            overrides.insert(k.clone(), v.clone());
            obj.insert(k.clone(), v);
        }
        obj.remove("output_dir");
        let mut config: ScenarioConfig =
            serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(format!("member {index}: {e}")))?;
        let base_dir = base
            .get("output_dir")
            .and_then(Value::as_str)
            .map(PathBuf::from)
            .unwrap_or_else(|| Path::new("runs").join(format!("sweep_{}", config.scenario.name())));
        config.output_dir = Some(base_dir.join(format!("member_{index:03}")));
        members.push(SweepMember {
            index,
            overrides,
            config,
        });
    }
    Ok(members)
}

/// Validates every member first; if all are valid, runs them concurrently
/// and writes `sweep_verdict.json` next to the member directories.
pub fn run_sweep(text: &str) -> Result<SweepVerdict> {
    let members = expand(text)?;
    for m in &members {
        m.config
            .validate()
            .map_err(|e| Error::Config(format!("member {}: {e}", m.index)))?;
    }
    let summaries: Vec<MemberSummary> = members
        .par_iter()
        .map(|m| {
            let dir = resolve_output_dir(&m.config);
            let (status, verdict) = run_scenario_in(&m.config, &dir)?;
            Ok(MemberSummary {
                index: m.index,
                overrides: m.overrides.clone(),
                output_dir: dir,
                exit_code: status.code(),
                passed: verdict.passed,
                error: verdict.error,
            })
        })
        .collect::<Result<_>>()?;
    let exit_code = summaries.iter().map(|s| s.exit_code).max().unwrap_or(ExitStatus::Passed.code());
    let verdict = SweepVerdict {
        passed: summaries.iter().all(|s| s.passed),
        exit_code,
        members: summaries,
    };
    if let Some(parent) = members.first().map(|m| resolve_output_dir(&m.config)).and_then(|d| d.parent().map(Path::to_path_buf)) {
        std::fs::create_dir_all(&parent)?;
        write_json(&parent.join("sweep_verdict.json"), &verdict)?;
    }
    Ok(verdict)
}
