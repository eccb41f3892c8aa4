//! Task suites: fixture documents for either environment, stored one per
//! line, plus the glue that turns a fixture into a live environment and a
//! scripted actor program.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{Compliance, ErrorSchedule, ScriptError, ScriptedActor, ScriptedActorProgram};
use crate::env::retail::{RetailEnv, RetailTask};
use crate::env::travel::{TravelEnv, TravelTask};
use crate::env::{retail, travel, EnvError, Environment};
use crate::model::{EnvKind, TaskSpec};
use crate::plan::{ActorPlan, ErrorMode};

pub const TASK_SCHEMA: &str = "critic-gate/task@1";

#[derive(Debug, Clone, PartialEq)]
pub enum TaskFixture {
    Retail(RetailTask),
    Travel(TravelTask),
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("cannot read suite {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("suite line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("suite line {line}: {source}")]
    Fixture { line: usize, source: EnvError },
    #[error("duplicate task id `{0}`")]
    DuplicateTask(String),
}

#[derive(Serialize)]
struct LineOut<'a, T: Serialize> {
    schema: &'static str,
    environment: EnvKind,
    task: &'a T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineIn {
    schema: String,
    environment: EnvKind,
    task: Value,
}

impl TaskFixture {
    pub fn spec(&self) -> &TaskSpec {
        match self {
            TaskFixture::Retail(t) => &t.spec,
            TaskFixture::Travel(t) => &t.spec,
        }
    }

    pub fn task_id(&self) -> &str {
        &self.spec().task_id
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            TaskFixture::Retail(_) => EnvKind::Retail,
            TaskFixture::Travel(_) => EnvKind::Travel,
        }
    }

    pub fn actor_plan(&self) -> &ActorPlan {
        match self {
            TaskFixture::Retail(t) => &t.actor_plan,
            TaskFixture::Travel(t) => &t.actor_plan,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            TaskFixture::Retail(t) => t.validate(),
            TaskFixture::Travel(t) => t.validate(),
        }
    }

    /// Fresh environment instance for one episode.
    pub fn make_env(&self) -> Result<Box<dyn Environment>, EnvError> {
        Ok(match self {
            TaskFixture::Retail(t) => Box::new(RetailEnv::new(t.clone())?),
            TaskFixture::Travel(t) => Box::new(TravelEnv::new(t.clone())?),
        })
    }

    pub fn program(
        &self,
        error_modes: &BTreeSet<ErrorMode>,
        error_schedule: ErrorSchedule,
        compliance: Compliance,
    ) -> ScriptedActorProgram {
        ScriptedActorProgram {
            task_id: self.task_id().to_string(),
            turns: self.actor_plan().clone(),
            error_modes: error_modes.clone(),
            error_schedule,
            compliance,
        }
    }

    pub fn to_line(&self) -> String {
        let out = match self {
            TaskFixture::Retail(t) => serde_json::to_string(&LineOut { schema: TASK_SCHEMA, environment: EnvKind::Retail, task: t }),
            TaskFixture::Travel(t) => serde_json::to_string(&LineOut { schema: TASK_SCHEMA, environment: EnvKind::Travel, task: t }),
        };
        out.expect("fixture serialization is infallible")
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        let doc: LineIn = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if doc.schema != TASK_SCHEMA {
            return Err(format!("unsupported schema `{}`", doc.schema));
        }
        match doc.environment {
            EnvKind::Retail => serde_json::from_value(doc.task).map(TaskFixture::Retail),
            EnvKind::Travel => serde_json::from_value(doc.task).map(TaskFixture::Travel),
        }
        .map_err(|e| e.to_string())
    }
}

pub fn parse_suite(text: &str) -> Result<Vec<TaskFixture>, SuiteError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line_no = i + 1;
        let fixture = TaskFixture::from_line(line).map_err(|reason| SuiteError::Line { line: line_no, reason })?;
        fixture.validate().map_err(|source| SuiteError::Fixture { line: line_no, source })?;
        if !seen.insert(fixture.task_id().to_string()) {
            return Err(SuiteError::DuplicateTask(fixture.task_id().to_string()));
        }
        out.push(fixture);
    }
    Ok(out)
}

pub fn load_suite(path: &Path) -> Result<Vec<TaskFixture>, SuiteError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| SuiteError::Io { path: path.display().to_string(), source })?;
    parse_suite(&text)
}

pub fn render_suite(tasks: &[TaskFixture]) -> String {
    tasks.iter().map(|t| t.to_line() + "\n").collect()
}

/// Tasks keyed by id.
pub fn index(tasks: &[TaskFixture]) -> BTreeMap<&str, &TaskFixture> {
    tasks.iter().map(|t| (t.task_id(), t)).collect()
}

/// `n` seeded fixtures. `difficulty` (preferences per aspect) is travel-only.
pub fn generate_suite(kind: EnvKind, n: usize, seed: u64, difficulty: Option<usize>) -> Result<Vec<TaskFixture>, EnvError> {
    match kind {
        EnvKind::Retail => {
            if let Some(d) = difficulty {
                return Err(EnvError::Fixture(format!("difficulty {d} only applies to travel suites")));
            }
            Ok(retail::generator::generate(n, seed).into_iter().map(TaskFixture::Retail).collect())
        }
        EnvKind::Travel => Ok(travel::generator::generate(n, seed, difficulty)?.into_iter().map(TaskFixture::Travel).collect()),
    }
}

/// Post-generation checks: each fixture is solvable by its own plan.
pub fn check_fixture(task: &TaskFixture) -> Result<(), EnvError> {
    match task {
        TaskFixture::Retail(t) => retail::generator::check_fixture(t),
        TaskFixture::Travel(t) => travel::generator::check_fixture(t),
    }
}

/// A scripted actor covering every task of a suite.
pub fn scripted_actor(
    tasks: &[TaskFixture],
    error_modes: &BTreeSet<ErrorMode>,
    error_schedule: ErrorSchedule,
    compliance: Compliance,
) -> Result<ScriptedActor, ScriptError> {
    ScriptedActor::new(tasks.iter().map(|t| t.program(error_modes, error_schedule.clone(), compliance)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> Vec<TaskFixture> {
        let mut v: Vec<TaskFixture> = retail::generator::generate(3, 1).into_iter().map(TaskFixture::Retail).collect();
        v.extend(travel::generator::generate(2, 1, None).unwrap().into_iter().map(TaskFixture::Travel));
        v
    }

    #[test]
    fn suite_round_trips() {
        let tasks = mixed();
        let text = render_suite(&tasks);
        assert_eq!(text.lines().count(), 5);
        assert_eq!(parse_suite(&text).unwrap(), tasks);
    }

    #[test]
    fn bad_lines_are_located() {
        let tasks = mixed();
        let mut text = render_suite(&tasks[..2]);
        text.push_str("{\"schema\":\"critic-gate/task@1\"}\n");
        match parse_suite(&text) {
            Err(SuiteError::Line { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dup = render_suite(&[tasks[0].clone(), tasks[0].clone()]);
        assert!(matches!(parse_suite(&dup), Err(SuiteError::DuplicateTask(_))));
    }
}
