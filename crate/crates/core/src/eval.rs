//! Metrics over runs and actor-only vs supervised comparisons.
//!
//! All values are exact rationals. Summaries are built from trajectories
//! alone, so a log file is enough to reproduce them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{EnvKind, Trajectory};
use crate::score::Score;

pub const SUMMARY_SCHEMA: &str = "critic-gate/summary@1";
pub const REPORT_SCHEMA: &str = "critic-gate/uplift@1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no values to aggregate")]
    Empty,
    #[error("value {0} is not allowed here")]
    OutOfDomain(Score),
    #[error("trajectory {task_id}/{seed} has no reward")]
    Unscored { task_id: String, seed: u64 },
    #[error("duplicate run {task_id}/{seed}")]
    DuplicateRun { task_id: String, seed: u64 },
    #[error("summaries are not comparable: {0}")]
    Mismatch(String),
}

fn mean_of<'a, I: IntoIterator<Item = &'a Vec<Score>>>(rows: I, allowed: &[Score]) -> Result<Score, EvalError> {
    let mut values = Vec::new();
    for v in rows.into_iter().flatten() {
        if !allowed.contains(v) {
            return Err(EvalError::OutOfDomain(*v));
        }
        values.push(*v);
    }
    Score::mean(values).ok_or(EvalError::Empty)
}

/// Mean binary success over all (task, run) pairs.
pub fn pass_at_1(rewards: &[Vec<Score>]) -> Result<Score, EvalError> {
    mean_of(rewards, &[Score::ZERO, Score::ONE])
}

/// Mean aspect component over all (aspect, run) pairs.
pub fn travel_score(components: &[Vec<Score>]) -> Result<Score, EvalError> {
    mean_of(components, &[Score::ZERO, Score::PARTIAL, Score::ONE])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InterventionStats {
    pub episodes: usize,
    pub interventions: usize,
    pub revisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub schema: String,
    pub method: String,
    pub environment: EnvKind,
    pub metric: String,
    /// Task id to per-run rewards, runs in seed order.
    pub per_task: BTreeMap<String, Vec<Score>>,
    pub aggregate: Score,
    pub interventions: InterventionStats,
}

pub fn metric_name(kind: EnvKind) -> &'static str {
    match kind {
        EnvKind::Retail => "pass@1",
        EnvKind::Travel => "travel_score",
    }
}

/// Summary of a set of finished trajectories.
pub fn summarize(method: &str, environment: EnvKind, trajectories: &[Trajectory]) -> Result<RunSummary, EvalError> {
    let mut runs: BTreeMap<&str, BTreeMap<u64, &Trajectory>> = BTreeMap::new();
    let mut stats = InterventionStats::default();
    for t in trajectories {
        if t.reward.is_none() {
            return Err(EvalError::Unscored { task_id: t.task_id.clone(), seed: t.seed });
        }
        if runs.entry(&t.task_id).or_default().insert(t.seed, t).is_some() {
            return Err(EvalError::DuplicateRun { task_id: t.task_id.clone(), seed: t.seed });
        }
        stats.episodes += 1;
        stats.interventions += t.intervention_count();
        stats.revisions += t.revision_count();
    }
    let reward = |t: &Trajectory| t.reward.as_ref().expect("checked above").clone();
    let per_task: BTreeMap<String, Vec<Score>> = runs
        .iter()
        .map(|(id, by_seed)| (id.to_string(), by_seed.values().map(|t| reward(t).value).collect()))
        .collect();
    let aggregate = match environment {
        EnvKind::Retail => pass_at_1(&per_task.values().cloned().collect::<Vec<_>>())?,
        EnvKind::Travel => {
            let components: Vec<Vec<Score>> = runs
                .values()
                .flat_map(|by_seed| by_seed.values())
                .map(|t| reward(t).breakdown.iter().map(|c| c.value).collect())
                .collect();
            travel_score(&components)?
        }
    };
    Ok(RunSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        method: method.to_string(),
        environment,
        metric: metric_name(environment).to_string(),
        per_task,
        aggregate,
        interventions: stats,
    })
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method: {}", self.method);
        let _ = writeln!(out, "environment: {}", self.environment);
        let _ = writeln!(out, "tasks: {}  episodes: {}", self.per_task.len(), self.interventions.episodes);
        let _ = writeln!(out, "{}: {} ({:.4})", self.metric, self.aggregate, self.aggregate.to_f64());
        let _ = writeln!(
            out,
            "interventions: {}  revisions: {}",
            self.interventions.interventions, self.interventions.revisions
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDelta {
    pub task_id: String,
    pub baseline: Score,
    pub treated: Score,
    pub delta: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodColumn {
    pub method: String,
    pub value: Score,
    pub interventions: InterventionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftReport {
    pub schema: String,
    pub environment: EnvKind,
    pub metric: String,
    pub baseline: MethodColumn,
    pub treated: MethodColumn,
    pub delta: Score,
    pub per_task: Vec<TaskDelta>,
}

/// Side-by-side comparison of two summaries over the same tasks and runs.
pub fn uplift_report(baseline: &RunSummary, treated: &RunSummary) -> Result<UpliftReport, EvalError> {
    if baseline.environment != treated.environment {
        return Err(EvalError::Mismatch("different environments".into()));
    }
    let ids = |s: &RunSummary| s.per_task.keys().cloned().collect::<Vec<_>>();
    if ids(baseline) != ids(treated) {
        return Err(EvalError::Mismatch("different task sets".into()));
    }
    let mut per_task = Vec::new();
    for (id, base) in &baseline.per_task {
        let treat = &treated.per_task[id];
        if base.len() != treat.len() {
            return Err(EvalError::Mismatch(format!("task {id} has {} vs {} runs", base.len(), treat.len())));
        }
        let b = Score::mean(base.iter().copied()).ok_or(EvalError::Empty)?;
        let t = Score::mean(treat.iter().copied()).ok_or(EvalError::Empty)?;
        per_task.push(TaskDelta { task_id: id.clone(), baseline: b, treated: t, delta: t - b });
    }
    let column = |s: &RunSummary| MethodColumn { method: s.method.clone(), value: s.aggregate, interventions: s.interventions };
    Ok(UpliftReport {
        schema: REPORT_SCHEMA.to_string(),
        environment: baseline.environment,
        metric: baseline.metric.clone(),
        baseline: column(baseline),
        treated: column(treated),
        delta: treated.aggregate - baseline.aggregate,
        per_task,
    })
}

impl UpliftReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = self.per_task.iter().map(|r| r.task_id.len()).max().unwrap_or(0).max("interventions".len());
        let (b, t) = (&self.baseline, &self.treated);
        let _ = writeln!(out, "{}  {} vs {} ({})", self.metric, b.method, t.method, self.environment);
        let _ = writeln!(out, "{:<w$}  {:>10}  {:>10}  {:>10}", "task", "baseline", "treated", "delta");
        for r in &self.per_task {
            let _ = writeln!(out, "{:<w$}  {:>10}  {:>10}  {:>10}", r.task_id, r.baseline.to_string(), r.treated.to_string(), r.delta.to_string());
        }
        let _ = writeln!(out, "{:<w$}  {:>10}  {:>10}  {:>10}", "overall", b.value.to_string(), t.value.to_string(), self.delta.to_string());
        let _ = writeln!(
            out,
            "{:<w$}  {:>10}  {:>10}",
            "interventions", b.interventions.interventions, t.interventions.interventions
        );
        let _ = writeln!(out, "{:<w$}  {:>10}  {:>10}", "revisions", b.interventions.revisions, t.interventions.revisions);
        out
    }
}
