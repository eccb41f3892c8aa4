//! Critic training data from supervised runs.
//!
//! 1. Hard tasks: run the actor alone `K` times per task (seeds
//!    `seed_base + 1 ..= seed_base + K`); a task is hard when at least `psi`
//!    of those runs fail.
//! 2. Run actor and critic `K` times on every hard task.
//! 3. Keep trajectories that succeeded and contain at least one revise
//!    verdict. Strict mode additionally requires every run of the task to
//!    succeed.
//! 4. Every critic evaluation in a kept trajectory becomes one sample:
//!    the exact prompt the critic saw and its raw reply.
//! 5. Write samples as JSONL plus a statistics sidecar.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{parse_verdict, BackendError, ChatMessage, ModelBackend, ModelRequest, Phase, RequestContext, Role};
use crate::model::{Decision, EnvKind, ModelError, TaskSpec, Trajectory};
use crate::runner::{run_all, RunOutcome, RunSettings};
use crate::suite::TaskFixture;

pub const SAMPLE_SCHEMA: &str = "critic-gate/sample@1";
pub const STATS_SCHEMA: &str = "critic-gate/dataset-stats@1";

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error("trajectory {task_id}/{seed} does not qualify for extraction")]
    NotRetained { task_id: String, seed: u64 },
    #[error("trajectory {task_id}/{seed} turn {turn}: {reason}")]
    Corrupt { task_id: String, seed: u64, turn: u32, reason: String },
    #[error("duplicate sample for {task_id}/{seed} turn {turn}")]
    Duplicate { task_id: String, seed: u64, turn: u32 },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("dataset line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("task specification extraction failed: {0}")]
    Extraction(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub k: u32,
    pub psi: u32,
    pub seed_base: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { k: 5, psi: 2, seed_base: 0 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.k < 1 {
            return Err(DatagenError::Config("K must be at least 1".into()));
        }
        if self.psi < 1 || self.psi > self.k {
            return Err(DatagenError::Config(format!("psi must lie in 1..={} (got {})", self.k, self.psi)));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (1..=u64::from(self.k)).map(|k| self.seed_base + k).collect()
    }
}

pub fn is_hard(failures: u32, psi: u32) -> bool {
    failures >= psi
}

#[derive(Debug)]
pub struct HardTaskFilter {
    pub hard: BTreeSet<String>,
    pub failures: BTreeMap<String, u32>,
    /// Actor-only runs, sorted by `(task_id, seed)`.
    pub runs: Vec<RunOutcome>,
}

pub fn filter_hard_tasks(
    tasks: &[TaskFixture],
    actor: &dyn ModelBackend,
    cfg: &FilterConfig,
    settings: &RunSettings,
) -> Result<HardTaskFilter, DatagenError> {
    cfg.validate()?;
    let refs: Vec<&TaskFixture> = tasks.iter().collect();
    let runs = run_all(&refs, &cfg.seeds(), actor, None, settings);
    let mut failures: BTreeMap<String, u32> = tasks.iter().map(|t| (t.task_id().to_string(), 0)).collect();
    for r in &runs {
        if !r.succeeded() {
            *failures.get_mut(&r.task_id).expect("run of a known task") += 1;
        }
    }
    let hard = failures.iter().filter(|(_, f)| is_hard(**f, cfg.psi)).map(|(id, _)| id.clone()).collect();
    Ok(HardTaskFilter { hard, failures, runs })
}

/// `K` supervised runs per hard task.
pub fn collect_ac_trajectories(
    tasks: &[TaskFixture],
    hard: &BTreeSet<String>,
    actor: &dyn ModelBackend,
    critic: &dyn ModelBackend,
    cfg: &FilterConfig,
    settings: &RunSettings,
) -> Vec<RunOutcome> {
    let chosen: Vec<&TaskFixture> = tasks.iter().filter(|t| hard.contains(t.task_id())).collect();
    run_all(&chosen, &cfg.seeds(), actor, Some(critic), settings)
}

pub fn has_revision(t: &Trajectory) -> bool {
    t.steps.iter().any(|s| s.action.is_revised())
}

/// Successful and at least one revise verdict.
pub fn retain(t: &Trajectory) -> bool {
    t.reward.as_ref().is_some_and(|r| r.is_success()) && has_revision(t)
}

/// Strict guard: every run of the task succeeded.
pub fn all_runs_succeeded(runs: &[&Trajectory]) -> bool {
    !runs.is_empty() && runs.iter().all(|t| t.reward.as_ref().is_some_and(|r| r.is_success()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn of(decision: Decision) -> Self {
        match decision {
            Decision::Revise => Label::Positive,
            Decision::Approve => Label::Negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisionSample {
    pub schema: String,
    pub prompt: String,
    pub completion: String,
    pub label: Label,
    pub task_id: String,
    pub turn_index: u32,
    pub seed: u64,
    pub domain: EnvKind,
}

/// One sample per critic evaluation of a retained trajectory.
pub fn extract_samples(t: &Trajectory, domain: EnvKind) -> Result<Vec<SupervisionSample>, DatagenError> {
    if !retain(t) {
        return Err(DatagenError::NotRetained { task_id: t.task_id.clone(), seed: t.seed });
    }
    let corrupt = |turn: u32, reason: &str| DatagenError::Corrupt {
        task_id: t.task_id.clone(),
        seed: t.seed,
        turn,
        reason: reason.to_string(),
    };
    t.steps
        .iter()
        .filter(|s| s.action.gate)
        .map(|s| {
            let rec = &s.action;
            let prompt = rec.critic_prompt.as_ref().ok_or_else(|| corrupt(rec.turn_index, "no critic prompt"))?;
            let verdict = rec.verdict.as_ref().ok_or_else(|| corrupt(rec.turn_index, "no verdict"))?;
            Ok(SupervisionSample {
                schema: SAMPLE_SCHEMA.to_string(),
                prompt: prompt.joined(),
                completion: verdict.raw_output.clone(),
                label: Label::of(verdict.decision),
                task_id: t.task_id.clone(),
                turn_index: rec.turn_index,
                seed: t.seed,
                domain,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DomainStats {
    pub n_trajectories: usize,
    pub n_samples: usize,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl DomainStats {
    fn add(&mut self, label: Label) {
        self.n_samples += 1;
        match label {
            Label::Positive => self.n_positive += 1,
            Label::Negative => self.n_negative += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetStats {
    pub schema: String,
    pub n_trajectories: usize,
    pub n_samples: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub per_domain: BTreeMap<EnvKind, DomainStats>,
}

/// Statistics of a sample list; rejects repeated `(task_id, seed, turn)`.
pub fn compute_stats(samples: &[SupervisionSample]) -> Result<DatasetStats, DatagenError> {
    let mut keys = BTreeSet::new();
    let mut trajectories: BTreeMap<EnvKind, BTreeSet<(&str, u64)>> = BTreeMap::new();
    let mut total = DomainStats::default();
    let mut per_domain: BTreeMap<EnvKind, DomainStats> = BTreeMap::new();
    for s in samples {
        if !keys.insert((s.task_id.as_str(), s.seed, s.turn_index)) {
            return Err(DatagenError::Duplicate { task_id: s.task_id.clone(), seed: s.seed, turn: s.turn_index });
        }
        trajectories.entry(s.domain).or_default().insert((&s.task_id, s.seed));
        total.add(s.label);
        per_domain.entry(s.domain).or_default().add(s.label);
    }
    for (domain, set) in &trajectories {
        per_domain.get_mut(domain).expect("same keys").n_trajectories = set.len();
    }
    Ok(DatasetStats {
        schema: STATS_SCHEMA.to_string(),
        n_trajectories: trajectories.values().map(BTreeSet::len).sum(),
        n_samples: total.n_samples,
        n_positive: total.n_positive,
        n_negative: total.n_negative,
        per_domain,
    })
}

pub fn stats_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".stats.json");
    dataset.with_file_name(name)
}

pub fn render_dataset(samples: &[SupervisionSample]) -> String {
    samples
        .iter()
        .map(|s| serde_json::to_string(s).expect("sample serialization is infallible") + "\n")
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), DatagenError> {
    let io = |source| DatagenError::Io { path: path.display().to_string(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.flush().map_err(io)
}

/// Writes the dataset and its `.stats.json` sidecar.
pub fn emit_dataset(samples: &[SupervisionSample], path: &Path) -> Result<DatasetStats, DatagenError> {
    let stats = compute_stats(samples)?;
    write_file(path, &render_dataset(samples))?;
    let sidecar = serde_json::to_string_pretty(&stats).expect("stats serialization is infallible") + "\n";
    write_file(&stats_path(path), &sidecar)?;
    Ok(stats)
}

pub fn parse_dataset(text: &str) -> Result<Vec<SupervisionSample>, DatagenError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let s: SupervisionSample =
                serde_json::from_str(l).map_err(|e| DatagenError::Parse { line: i + 1, reason: e.to_string() })?;
            if s.schema != SAMPLE_SCHEMA {
                return Err(DatagenError::Parse { line: i + 1, reason: format!("unsupported schema `{}`", s.schema) });
            }
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub filter: FilterConfig,
    pub strict: bool,
    pub run: RunSettings,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub filter: HardTaskFilter,
    /// Supervised runs on hard tasks, sorted by `(task_id, seed)`.
    pub collected: Vec<RunOutcome>,
    pub retained: Vec<Trajectory>,
    pub samples: Vec<SupervisionSample>,
}

pub fn run_pipeline(
    tasks: &[TaskFixture],
    actor: &dyn ModelBackend,
    critic: &dyn ModelBackend,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, DatagenError> {
    cfg.filter.validate()?;
    let filter = filter_hard_tasks(tasks, actor, &cfg.filter, &cfg.run)?;
    log::info!("{} of {} tasks are hard", filter.hard.len(), tasks.len());
    let collected = collect_ac_trajectories(tasks, &filter.hard, actor, critic, &cfg.filter, &cfg.run);

    let mut by_task: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
    for r in &collected {
        if let Ok(res) = &r.result {
            by_task.entry(&r.task_id).or_default().push(&res.trajectory);
        }
    }
    let kinds: BTreeMap<&str, EnvKind> = tasks.iter().map(|t| (t.task_id(), t.kind())).collect();
    let mut retained = Vec::new();
    let mut samples = Vec::new();
    for (task_id, runs) in &by_task {
        let complete = runs.len() == cfg.filter.k as usize;
        if cfg.strict && !(complete && all_runs_succeeded(runs)) {
            continue;
        }
        for t in runs.iter().filter(|t| retain(t)) {
            samples.extend(extract_samples(t, kinds[task_id])?);
            retained.push((*t).clone());
        }
    }
    Ok(PipelineOutput { filter, collected, retained, samples })
}

pub const EXTRACTION_SYSTEM_PROMPT: &str = "You read a conversation between a user and a service agent and \
describe the task the user wanted done. Reply with one JSON object and nothing else, with these keys: \
task_id (string), environment_id (\"retail\" or \"travel\"), instruction (string, the user's goal in one \
paragraph), user_script_id (string), success_criterion (object, the end state that counts as success), \
horizon (integer, at least 1).";

/// The outermost `{...}` span of `text`, tolerating code fences and prose.
fn json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Asks `model` for the task behind `raw_dialogue`.
pub fn infer_task_spec(raw_dialogue: &str, model: &dyn ModelBackend) -> Result<TaskSpec, DatagenError> {
    let request = ModelRequest {
        system: EXTRACTION_SYSTEM_PROMPT.to_string(),
        messages: vec![ChatMessage::new(Role::User, raw_dialogue)],
        phase: Phase::Extract,
        context: RequestContext { task_id: "", seed: 0, turn: 0, proposal: None, probe: None },
    };
    let reply = model.complete(&request)?;
    let doc = json_object(&reply).ok_or_else(|| DatagenError::Extraction("reply contains no JSON object".into()))?;
    let spec: TaskSpec = serde_json::from_str(doc).map_err(|e| DatagenError::Extraction(e.to_string()))?;
    spec.validate().map_err(|e: ModelError| DatagenError::Extraction(e.to_string()))?;
    Ok(spec)
}

/// Decision recorded in a sample's completion.
pub fn completion_decision(sample: &SupervisionSample) -> Decision {
    parse_verdict(&sample.completion).decision
}
