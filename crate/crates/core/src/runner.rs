//! Many episodes at once.
//!
//! Episodes run on a bounded rayon pool and results come back sorted by
//! `(task_id, seed)`, so callers see the same order whatever the schedule.

use rayon::prelude::*;

use crate::backends::{ModelBackend, PromptOptions};
use crate::orchestrator::{run_episode, EpisodeConfig, EpisodeResult, GatePolicy};
use crate::suite::TaskFixture;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    /// `None` picks the environment's default gate.
    pub gate_policy: Option<GatePolicy>,
    pub concurrency: usize,
    pub prompt: PromptOptions,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { gate_policy: None, concurrency: 4, prompt: PromptOptions::default() }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub task_id: String,
    pub seed: u64,
    /// Aborted episodes keep their error text.
    pub result: Result<EpisodeResult, String>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        matches!(&self.result, Ok(r) if r.reward.is_success())
    }
}

pub fn run_one(
    task: &TaskFixture,
    seed: u64,
    actor: &dyn ModelBackend,
    critic: Option<&dyn ModelBackend>,
    settings: &RunSettings,
) -> RunOutcome {
    let gate = settings.gate_policy.unwrap_or_else(|| GatePolicy::default_for(task.kind()));
    let mut cfg = EpisodeConfig::new(critic.is_some(), gate, task.spec().horizon, seed);
    cfg.prompt = settings.prompt.clone();
    let result = task
        .make_env()
        .map_err(|e| e.to_string())
        .and_then(|mut env| run_episode(task.spec(), actor, critic, env.as_mut(), &cfg).map_err(|e| e.to_string()));
    if let Err(e) = &result {
        log::warn!("episode {}/{seed} aborted: {e}", task.task_id());
    }
    RunOutcome { task_id: task.task_id().to_string(), seed, result }
}

/// Every task under every seed.
pub fn run_all(
    tasks: &[&TaskFixture],
    seeds: &[u64],
    actor: &dyn ModelBackend,
    critic: Option<&dyn ModelBackend>,
    settings: &RunSettings,
) -> Vec<RunOutcome> {
    let jobs: Vec<(&TaskFixture, u64)> = tasks.iter().flat_map(|t| seeds.iter().map(move |s| (*t, *s))).collect();
    let run = || jobs.par_iter().map(|(t, s)| run_one(t, *s, actor, critic, settings)).collect::<Vec<_>>();
    let mut out = match rayon::ThreadPoolBuilder::new().num_threads(settings.concurrency.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            log::warn!("cannot build a worker pool ({e}); running sequentially");
            jobs.iter().map(|(t, s)| run_one(t, *s, actor, critic, settings)).collect()
        }
    };
    out.sort_by(|a, b| (&a.task_id, a.seed).cmp(&(&b.task_id, b.seed)));
    out
}
