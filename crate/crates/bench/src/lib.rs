//! Fixed workloads shared by the benchmarks.

use std::collections::BTreeSet;

use critic_gate::backends::{Compliance, ErrorSchedule};
use critic_gate::orchestrator::{run_episode, EpisodeConfig, EpisodeResult, GatePolicy};
use critic_gate::plan::ErrorMode;
use critic_gate::suite::{generate_suite, scripted_actor, TaskFixture};
use critic_gate::{EnvKind, ModelBackend, ScriptedActor};

/// A generated suite with a scripted actor over it.
pub struct Workload {
    pub tasks: Vec<TaskFixture>,
    pub actor: ScriptedActor,
}

impl Workload {
    pub fn new(kind: EnvKind, n: usize, seed: u64, error_probability: f64) -> Self {
        let tasks = generate_suite(kind, n, seed, None).expect("generator accepts these arguments");
        let modes: BTreeSet<ErrorMode> = ErrorMode::ALL.into_iter().collect();
        let actor = scripted_actor(&tasks, &modes, ErrorSchedule::Probability(error_probability), Compliance::CompliesWithGuidance)
            .expect("generated plans are valid");
        Self { tasks, actor }
    }

    pub fn episode(&self, index: usize, seed: u64, critic: Option<&dyn ModelBackend>) -> EpisodeResult {
        let task = &self.tasks[index % self.tasks.len()];
        let mut env = task.make_env().expect("generated fixtures build");
        let cfg = EpisodeConfig::new(critic.is_some(), GatePolicy::default_for(task.kind()), task.spec().horizon, seed);
        run_episode(task.spec(), &self.actor, critic, env.as_mut(), &cfg).expect("scripted episodes do not abort")
    }
}
