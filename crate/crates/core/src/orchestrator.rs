//! One supervised episode.
//!
//! Per turn: the actor proposes, the gate decides whether the critic looks
//! at the proposal, a revise verdict buys the actor exactly one revision,
//! and the resulting final action is executed once. The loop ends when the
//! environment reports termination or the horizon runs out; either way the
//! reward is evaluated on the state reached.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::{
    build_critic_prompt, parse_verdict, BackendError, ChatMessage, ModelBackend, ModelRequest, Phase, PromptError,
    PromptOptions, RequestContext, Role,
};
use crate::env::{EnvError, Environment, ToolClass, ToolRegistry};
use crate::model::{
    append_step, render_history_with, ActionProposal, CriticVerdict, EnvKind, InterventionRecord, ModelError,
    Observation, RewardValue, Source, TaskSpec, Trajectory,
};
use crate::protocol::{parse_action, render_action};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePolicy {
    StateMutating,
    FinalRecommendation,
    Always,
    Never,
}

impl GatePolicy {
    pub const ALL: [GatePolicy; 4] =
        [GatePolicy::StateMutating, GatePolicy::FinalRecommendation, GatePolicy::Always, GatePolicy::Never];

    pub fn as_str(&self) -> &'static str {
        match self {
            GatePolicy::StateMutating => "state_mutating",
            GatePolicy::FinalRecommendation => "final_recommendation",
            GatePolicy::Always => "always",
            GatePolicy::Never => "never",
        }
    }

    /// The gate used for an environment when none is configured.
    pub fn default_for(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Retail => GatePolicy::StateMutating,
            EnvKind::Travel => GatePolicy::FinalRecommendation,
        }
    }
}

impl fmt::Display for GatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GatePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GatePolicy::ALL.into_iter().find(|g| g.as_str() == s).ok_or_else(|| format!("unknown gate policy `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GateError {
    #[error("tool `{tool}` is not registered for the {env} environment")]
    UnknownTool { tool: String, env: EnvKind },
}

/// δ for `proposal`. Tool names are checked against the registry under
/// every policy but `never`, which short-circuits.
pub fn should_intervene(proposal: &ActionProposal, env_kind: EnvKind, policy: GatePolicy) -> Result<bool, GateError> {
    if policy == GatePolicy::Never {
        return Ok(false);
    }
    let class = match proposal {
        ActionProposal::ToolCall { tool_name, .. } => Some(
            ToolRegistry::for_env(env_kind)
                .class_of(tool_name)
                .ok_or_else(|| GateError::UnknownTool { tool: tool_name.clone(), env: env_kind })?,
        ),
        _ => None,
    };
    Ok(match policy {
        GatePolicy::StateMutating => class == Some(ToolClass::StateMutating),
        GatePolicy::FinalRecommendation => proposal.is_recommendation(),
        GatePolicy::Always => true,
        GatePolicy::Never => false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub critic_enabled: bool,
    pub gate_policy: GatePolicy,
    pub horizon: u32,
    pub seed: u64,
    #[serde(skip)]
    pub prompt: PromptOptions,
}

impl EpisodeConfig {
    pub fn new(critic_enabled: bool, gate_policy: GatePolicy, horizon: u32, seed: u64) -> Self {
        Self { critic_enabled, gate_policy, horizon, seed, prompt: PromptOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Environment,
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub trajectory: Trajectory,
    pub reward: RewardValue,
    pub intervention_count: usize,
    pub revision_count: usize,
    pub termination: Termination,
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("invalid episode configuration: {0}")]
    Config(String),
    #[error("turn {turn}: {phase} backend call failed: {source}")]
    Backend { turn: u32, phase: &'static str, source: BackendError },
    #[error("turn {turn}: {source}")]
    Gate { turn: u32, source: GateError },
    #[error("turn {turn}: {source}")]
    Prompt { turn: u32, source: PromptError },
    #[error("turn {turn}: environment error: {source}")]
    Env { turn: u32, source: EnvError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How an observation appears in the actor's chat context.
fn observation_message(obs: &Observation) -> ChatMessage {
    let content = match obs.source {
        Source::User => obs.content.clone(),
        Source::Tool => format!("[tool result]\n{}", obs.content),
        Source::System => format!("[system]\n{}", obs.content),
    };
    ChatMessage::new(Role::User, content)
}

/// Reads actor text as an action. Malformed action blocks are kept as a
/// plain message so the environment (and critic) see what was said.
fn read_action(text: &str, task_id: &str, turn: u32) -> ActionProposal {
    parse_action(text).unwrap_or_else(|e| {
        log::warn!("{task_id} turn {turn}: unparseable action ({e}); treating it as a message");
        ActionProposal::message(text)
    })
}

/// What the actor sees at one turn.
pub struct ActorTurn<'a> {
    pub task_id: &'a str,
    pub seed: u64,
    pub turn: u32,
    pub system: &'a str,
    pub messages: &'a [ChatMessage],
}

/// One revision: the actor gets its proposal and the critic's guidance
/// appended to its context and answers once. Whatever it returns is final.
pub fn revise_with_feedback(
    actor: &dyn ModelBackend,
    at: &ActorTurn<'_>,
    proposal: &ActionProposal,
    verdict: &CriticVerdict,
) -> Result<ActionProposal, BackendError> {
    if !verdict.is_revise() {
        return Err(BackendError::Misuse("revision requested for an approving verdict".into()));
    }
    let mut messages = at.messages.to_vec();
    messages.push(ChatMessage::new(Role::Assistant, render_action(proposal)));
    messages.push(ChatMessage::new(
        Role::User,
        format!(
            "[critic feedback]\n{}\nRevise your proposed action accordingly and reply with the revised action only.",
            verdict.guidance
        ),
    ));
    let request = ModelRequest {
        system: at.system.to_string(),
        messages,
        phase: Phase::Revise { guidance: verdict.guidance.clone() },
        context: RequestContext { task_id: at.task_id, seed: at.seed, turn: at.turn, proposal: Some(proposal), probe: None },
    };
    Ok(read_action(&actor.complete(&request)?, at.task_id, at.turn))
}

pub fn run_episode(
    task: &TaskSpec,
    actor: &dyn ModelBackend,
    critic: Option<&dyn ModelBackend>,
    env: &mut dyn Environment,
    cfg: &EpisodeConfig,
) -> Result<EpisodeResult, EpisodeError> {
    if cfg.horizon < 1 {
        return Err(EpisodeError::Config("horizon must be at least 1".into()));
    }
    if critic.is_some() != cfg.critic_enabled {
        return Err(EpisodeError::Config("a critic backend must be supplied exactly when the critic is enabled".into()));
    }
    if env.kind() != task.environment_id {
        return Err(EpisodeError::Config(format!(
            "task {} targets {} but the environment is {}",
            task.task_id,
            task.environment_id,
            env.kind()
        )));
    }
    let kind = env.kind();
    let system = env.actor_system_prompt();
    let task_id = task.task_id.as_str();
    let mut trajectory = Trajectory::new(task_id, cfg.seed);
    let mut messages: Vec<ChatMessage> = Vec::new();
    let mut obs = env.initial_observation();
    let mut termination = Termination::Horizon;

    for turn in 1..=cfg.horizon {
        messages.push(observation_message(&obs));
        let at = ActorTurn { task_id, seed: cfg.seed, turn, system: &system, messages: &messages };
        let ctx = RequestContext { task_id, seed: cfg.seed, turn, proposal: None, probe: None };
        let request = ModelRequest { system: system.clone(), messages: messages.clone(), phase: Phase::Propose, context: ctx };
        let raw = actor.complete(&request).map_err(|source| EpisodeError::Backend { turn, phase: "propose", source })?;
        let proposal = read_action(&raw, task_id, turn);

        let record = match critic {
            Some(critic) if should_intervene(&proposal, kind, cfg.gate_policy).map_err(|source| EpisodeError::Gate { turn, source })? => {
                let history = render_history_with(&trajectory, Some(&obs));
                let prompt = build_critic_prompt(kind, &history, &proposal, &env.critic_context(&proposal), &cfg.prompt)
                    .map_err(|source| EpisodeError::Prompt { turn, source })?;
                let probe = critic.wants_ground_truth().then(|| env.probe());
                let request = ModelRequest {
                    system: prompt.system.clone(),
                    messages: vec![ChatMessage::new(Role::User, prompt.user.clone())],
                    phase: Phase::Critique,
                    context: RequestContext { task_id, seed: cfg.seed, turn, proposal: Some(&proposal), probe },
                };
                let raw = critic
                    .complete(&request)
                    .map_err(|source| EpisodeError::Backend { turn, phase: "critique", source })?;
                let verdict = parse_verdict(&raw);
                let final_action = if verdict.is_revise() {
                    revise_with_feedback(actor, &at, &proposal, &verdict)
                        .map_err(|source| EpisodeError::Backend { turn, phase: "revise", source })?
                } else {
                    proposal.clone()
                };
                InterventionRecord::supervised(turn, proposal, prompt, verdict, final_action)
            }
            _ => InterventionRecord::passthrough(turn, proposal),
        };

        let transition = env.step(&record.final_action, turn).map_err(|source| EpisodeError::Env { turn, source })?;
        messages.push(ChatMessage::new(Role::Assistant, render_action(&record.final_action)));
        trajectory = append_step(trajectory, obs, record)?;
        obs = transition.observation;
        if transition.done {
            termination = Termination::Environment;
            break;
        }
    }

    let reward = env.evaluate();
    trajectory.finish(reward.clone());
    Ok(EpisodeResult {
        intervention_count: trajectory.intervention_count(),
        revision_count: trajectory.revision_count(),
        trajectory,
        reward,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_table() {
        let cancel = ActionProposal::tool_call("cancel_order", [("order_id", "W1")]);
        let read = ActionProposal::tool_call("get_order_details", [("order_id", "W1")]);
        let msg = ActionProposal::message("hi");
        let rec = ActionProposal::recommendation("flight", "F1");
        use GatePolicy::*;
        let table = [
            (&cancel, EnvKind::Retail, StateMutating, true),
            (&read, EnvKind::Retail, StateMutating, false),
            (&msg, EnvKind::Retail, StateMutating, false),
            (&msg, EnvKind::Travel, FinalRecommendation, false),
            (&rec, EnvKind::Travel, FinalRecommendation, true),
            (&rec, EnvKind::Travel, StateMutating, false),
            (&msg, EnvKind::Retail, Always, true),
            (&cancel, EnvKind::Retail, Never, false),
        ];
        for (p, env, policy, want) in table {
            assert_eq!(should_intervene(p, env, policy).unwrap(), want, "{p:?} {policy}");
        }
    }

    #[test]
    fn unknown_tool_is_an_error() {
        let p = ActionProposal::tool_call("cancel_reservation", [("id", "R1")]);
        assert!(should_intervene(&p, EnvKind::Retail, GatePolicy::StateMutating).is_err());
        assert!(should_intervene(&p, EnvKind::Travel, GatePolicy::FinalRecommendation).is_err());
        assert_eq!(should_intervene(&p, EnvKind::Retail, GatePolicy::Never), Ok(false));
    }

    #[test]
    fn policy_names_round_trip() {
        for g in GatePolicy::ALL {
            assert_eq!(g.as_str().parse::<GatePolicy>().unwrap(), g);
        }
    }
}
