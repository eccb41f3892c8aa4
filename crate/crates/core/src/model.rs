//! Conversation, action and reward types shared by every other module.
//!
//! A [`Trajectory`] is the unit of reward, replay and serialization. Each
//! [`Step`] pairs the observation `o_t` the actor saw with the
//! [`InterventionRecord`] describing how `a_t` was produced. Turn indices
//! start at 1; 0 means "before the first observation".

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::score::Score;

/// Schema tag written on every trajectory log line.
pub const TRAJECTORY_SCHEMA: &str = "critic-gate/trajectory@1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("cannot append to a terminated trajectory")]
    Terminated,
    #[error("out-of-order turn index: expected {expected}, got {got}")]
    TurnOrder { expected: u32, got: u32 },
    #[error("intervention record for turn {record} paired with observation for turn {observation}")]
    TurnMismatch { observation: u32, record: u32 },
    #[error("invalid observation at turn {turn}: {reason}")]
    Observation { turn: u32, reason: &'static str },
    #[error("invalid intervention record at turn {turn}: {reason}")]
    Intervention { turn: u32, reason: &'static str },
    #[error("invalid critic verdict: {0}")]
    Verdict(&'static str),
    #[error("reward is set on a trajectory that has not terminated")]
    RewardBeforeTermination,
    #[error("invalid task spec `{task_id}`: {reason}")]
    TaskSpec { task_id: String, reason: String },
    #[error("malformed trajectory document: {0}")]
    Parse(String),
    #[error("unsupported schema tag `{0}`")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Retail,
    Travel,
}

impl EnvKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvKind::Retail => "retail",
            EnvKind::Travel => "travel",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retail" => Ok(EnvKind::Retail),
            "travel" => Ok(EnvKind::Travel),
            other => Err(format!("unknown environment `{other}` (expected retail or travel)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    User,
    Tool,
    System,
}

impl Source {
    fn label(&self) -> &'static str {
        match self {
            Source::User => "user",
            Source::Tool => "tool",
            Source::System => "system",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub turn_index: u32,
    pub source: Source,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result: Option<serde_json::Value>,
}

impl Observation {
    pub fn user(turn_index: u32, content: impl Into<String>) -> Self {
        Self { turn_index, source: Source::User, content: content.into(), tool_result: None }
    }

    pub fn system(turn_index: u32, content: impl Into<String>) -> Self {
        Self { turn_index, source: Source::System, content: content.into(), tool_result: None }
    }

    /// Tool observations carry the payload both structurally and as the
    /// compact JSON text the actor reads.
    pub fn tool(turn_index: u32, result: serde_json::Value) -> Self {
        Self {
            turn_index,
            source: Source::Tool,
            content: result.to_string(),
            tool_result: Some(result),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let turn = self.turn_index;
        match (self.source, self.tool_result.is_some()) {
            (Source::Tool, false) => {
                Err(ModelError::Observation { turn, reason: "tool observation without tool_result" })
            }
            (Source::User | Source::System, true) => {
                Err(ModelError::Observation { turn, reason: "tool_result on a non-tool observation" })
            }
            _ => Ok(()),
        }
    }
}

/// A flat tool argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl ArgValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ArgValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ArgValue::Bool(b) => serde_json::Value::Bool(*b),
            ArgValue::Int(i) => serde_json::Value::from(*i),
            ArgValue::Float(x) => serde_json::Value::from(*x),
            ArgValue::Text(s) => serde_json::Value::String(s.clone()),
        }
    }
}

impl From<&str> for ArgValue {
    fn from(s: &str) -> Self {
        ArgValue::Text(s.to_string())
    }
}

impl From<String> for ArgValue {
    fn from(s: String) -> Self {
        ArgValue::Text(s)
    }
}

impl From<i64> for ArgValue {
    fn from(i: i64) -> Self {
        ArgValue::Int(i)
    }
}

impl From<bool> for ArgValue {
    fn from(b: bool) -> Self {
        ArgValue::Bool(b)
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

pub type ToolArgs = BTreeMap<String, ArgValue>;

/// What the actor emits. The variant fixes which fields exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionProposal {
    Message {
        text: String,
    },
    ToolCall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        tool_name: String,
        tool_args: ToolArgs,
    },
    Recommendation {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        aspect: String,
        option_id: String,
    },
}

impl ActionProposal {
    pub fn message(text: impl Into<String>) -> Self {
        ActionProposal::Message { text: text.into() }
    }

    pub fn tool_call<I, K, V>(tool_name: impl Into<String>, args: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<ArgValue>,
    {
        ActionProposal::ToolCall {
            text: None,
            tool_name: tool_name.into(),
            tool_args: args.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn recommendation(aspect: impl Into<String>, option_id: impl Into<String>) -> Self {
        ActionProposal::Recommendation {
            text: None,
            aspect: aspect.into(),
            option_id: option_id.into(),
        }
    }

    pub fn with_text(self, new_text: impl Into<String>) -> Self {
        let new_text = new_text.into();
        match self {
            ActionProposal::Message { .. } => ActionProposal::Message { text: new_text },
            ActionProposal::ToolCall { tool_name, tool_args, .. } => {
                ActionProposal::ToolCall { text: Some(new_text), tool_name, tool_args }
            }
            ActionProposal::Recommendation { aspect, option_id, .. } => {
                ActionProposal::Recommendation { text: Some(new_text), aspect, option_id }
            }
        }
    }

    pub fn tool_name(&self) -> Option<&str> {
        match self {
            ActionProposal::ToolCall { tool_name, .. } => Some(tool_name),
            _ => None,
        }
    }

    pub fn is_recommendation(&self) -> bool {
        matches!(self, ActionProposal::Recommendation { .. })
    }

    /// One-line rendering used in transcripts and critic prompts.
    pub fn render_inline(&self) -> String {
        let prefixed = |text: &Option<String>, body: String| match text {
            Some(t) if !t.is_empty() => format!("{t} {body}"),
            _ => body,
        };
        match self {
            ActionProposal::Message { text } => text.clone(),
            ActionProposal::ToolCall { text, tool_name, tool_args } => {
                let args = tool_args
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                prefixed(text, format!("[tool_call] {tool_name}({args})"))
            }
            ActionProposal::Recommendation { text, aspect, option_id } => {
                prefixed(text, format!("[recommendation] {aspect} -> {option_id}"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Revise,
}

/// The critic's entire output channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticVerdict {
    pub decision: Decision,
    pub guidance: String,
    pub raw_output: String,
}

impl CriticVerdict {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self.decision {
            Decision::Approve if !self.guidance.is_empty() => {
                Err(ModelError::Verdict("approval carries guidance"))
            }
            Decision::Revise if self.guidance.trim().is_empty() => {
                Err(ModelError::Verdict("revision without guidance"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_revise(&self) -> bool {
        self.decision == Decision::Revise
    }
}

/// The system and user prompt a critic was given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticPrompt {
    pub system: String,
    pub user: String,
}

impl CriticPrompt {
    /// Single-string form used for supervision rows.
    pub fn joined(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

/// How the executed action at one turn came about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionRecord {
    pub turn_index: u32,
    pub gate: bool,
    pub proposal: ActionProposal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_prompt: Option<CriticPrompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CriticVerdict>,
    pub final_action: ActionProposal,
}

impl InterventionRecord {
    /// Gate closed: the proposal is executed as-is.
    pub fn passthrough(turn_index: u32, proposal: ActionProposal) -> Self {
        Self {
            turn_index,
            gate: false,
            final_action: proposal.clone(),
            proposal,
            critic_prompt: None,
            verdict: None,
        }
    }

    pub fn supervised(
        turn_index: u32,
        proposal: ActionProposal,
        critic_prompt: CriticPrompt,
        verdict: CriticVerdict,
        final_action: ActionProposal,
    ) -> Self {
        Self {
            turn_index,
            gate: true,
            proposal,
            critic_prompt: Some(critic_prompt),
            verdict: Some(verdict),
            final_action,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let turn = self.turn_index;
        let fail = |reason| Err(ModelError::Intervention { turn, reason });
        if self.gate {
            let Some(verdict) = &self.verdict else {
                return fail("gate open but no verdict");
            };
            if self.critic_prompt.is_none() {
                return fail("gate open but no critic prompt");
            }
            verdict.validate()
        } else {
            if self.verdict.is_some() {
                return fail("verdict present while gate closed");
            }
            if self.critic_prompt.is_some() {
                return fail("critic prompt present while gate closed");
            }
            if self.final_action != self.proposal {
                return fail("final action differs from proposal while gate closed");
            }
            Ok(())
        }
    }

    pub fn is_revised(&self) -> bool {
        self.verdict.as_ref().is_some_and(CriticVerdict::is_revise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub observation: Observation,
    pub action: InterventionRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardComponent {
    pub name: String,
    pub value: Score,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mismatches: Vec<String>,
}

/// `value` is the all-or-nothing state match for retail tasks and the mean of
/// per-aspect components for travel tasks. `breakdown` is never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardValue {
    pub value: Score,
    pub breakdown: Vec<RewardComponent>,
}

impl RewardValue {
    pub fn is_success(&self) -> bool {
        self.value == Score::ONE
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub task_id: String,
    pub seed: u64,
    pub steps: Vec<Step>,
    pub terminated: bool,
    pub reward: Option<RewardValue>,
}

impl Trajectory {
    pub fn new(task_id: impl Into<String>, seed: u64) -> Self {
        Self { task_id: task_id.into(), seed, ..Default::default() }
    }

    pub fn last_turn(&self) -> u32 {
        self.steps.last().map_or(0, |s| s.observation.turn_index)
    }

    pub fn intervention_count(&self) -> usize {
        self.steps.iter().filter(|s| s.action.gate).count()
    }

    pub fn revision_count(&self) -> usize {
        self.steps.iter().filter(|s| s.action.is_revised()).count()
    }

    /// Marks the episode finished and attaches its reward.
    pub fn finish(&mut self, reward: RewardValue) {
        self.terminated = true;
        self.reward = Some(reward);
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, step) in self.steps.iter().enumerate() {
            let expected = i as u32 + 1;
            check_step(expected, &step.observation, &step.action)?;
        }
        if self.reward.is_some() && !self.terminated {
            return Err(ModelError::RewardBeforeTermination);
        }
        Ok(())
    }
}

fn check_step(expected: u32, obs: &Observation, rec: &InterventionRecord) -> Result<(), ModelError> {
    if obs.turn_index != expected {
        return Err(ModelError::TurnOrder { expected, got: obs.turn_index });
    }
    if rec.turn_index != obs.turn_index {
        return Err(ModelError::TurnMismatch { observation: obs.turn_index, record: rec.turn_index });
    }
    obs.validate()?;
    rec.validate()
}

/// Appends `(obs, rec)` after checking ordering and record invariants.
pub fn append_step(
    mut trajectory: Trajectory,
    obs: Observation,
    rec: InterventionRecord,
) -> Result<Trajectory, ModelError> {
    if trajectory.terminated {
        return Err(ModelError::Terminated);
    }
    check_step(trajectory.last_turn() + 1, &obs, &rec)?;
    trajectory.steps.push(Step { observation: obs, action: rec });
    Ok(trajectory)
}

fn push_line(out: &mut String, label: &str, content: &str) {
    out.push_str(label);
    out.push_str(": ");
    out.push_str(&content.replace('\n', "\n  "));
    out.push('\n');
}

/// Role-labelled transcript of the executed history, one line per
/// observation and per final action.
pub fn render_history(trajectory: &Trajectory) -> String {
    render_history_with(trajectory, None)
}

/// Transcript of `h_t`: the recorded steps followed by the pending
/// observation `o_t` the actor is about to act on.
pub fn render_history_with(trajectory: &Trajectory, pending: Option<&Observation>) -> String {
    let mut out = String::new();
    for step in &trajectory.steps {
        push_line(&mut out, step.observation.source.label(), &step.observation.content);
        push_line(&mut out, "assistant", &step.action.final_action.render_inline());
    }
    if let Some(obs) = pending {
        push_line(&mut out, obs.source.label(), &obs.content);
    }
    out
}

#[derive(Serialize)]
struct TrajectoryOut<'a> {
    schema: &'static str,
    task_id: &'a str,
    seed: u64,
    steps: &'a [Step],
    terminated: bool,
    reward: &'a Option<RewardValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryIn {
    schema: String,
    task_id: String,
    seed: u64,
    steps: Vec<Step>,
    terminated: bool,
    reward: Option<RewardValue>,
}

/// One JSONL line (without the trailing newline).
pub fn to_log_line(trajectory: &Trajectory) -> String {
    let out = TrajectoryOut {
        schema: TRAJECTORY_SCHEMA,
        task_id: &trajectory.task_id,
        seed: trajectory.seed,
        steps: &trajectory.steps,
        terminated: trajectory.terminated,
        reward: &trajectory.reward,
    };
    serde_json::to_string(&out).expect("trajectory serialization is infallible")
}

pub fn from_log_line(line: &str) -> Result<Trajectory, ModelError> {
    let doc: TrajectoryIn =
        serde_json::from_str(line).map_err(|e| ModelError::Parse(e.to_string()))?;
    if doc.schema != TRAJECTORY_SCHEMA {
        return Err(ModelError::Schema(doc.schema));
    }
    let trajectory = Trajectory {
        task_id: doc.task_id,
        seed: doc.seed,
        steps: doc.steps,
        terminated: doc.terminated,
        reward: doc.reward,
    };
    trajectory.validate()?;
    Ok(trajectory)
}

/// Serialize to the log format and parse back.
pub fn roundtrip(trajectory: &Trajectory) -> Result<Trajectory, ModelError> {
    from_log_line(&to_log_line(trajectory))
}

/// Parses a JSONL trajectory log; errors carry the 1-based line number.
pub fn parse_log(text: &str) -> Result<Vec<Trajectory>, (usize, ModelError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| from_log_line(l).map_err(|e| (i + 1, e)))
        .collect()
}

/// A task as handed to the orchestrator. `success_criterion` is opaque here
/// and is validated by the owning environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub environment_id: EnvKind,
    pub instruction: String,
    pub user_script_id: String,
    pub success_criterion: serde_json::Value,
    pub horizon: u32,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.horizon < 1 {
            return Err(ModelError::TaskSpec {
                task_id: self.task_id.clone(),
                reason: "horizon must be at least 1".into(),
            });
        }
        if self.task_id.trim().is_empty() {
            return Err(ModelError::TaskSpec {
                task_id: self.task_id.clone(),
                reason: "empty task_id".into(),
            });
        }
        Ok(())
    }
}
