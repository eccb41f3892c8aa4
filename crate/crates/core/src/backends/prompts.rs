//! Critic prompt templates and their instantiation.
//!
//! The four templates are reproduced exactly, including typographic
//! apostrophes and trailing whitespace. Placeholders are substituted in a
//! single left-to-right pass, so values that happen to contain placeholder
//! text are inserted literally.

use crate::env::CriticContext;
use crate::model::{ActionProposal, CriticPrompt, EnvKind};
use crate::protocol::render_action;

pub const RETAIL_SYSTEM_TEMPLATE: &str = r#"You are a policy verification Critic Agent. Your role is to evaluate and advise a customer service LLM agent to ensure its actions and responses are fully aligned with domain policies.

# Core Responsibilities

Valid Requests: If the user’s request is valid and complies with all applicable policies, confirm that the customer service agent correctly addresses the request without inventing or misrepresenting policies.

Policy Violations: If the user’s request violates policy, ensure that the customer service agent appropriately declines the request. If the agent fails to do so, advise that it must decline.

# Evaluation Criteria

Compliance Verification: Assess whether the agent’s response and intended actions (including tool calls) comply with all relevant policies.

Argument Validation: Check that the arguments/parameters provided in tool calls also meet policy requirements.

Faithful Execution: Ensure the agent fully executes valid user requests without hallucinating policies or misapplying them.

# Guiding Principle

Always base your judgment on the conversation between the user and the customer service agent, as well as the official policies in force.

The current time is <current time>."#;

pub const RETAIL_USER_TEMPLATE: &str = r#"Below is the information you need to verify whether the agent's proposed action is compliant with the policies.

The Agent's Proposed Action:
<proposed action>

Relevant Domain Policies:
<policies>

Conversation History:
<conversation history>

Your task:
Review the agent's proposed action, the action's arguments (if it contains tool calls), the relevant policy and the conversation history. Determine whether the agent’s action and its arguments (if any) fully comply with the domain policy. "#;

pub const TRAVEL_SYSTEM_TEMPLATE: &str = r#"You are a Preference Verification Critic Agent. Your role is to evaluate and advise a travel planning LLM agent to ensure its recommendations are fully aligned with the user’s expressed or implied preferences.

# Core Responsibilities

Valid Recommendations:
If the agent’s proposed recommendation is consistent with all user preferences revealed in the conversation, confirm that the agent is making a faithful and justified choice without overlooking critical information.

Missing Preference Detection:
If the user’s intent is underspecified or some critical preferences have not been elicited, identify the missing preferences and advise the agent to ask clarifying questions before making a recommendation.

Sub-optimal Recommendations:
If the agent’s proposed recommendation is compatible with the user’s expressed or implied preferences but is not the optimal option (e.g., higher cost, worse value), identify the sub-optimality and explain how the recommendation can be improved.

Redundant Recommendations:
Ensure that the agent recommends at most one option per travel aspect. If the agent attempts to re-recommend or override an existing recommendation, flag this as an error.

# Evaluation Criteria

Preference Coverage:
Assess whether the agent has sufficiently uncovered relevant user preferences associated with the current travel aspect.

Preference Faithfulness:
Verify that the agent’s recommendation faithfully reflects the user’s preferences and does not rely on unsupported assumptions or hallucinated preferences.

# Guiding Principle

Always base your judgment strictly on the explicitly provided options and the user preferences inferred from the conversation. Do not introduce new preference dimensions or external assumptions."#;

pub const TRAVEL_USER_TEMPLATE: &str = r#"Below is the information you need to verify whether the agent’s proposed recommendation is appropriate.

Travel Aspect Under Consideration:
<travel aspect>

The Agent’s Proposed Recommendation:
<recommendation>

Available Options for This Aspect:
<options>

Conversation History:
<conversation history>

Your task:
Review the agent’s proposed recommendation in light of the available options and the user’s explicitly or implicitly expressed preferences based on the conversation history.

Determine:
1. Whether the proposed recommendation is the optimal choice given the known user preferences.
2. Whether there are critical user preferences relevant to this travel aspect that have not yet been elicited."#;

pub const DEFAULT_CURRENT_TIME: &str = "2024-05-15 15:00:00 EST";

/// Appended after the user template so replies can be parsed.
pub const VERDICT_FORMAT: &str = "Start your reply with [APPROVE] if the proposed action should be executed as is. \
Otherwise start it with [REVISE] followed by concise guidance telling the agent what to change.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptOptions {
    pub current_time: String,
    pub verdict_format: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self { current_time: DEFAULT_CURRENT_TIME.to_string(), verdict_format: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no value for placeholder <{0}>")]
    MissingPlaceholder(&'static str),
}

/// Replaces each `<key>` occurrence with its value in one pass.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = values.iter().find(|(k, _)| {
            tail.len() > k.len() + 1 && tail[1..].starts_with(k) && tail[1 + k.len()..].starts_with('>')
        });
        match hit {
            Some((k, v)) => {
                out.push_str(v);
                rest = &tail[k.len() + 2..];
            }
            None => {
                out.push('<');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn finish_user(body: String, options: &PromptOptions) -> String {
    if options.verdict_format {
        format!("{body}\n\n{VERDICT_FORMAT}")
    } else {
        body
    }
}

/// System and user prompt the critic sees for `proposal`.
pub fn build_critic_prompt(
    env_kind: EnvKind,
    history: &str,
    proposal: &ActionProposal,
    context: &CriticContext,
    options: &PromptOptions,
) -> Result<CriticPrompt, PromptError> {
    let action = render_action(proposal);
    match env_kind {
        EnvKind::Retail => Ok(CriticPrompt {
            system: fill(RETAIL_SYSTEM_TEMPLATE, &[("current time", &options.current_time)]),
            user: finish_user(
                fill(
                    RETAIL_USER_TEMPLATE,
                    &[("proposed action", &action), ("policies", &context.context), ("conversation history", history)],
                ),
                options,
            ),
        }),
        EnvKind::Travel => {
            let aspect = context.aspect.as_deref().ok_or(PromptError::MissingPlaceholder("travel aspect"))?;
            Ok(CriticPrompt {
                system: TRAVEL_SYSTEM_TEMPLATE.to_string(),
                user: finish_user(
                    fill(
                        TRAVEL_USER_TEMPLATE,
                        &[
                            ("travel aspect", aspect),
                            ("recommendation", &action),
                            ("options", &context.context),
                            ("conversation history", history),
                        ],
                    ),
                    options,
                ),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn retail_ctx() -> CriticContext {
        CriticContext { context: "P5: refunds go to the original payment method".into(), aspect: None }
    }

    #[test]
    fn fill_is_single_pass() {
        let s = fill("a <x> b <y> <z>", &[("x", "<y>"), ("y", "2")]);
        assert_eq!(s, "a <y> b 2 <z>");
    }

    #[test]
    fn retail_prompt_substitutes_everything() {
        let p = ActionProposal::tool_call("cancel_order", [("order_id", "W1")]);
        let prompt =
            build_critic_prompt(EnvKind::Retail, "user: hi\n", &p, &retail_ctx(), &PromptOptions::default()).unwrap();
        assert!(prompt.system.ends_with("The current time is 2024-05-15 15:00:00 EST."));
        assert!(prompt.user.contains("```tool_call cancel_order"));
        assert!(prompt.user.contains("Relevant Domain Policies:\nP5: refunds"));
        assert!(!prompt.user.contains("<policies>"));
        assert!(prompt.user.ends_with(VERDICT_FORMAT));
    }

    #[test]
    fn current_time_is_configurable() {
        let opts = PromptOptions { current_time: "2030-01-01 09:00:00 UTC".into(), verdict_format: false };
        let p = ActionProposal::message("hello");
        let prompt = build_critic_prompt(EnvKind::Retail, "", &p, &retail_ctx(), &opts).unwrap();
        assert!(prompt.system.ends_with("The current time is 2030-01-01 09:00:00 UTC."));
        assert!(prompt.user.ends_with("domain policy. "));
    }

    #[test]
    fn travel_needs_an_aspect() {
        let p = ActionProposal::recommendation("flight", "F1");
        let ctx = CriticContext { context: "- F1: price=100".into(), aspect: None };
        assert_eq!(
            build_critic_prompt(EnvKind::Travel, "", &p, &ctx, &PromptOptions::default()),
            Err(PromptError::MissingPlaceholder("travel aspect"))
        );
    }

    #[test]
    fn empty_history_leaves_section_empty() {
        let p = ActionProposal::recommendation("flight", "F1");
        let ctx = CriticContext { context: "- F1: price=100".into(), aspect: Some("flight".into()) };
        let prompt = build_critic_prompt(EnvKind::Travel, "", &p, &ctx, &PromptOptions::default()).unwrap();
        assert!(prompt.user.contains("Conversation History:\n\n\nYour task:"));
        assert!(prompt.user.contains("Travel Aspect Under Consideration:\nflight\n"));
    }
}
