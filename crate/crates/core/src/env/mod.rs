//! Miniature benchmark environments and the interface the orchestrator
//! drives them through.

pub mod retail;
pub mod travel;

use serde::{Deserialize, Serialize};

use crate::model::{ActionProposal, EnvKind, Observation, RewardValue};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid arguments for `{tool}`: {reason}")]
    InvalidArgs { tool: String, reason: String },
    #[error("invalid fixture: {0}")]
    Fixture(String),
    #[error("unknown option `{option_id}` for aspect `{aspect}`")]
    UnknownOption { aspect: String, option_id: String },
    #[error("unknown aspect `{0}`")]
    UnknownAspect(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolClass {
    ReadOnly,
    StateMutating,
}

#[derive(Debug, Clone, Copy)]
pub struct ToolSpec {
    pub name: &'static str,
    pub class: ToolClass,
    pub args: &'static [&'static str],
    pub description: &'static str,
}

#[derive(Debug)]
pub struct ToolRegistry {
    tools: &'static [ToolSpec],
}

static RETAIL_TOOLS: ToolRegistry = ToolRegistry {
    tools: &[
        ToolSpec {
            name: "get_user_details",
            class: ToolClass::ReadOnly,
            args: &["user_id"],
            description: "Look up a customer's profile and payment methods.",
        },
        ToolSpec {
            name: "get_order_details",
            class: ToolClass::ReadOnly,
            args: &["order_id"],
            description: "Look up an order's items, status and payment method.",
        },
        ToolSpec {
            name: "get_product_details",
            class: ToolClass::ReadOnly,
            args: &["product_id"],
            description: "Look up a product and its variants.",
        },
        ToolSpec {
            name: "cancel_order",
            class: ToolClass::StateMutating,
            args: &["order_id", "reason", "refund_method"],
            description: "Cancel a pending order and refund it.",
        },
        ToolSpec {
            name: "modify_item",
            class: ToolClass::StateMutating,
            args: &["order_id", "item_id", "new_variant_id", "payment_method"],
            description: "Exchange one item of a pending order for another variant.",
        },
    ],
};

static TRAVEL_TOOLS: ToolRegistry = ToolRegistry {
    tools: &[ToolSpec {
        name: "list_options",
        class: ToolClass::ReadOnly,
        args: &["aspect"],
        description: "List the bookable options for a travel aspect.",
    }],
};

impl ToolRegistry {
    pub fn for_env(kind: EnvKind) -> &'static ToolRegistry {
        match kind {
            EnvKind::Retail => &RETAIL_TOOLS,
            EnvKind::Travel => &TRAVEL_TOOLS,
        }
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn class_of(&self, name: &str) -> Option<ToolClass> {
        self.get(name).map(|t| t.class)
    }

    pub fn tools(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.iter()
    }

    /// Human-readable tool list for actor system prompts.
    pub fn describe(&self) -> String {
        self.tools
            .iter()
            .map(|t| format!("- {}({}): {}", t.name, t.args.join(", "), t.description))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Result of executing one final action.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub done: bool,
}

/// Domain text the critic is shown next to a proposal: the policy set for
/// retail, the option table and aspect for travel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticContext {
    pub context: String,
    pub aspect: Option<String>,
}

/// Why a proposal would leave the reward-1 path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    /// Breaks a written policy or a user preference.
    Violation,
    /// Feasible but not the best available choice.
    Suboptimal,
    /// A second recommendation for an aspect that already has one.
    Redundant,
    /// Compliant, but does not accomplish what the task requires.
    Mismatch,
    /// Ends the conversation before the task is complete.
    Premature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assessment {
    pub on_path: bool,
    pub finding: Option<Finding>,
    pub detail: String,
}

impl Assessment {
    pub fn ok() -> Self {
        Self { on_path: true, finding: None, detail: String::new() }
    }

    pub fn off(finding: Finding, detail: impl Into<String>) -> Self {
        Self { on_path: false, finding: Some(finding), detail: detail.into() }
    }
}

/// Ground-truth access for the test-only oracle critic. Only backends that
/// ask for it through `ModelBackend::wants_ground_truth` ever see it.
pub trait GroundTruthProbe {
    /// Whether executing `proposal` from the current state keeps a reward-1
    /// outcome reachable.
    fn assess(&self, proposal: &ActionProposal) -> Assessment;
}

pub trait Environment: Send {
    fn kind(&self) -> EnvKind;

    fn registry(&self) -> &'static ToolRegistry {
        ToolRegistry::for_env(self.kind())
    }

    /// `o_1`.
    fn initial_observation(&self) -> Observation;

    fn actor_system_prompt(&self) -> String;

    fn critic_context(&self, proposal: &ActionProposal) -> CriticContext;

    /// Executes the final action of `turn` and returns `o_{turn+1}`.
    fn step(&mut self, action: &ActionProposal, turn: u32) -> Result<Transition, EnvError>;

    fn evaluate(&self) -> RewardValue;

    fn probe(&self) -> &dyn GroundTruthProbe;
}

/// Checks that a tool call names exactly the registered arguments.
pub(crate) fn check_args(
    spec: &ToolSpec,
    args: &crate::model::ToolArgs,
) -> Result<(), EnvError> {
    for required in spec.args {
        match args.get(*required) {
            None => {
                return Err(EnvError::InvalidArgs {
                    tool: spec.name.into(),
                    reason: format!("missing `{required}`"),
                })
            }
            Some(v) if v.as_text().is_none() => {
                return Err(EnvError::InvalidArgs {
                    tool: spec.name.into(),
                    reason: format!("`{required}` must be text"),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = args.keys().find(|k| !spec.args.contains(&k.as_str())) {
        return Err(EnvError::InvalidArgs {
            tool: spec.name.into(),
            reason: format!("unexpected argument `{extra}`"),
        });
    }
    Ok(())
}
