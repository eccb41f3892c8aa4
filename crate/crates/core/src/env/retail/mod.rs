//! Policy-constrained customer-service environment.
//!
//! Orders, users and a product catalog live in memory. Read-only tools
//! report on them; `cancel_order` and `modify_item` mutate them. Domain
//! failures (unknown ids, orders in the wrong status) come back as in-band
//! `{"error": ...}` tool results. Written policies are checked separately by
//! [`check_policies`]; tools do not enforce all of them.
//!
//! Success is a canonical-path comparison: the ground truth names the state
//! fields a task constrains and the values they must hold at the end.

pub mod generator;
pub mod policy;
pub mod state;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use policy::{check_policies, standard_policies, Condition, Operand, PathTemplate, PolicyRule};
pub use state::{LineItem, Order, OrderStatus, Product, RetailState, User, Variant};

use super::{
    check_args, Assessment, CriticContext, EnvError, Environment, Finding, GroundTruthProbe,
    ToolClass, ToolRegistry, Transition,
};
use crate::model::{
    ActionProposal, EnvKind, Observation, RewardComponent, RewardValue, TaskSpec, ToolArgs,
};
use crate::plan::ActorPlan;
use crate::score::Score;

/// Expected values for the constrained canonical paths.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub constraints: BTreeMap<String, serde_json::Value>,
}

impl GroundTruth {
    pub fn from_criterion(value: &serde_json::Value) -> Result<Self, EnvError> {
        serde_json::from_value(value.clone())
            .map_err(|e| EnvError::Fixture(format!("retail success criterion: {e}")))
    }

    /// Every constrained path must exist in `state`.
    pub fn validate_against(&self, state: &RetailState) -> Result<(), EnvError> {
        let view = state.view();
        match self.constraints.keys().find(|p| state::lookup(&view, p).is_none()) {
            Some(p) => Err(EnvError::Fixture(format!("ground-truth path `{p}` does not resolve"))),
            None => Ok(()),
        }
    }
}

/// Scripted customer: an opening request, then one reply per agent message.
/// A message that arrives after the replies run out ends the conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserScript {
    pub opening: String,
    pub replies: Vec<String>,
}

pub const USER_STOP: &str = "###STOP###";

/// One task document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetailTask {
    pub spec: TaskSpec,
    pub initial_state: RetailState,
    pub policies: Vec<PolicyRule>,
    pub user_script: UserScript,
    pub actor_plan: ActorPlan,
}

impl RetailTask {
    pub fn ground_truth(&self) -> Result<GroundTruth, EnvError> {
        GroundTruth::from_criterion(&self.spec.success_criterion)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.spec.validate().map_err(|e| EnvError::Fixture(e.to_string()))?;
        if self.spec.environment_id != EnvKind::Retail {
            return Err(EnvError::Fixture(format!("task {} is not a retail task", self.spec.task_id)));
        }
        self.initial_state.validate()?;
        policy::validate_policy_set(&self.policies)?;
        self.ground_truth()?.validate_against(&self.initial_state)
    }
}

/// Executes one tool call against `state`. Read-only tools return `state`
/// unchanged.
pub fn execute_tool(
    state: &RetailState,
    tool_name: &str,
    args: &ToolArgs,
    turn: u32,
) -> Result<(RetailState, Observation), EnvError> {
    let registry = ToolRegistry::for_env(EnvKind::Retail);
    let spec = registry
        .get(tool_name)
        .ok_or_else(|| EnvError::UnknownTool(tool_name.to_string()))?;
    check_args(spec, args)?;
    let text = |k: &str| args[k].as_text().expect("checked by check_args").to_string();
    let in_band = |msg: String| json!({ "error": msg });

    let mut next = state.clone();
    let result = match tool_name {
        "get_user_details" => match state.users.get(&text("user_id")) {
            Some(u) => serde_json::to_value(u).expect("serializable"),
            None => in_band("user not found".into()),
        },
        "get_order_details" => match state.orders.get(&text("order_id")) {
            Some(o) => serde_json::to_value(o).expect("serializable"),
            None => in_band("order not found".into()),
        },
        "get_product_details" => match state.catalog.get(&text("product_id")) {
            Some(p) => serde_json::to_value(p).expect("serializable"),
            None => in_band("product not found".into()),
        },
        "cancel_order" => match next.orders.get_mut(&text("order_id")) {
            None => in_band("order not found".into()),
            Some(order) if order.status != OrderStatus::Pending => {
                in_band(format!("cannot cancel {} order", order.status))
            }
            Some(order) => {
                order.status = OrderStatus::Cancelled;
                order.cancel_reason = Some(text("reason"));
                order.refund_method = Some(text("refund_method"));
                serde_json::to_value(&*order).expect("serializable")
            }
        },
        "modify_item" => {
            let variant = state
                .product_of_variant(&text("new_variant_id"))
                .map(|(pid, v)| (pid.to_string(), v.price));
            match (next.orders.get_mut(&text("order_id")), variant) {
                (None, _) => in_band("order not found".into()),
                (Some(order), _) if order.status != OrderStatus::Pending => {
                    in_band(format!("cannot modify {} order", order.status))
                }
                (Some(order), _) if !order.items.contains_key(&text("item_id")) => {
                    in_band("item not found in order".into())
                }
                (Some(_), None) => in_band("variant not found".into()),
                (Some(order), Some((product_id, price))) => {
                    let item = order.items.get_mut(&text("item_id")).expect("checked above");
                    item.product_id = product_id;
                    item.variant_id = text("new_variant_id");
                    item.price = price;
                    order.status = OrderStatus::Modified;
                    order.settlement_method = Some(text("payment_method"));
                    serde_json::to_value(&*order).expect("serializable")
                }
            }
        }
        other => unreachable!("registered retail tool `{other}` has no handler"),
    };
    Ok((next, Observation::tool(turn + 1, result)))
}

/// 1 iff every constrained path holds its expected value.
pub fn reward(final_state: &RetailState, gt: &GroundTruth) -> RewardValue {
    let view = final_state.view();
    let mismatches: Vec<String> = gt
        .constraints
        .iter()
        .filter(|(path, expected)| state::lookup(&view, path) != Some(*expected))
        .map(|(path, _)| path.clone())
        .collect();
    let value = if mismatches.is_empty() { Score::ONE } else { Score::ZERO };
    RewardValue {
        value,
        breakdown: vec![RewardComponent { name: "state_match".into(), value, mismatches }],
    }
}

/// Whether a reward-1 final state is still reachable from `state`.
///
/// Every mutation moves an order out of `pending`, and both mutating tools
/// refuse non-pending orders, so a constrained field that is wrong on a
/// non-pending order can never be repaired. Fields of pending orders can
/// still be set by the single mutation the task calls for.
pub fn on_reward_path(state: &RetailState, gt: &GroundTruth) -> bool {
    let view = state.view();
    gt.constraints.iter().all(|(path, expected)| {
        if state::lookup(&view, path) == Some(expected) {
            return true;
        }
        let mut parts = path.split('.');
        match (parts.next(), parts.next()) {
            (Some("orders"), Some(oid)) => {
                state.orders.get(oid).is_some_and(|o| o.status == OrderStatus::Pending)
            }
            _ => false,
        }
    })
}

pub struct RetailEnv {
    task: RetailTask,
    ground_truth: GroundTruth,
    state: RetailState,
    replies_used: usize,
}

impl RetailEnv {
    pub fn new(task: RetailTask) -> Result<Self, EnvError> {
        task.validate()?;
        let ground_truth = task.ground_truth()?;
        let state = task.initial_state.clone();
        Ok(Self { task, ground_truth, state, replies_used: 0 })
    }

    pub fn state(&self) -> &RetailState {
        &self.state
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.ground_truth
    }

    pub fn policies(&self) -> &[PolicyRule] {
        &self.task.policies
    }

    fn message_ends_conversation(&self) -> bool {
        self.replies_used >= self.task.user_script.replies.len()
    }
}

impl Environment for RetailEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Retail
    }

    fn initial_observation(&self) -> Observation {
        Observation::user(1, self.task.user_script.opening.clone())
    }

    fn actor_system_prompt(&self) -> String {
        format!(
            "You are a customer service agent for an online store. Help the customer using the tools below \
             and follow the store policies exactly.\n\n# Tools\n{}\n\n# Policies\n{}\n\n\
             To call a tool, reply with a fenced block:\n```tool_call <tool_name>\n<arg> = \"<value>\"\n```\n\
             Otherwise reply with a plain message to the customer.",
            self.registry().describe(),
            policy::render_policies(&self.task.policies),
        )
    }

    fn critic_context(&self, _proposal: &ActionProposal) -> CriticContext {
        CriticContext { context: policy::render_policies(&self.task.policies), aspect: None }
    }

    fn step(&mut self, action: &ActionProposal, turn: u32) -> Result<Transition, EnvError> {
        match action {
            ActionProposal::ToolCall { tool_name, tool_args, .. } => {
                let (next, observation) = execute_tool(&self.state, tool_name, tool_args, turn)?;
                self.state = next;
                Ok(Transition { observation, done: false })
            }
            ActionProposal::Message { .. } => {
                if self.message_ends_conversation() {
                    Ok(Transition { observation: Observation::user(turn + 1, USER_STOP), done: true })
                } else {
                    let reply = self.task.user_script.replies[self.replies_used].clone();
                    self.replies_used += 1;
                    Ok(Transition { observation: Observation::user(turn + 1, reply), done: false })
                }
            }
            ActionProposal::Recommendation { .. } => Ok(Transition {
                observation: Observation::system(turn + 1, "recommendations are not supported in this store"),
                done: false,
            }),
        }
    }

    fn evaluate(&self) -> RewardValue {
        reward(&self.state, &self.ground_truth)
    }

    fn probe(&self) -> &dyn GroundTruthProbe {
        self
    }
}

impl GroundTruthProbe for RetailEnv {
    fn assess(&self, proposal: &ActionProposal) -> Assessment {
        match proposal {
            ActionProposal::ToolCall { tool_name, tool_args, .. } => {
                let class = self.registry().class_of(tool_name);
                if class != Some(ToolClass::StateMutating) {
                    return if class.is_some() {
                        Assessment::ok()
                    } else {
                        Assessment::off(Finding::Mismatch, format!("`{tool_name}` is not an available tool"))
                    };
                }
                let violated = check_policies(&self.task.policies, &self.state, tool_name, tool_args);
                let after = match execute_tool(&self.state, tool_name, tool_args, 0) {
                    Ok((after, _)) => after,
                    Err(e) => return Assessment::off(Finding::Violation, e.to_string()),
                };
                if on_reward_path(&after, &self.ground_truth) {
                    Assessment::ok()
                } else if !violated.is_empty() {
                    let detail = violated
                        .iter()
                        .map(|r| format!("{}: {}", r.rule_id, r.message))
                        .collect::<Vec<_>>()
                        .join(" ");
                    Assessment::off(Finding::Violation, detail)
                } else {
                    Assessment::off(
                        Finding::Mismatch,
                        format!("`{tool_name}` with these arguments does not carry out what the customer asked for"),
                    )
                }
            }
            ActionProposal::Message { .. } => {
                let complete = reward(&self.state, &self.ground_truth).is_success();
                if self.message_ends_conversation() && !complete {
                    Assessment::off(Finding::Premature, "the customer's valid request has not been carried out yet")
                } else {
                    Assessment::ok()
                }
            }
            ActionProposal::Recommendation { .. } => Assessment::ok(),
        }
    }
}
