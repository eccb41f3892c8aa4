//! Seeded generator for retail task fixtures.
//!
//! Each task gets a small self-contained world (one customer, a few orders,
//! a shared catalog) and one of four request shapes: cancel a pending order,
//! exchange an item, cancel a pending order and exchange an item in another,
//! or cancel an order that has already shipped (which must be declined).
//! The actor plan carries a policy-violating perturbation on every turn where
//! the request is carried out, and a spurious refusal on the same turns.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::policy::{standard_policies, CANCEL_REASONS};
use super::state::{LineItem, Order, OrderStatus, Product, RetailState, User, Variant};
use super::{check_policies, execute_tool, reward, GroundTruth, RetailTask, UserScript};
use crate::env::{EnvError, ToolClass, ToolRegistry};
use crate::model::{ActionProposal, EnvKind, TaskSpec};
use crate::plan::{ErrorMode, TurnPlan};
use crate::rng::stream;

const PRODUCTS: &[(&str, &[&str])] = &[
    ("Desk Lamp", &["black", "white", "brass", "silver"]),
    ("Water Bottle", &["500ml steel", "1l steel", "1l plastic"]),
    ("Backpack", &["20l grey", "20l navy", "30l grey", "30l olive"]),
    ("Headphones", &["wired black", "wireless black", "wireless white"]),
    ("Running Shoes", &["size 8", "size 9", "size 10", "size 11"]),
    ("Coffee Maker", &["drip", "pour-over", "espresso"]),
];

const NAMES: &[&str] = &[
    "Ada Park", "Bo Chen", "Carmen Diaz", "Dev Patel", "Elif Kaya", "Femi Ade", "Greta Lund", "Hiro Sato",
    "Ines Costa", "Jonas Berg",
];

fn build_catalog(rng: &mut ChaCha8Rng) -> BTreeMap<String, Product> {
    let mut catalog = BTreeMap::new();
    for (p, (name, variants)) in PRODUCTS.iter().enumerate() {
        let pid = format!("P{}", 1001 + p);
        let base = rng.gen_range(15..120) * 100;
        let unavailable = rng.gen_range(0..variants.len());
        let variants = variants
            .iter()
            .enumerate()
            .map(|(v, desc)| {
                let vid = format!("V{}{:02}", 1001 + p, v + 1);
                let variant = Variant {
                    description: desc.to_string(),
                    price: base + rng.gen_range(0..20) * 100,
                    available: v != unavailable,
                };
                (vid, variant)
            })
            .collect();
        catalog.insert(pid, Product { name: name.to_string(), variants });
    }
    catalog
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Cancel,
    Modify,
    CancelAndModify,
    ShippedCancel,
}

struct World {
    state: RetailState,
    user_id: String,
    order_ids: Vec<String>,
}

fn build_world(rng: &mut ChaCha8Rng, index: usize, catalog: &BTreeMap<String, Product>, shape: Shape) -> World {
    let user_id = format!("U{:04}", 1000 + index);
    let name = NAMES[index % NAMES.len()].to_string();
    let card = format!("credit_card_{}", rng.gen_range(1000..9999));
    let mut payment_methods = vec![card];
    payment_methods.push(format!("gift_card_{}", rng.gen_range(1000..9999)));
    if rng.gen_bool(0.5) {
        payment_methods.push(format!("paypal_{}", rng.gen_range(1000..9999)));
    }
    let membership = ["regular", "silver", "gold"][rng.gen_range(0..3)].to_string();

    let product_ids: Vec<&String> = catalog.keys().collect();
    let n_orders = rng.gen_range(2..=3);
    let mut orders = BTreeMap::new();
    let mut order_ids = Vec::new();
    for k in 0..n_orders {
        let oid = format!("W{:04}{}", index, k + 1);
        let n_items = rng.gen_range(1..=2);
        let mut chosen = product_ids.clone();
        chosen.shuffle(rng);
        let items = chosen[..n_items]
            .iter()
            .enumerate()
            .map(|(j, pid)| {
                let (vid, v) = catalog[*pid].variants.iter().nth(rng.gen_range(0..catalog[*pid].variants.len())).unwrap();
                (format!("I{}", j + 1), LineItem { product_id: (*pid).clone(), variant_id: vid.clone(), price: v.price })
            })
            .collect();
        let status = match (shape, k) {
            (Shape::ShippedCancel, 0) => OrderStatus::Shipped,
            (_, 0) | (_, 1) => OrderStatus::Pending,
            _ => [OrderStatus::Pending, OrderStatus::Shipped][rng.gen_range(0..2)],
        };
        let payment_method = payment_methods[rng.gen_range(0..payment_methods.len())].clone();
        orders.insert(
            oid.clone(),
            Order {
                user_id: user_id.clone(),
                items,
                status,
                payment_method,
                cancel_reason: None,
                refund_method: None,
                settlement_method: None,
            },
        );
        order_ids.push(oid);
    }
    let users = BTreeMap::from([(user_id.clone(), User { name, payment_methods, membership })]);
    World { state: RetailState { orders, users, catalog: catalog.clone() }, user_id, order_ids }
}

fn cancel_call(order_id: &str, reason: &str, refund: &str) -> ActionProposal {
    ActionProposal::tool_call("cancel_order", [("order_id", order_id), ("reason", reason), ("refund_method", refund)])
}

fn modify_call(order_id: &str, item_id: &str, variant: &str, pm: &str) -> ActionProposal {
    ActionProposal::tool_call(
        "modify_item",
        [("order_id", order_id), ("item_id", item_id), ("new_variant_id", variant), ("payment_method", pm)],
    )
}

struct CancelPart {
    order_id: String,
    reason: String,
    refund: String,
    intended: TurnPlan,
    request: String,
    constraints: Vec<(String, serde_json::Value)>,
}

fn plan_cancel(rng: &mut ChaCha8Rng, world: &World, order_id: &str) -> CancelPart {
    let order = &world.state.orders[order_id];
    let user = &world.state.users[&world.user_id];
    let reason = CANCEL_REASONS[rng.gen_range(0..CANCEL_REASONS.len())].to_string();
    let refund = order.payment_method.clone();
    let others: Vec<&String> = user.payment_methods.iter().filter(|m| **m != refund).collect();
    let other = others[rng.gen_range(0..others.len())].clone();
    let wants_other = rng.gen_bool(0.4);

    let mut request = format!("I'd like to cancel order {order_id} because it's {reason}.");
    let violation = if wants_other {
        request.push_str(&format!(" Could you refund it to my {other}?"));
        cancel_call(order_id, &reason, &other)
    } else if rng.gen_bool(0.5) {
        cancel_call(order_id, &reason, &other)
    } else {
        cancel_call(order_id, "changed my mind", &refund)
    };
    let intended = TurnPlan::new(cancel_call(order_id, &reason, &refund))
        .with(ErrorMode::ViolateConstraint, violation)
        .with(
            ErrorMode::HallucinateConstraint,
            ActionProposal::message(format!(
                "I'm sorry, but our policy does not allow order {order_id} to be cancelled."
            )),
        );
    let prefix = format!("orders.{order_id}");
    CancelPart {
        order_id: order_id.to_string(),
        reason: reason.clone(),
        refund: refund.clone(),
        intended,
        request,
        constraints: vec![
            (format!("{prefix}.status"), json!("cancelled")),
            (format!("{prefix}.cancel_reason"), json!(reason)),
            (format!("{prefix}.refund_method"), json!(refund)),
        ],
    }
}

struct ModifyPart {
    order_id: String,
    product_id: String,
    variant_desc: String,
    pm: String,
    intended: TurnPlan,
    request: String,
    constraints: Vec<(String, serde_json::Value)>,
}

fn plan_modify(rng: &mut ChaCha8Rng, world: &World, order_id: &str) -> ModifyPart {
    let state = &world.state;
    let order = &state.orders[order_id];
    let user = &state.users[&world.user_id];
    let (item_id, item) = order.items.iter().next().expect("orders have items");
    let product = &state.catalog[&item.product_id];
    let candidates: Vec<(&String, &Variant)> = product
        .variants
        .iter()
        .filter(|(vid, v)| v.available && **vid != item.variant_id)
        .collect();
    let (new_vid, new_v) = candidates[rng.gen_range(0..candidates.len())];
    let pm = user.payment_methods[rng.gen_range(0..user.payment_methods.len())].clone();
    let current = &product.variants[&item.variant_id].description;

    let unavailable: Vec<&String> = product
        .variants
        .iter()
        .filter(|(vid, v)| !v.available && **vid != item.variant_id)
        .map(|(vid, _)| vid)
        .collect();
    let foreign: Vec<&String> = state
        .catalog
        .iter()
        .filter(|(pid, _)| **pid != item.product_id)
        .flat_map(|(_, p)| p.variants.iter().filter(|(_, v)| v.available).map(|(vid, _)| vid))
        .collect();
    let violation = match rng.gen_range(0..3) {
        0 if !unavailable.is_empty() => modify_call(order_id, item_id, unavailable[0], &pm),
        1 => modify_call(order_id, item_id, foreign[rng.gen_range(0..foreign.len())], &pm),
        _ => modify_call(order_id, item_id, new_vid, &format!("paypal_{}", rng.gen_range(1..999))),
    };
    let intended = TurnPlan::new(modify_call(order_id, item_id, new_vid, &pm))
        .with(ErrorMode::ViolateConstraint, violation)
        .with(
            ErrorMode::HallucinateConstraint,
            ActionProposal::message("Unfortunately, exchanges are not permitted for this item under our policy."),
        );
    let prefix = format!("orders.{order_id}");
    ModifyPart {
        order_id: order_id.to_string(),
        product_id: item.product_id.clone(),
        variant_desc: new_v.description.clone(),
        pm: pm.clone(),
        intended,
        request: format!(
            "In order {order_id} I'd like to exchange my {} ({current}) for the {} one; please charge any difference to {pm}.",
            product.name, new_v.description
        ),
        constraints: vec![
            (format!("{prefix}.status"), json!("modified")),
            (format!("{prefix}.items.{item_id}.variant_id"), json!(new_vid)),
            (format!("{prefix}.settlement_method"), json!(pm)),
        ],
    }
}

fn lookup_order(order_id: &str) -> ActionProposal {
    ActionProposal::tool_call("get_order_details", [("order_id", order_id)])
}

fn build_task(seed: u64, index: usize, catalog: &BTreeMap<String, Product>) -> RetailTask {
    let mut rng = stream(seed, &format!("retail-task-{index}"));
    let shape = match rng.gen_range(0..20) {
        0..=6 => Shape::Cancel,
        7..=13 => Shape::Modify,
        14..=17 => Shape::CancelAndModify,
        _ => Shape::ShippedCancel,
    };
    let world = build_world(&mut rng, index, catalog, shape);
    let name = world.state.users[&world.user_id].name.clone();
    let hello = format!("Hi, this is {name} (user id {}).", world.user_id);

    let mut plan = Vec::new();
    let mut constraints = BTreeMap::new();
    let (opening, replies) = match shape {
        Shape::Cancel => {
            let c = plan_cancel(&mut rng, &world, &world.order_ids[0]);
            plan.push(TurnPlan::new(lookup_order(&c.order_id)));
            plan.push(TurnPlan::new(ActionProposal::message(format!(
                "I can cancel order {} ({}). The refund will go to the original payment method, {}. Shall I proceed?",
                c.order_id, c.reason, c.refund
            ))));
            plan.push(c.intended);
            plan.push(TurnPlan::new(ActionProposal::message(format!(
                "Order {} is cancelled and the refund is on its way to {}.",
                c.order_id, c.refund
            ))));
            constraints.extend(c.constraints);
            (format!("{hello} {}", c.request), vec!["Yes, please go ahead.".to_string()])
        }
        Shape::Modify => {
            let m = plan_modify(&mut rng, &world, &world.order_ids[0]);
            plan.push(TurnPlan::new(lookup_order(&m.order_id)));
            plan.push(TurnPlan::new(ActionProposal::tool_call(
                "get_product_details",
                [("product_id", m.product_id.as_str())],
            )));
            plan.push(TurnPlan::new(ActionProposal::message(format!(
                "I can exchange that item in order {} for the {} variant, with any difference charged to {}. Shall I proceed?",
                m.order_id, m.variant_desc, m.pm
            ))));
            plan.push(m.intended);
            plan.push(TurnPlan::new(ActionProposal::message(format!(
                "The exchange in order {} is done.",
                m.order_id
            ))));
            constraints.extend(m.constraints);
            (format!("{hello} {}", m.request), vec!["Yes, please go ahead.".to_string()])
        }
        Shape::CancelAndModify => {
            let c = plan_cancel(&mut rng, &world, &world.order_ids[0]);
            let m = plan_modify(&mut rng, &world, &world.order_ids[1]);
            plan.push(TurnPlan::new(lookup_order(&c.order_id)));
            plan.push(TurnPlan::new(lookup_order(&m.order_id)));
            plan.push(TurnPlan::new(ActionProposal::message(format!(
                "I can cancel order {} with a refund to {}, and exchange the item in order {} for the {} variant, charging any difference to {}. Shall I proceed with both?",
                c.order_id, c.refund, m.order_id, m.variant_desc, m.pm
            ))));
            plan.push(c.intended);
            plan.push(m.intended);
            plan.push(TurnPlan::new(ActionProposal::message("Both changes are complete.")));
            constraints.extend(c.constraints);
            constraints.extend(m.constraints);
            (
                format!("{hello} {} Also, {}", c.request, m.request),
                vec!["Yes, please go ahead with both.".to_string()],
            )
        }
        Shape::ShippedCancel => {
            let oid = world.order_ids[0].clone();
            let pm = world.state.orders[&oid].payment_method.clone();
            plan.push(TurnPlan::new(lookup_order(&oid)));
            plan.push(
                TurnPlan::new(ActionProposal::message(format!(
                    "I'm sorry, order {oid} has already shipped, so it can no longer be cancelled."
                )))
                .with(ErrorMode::ViolateConstraint, cancel_call(&oid, "no longer needed", &pm)),
            );
            constraints.insert(format!("orders.{oid}.status"), json!("shipped"));
            (format!("{hello} Please cancel my order {oid}, I no longer need it."), vec![])
        }
    };

    let task_id = format!("retail-{index:03}");
    let spec = TaskSpec {
        task_id: task_id.clone(),
        environment_id: EnvKind::Retail,
        instruction: opening.clone(),
        user_script_id: format!("{task_id}/user"),
        success_criterion: serde_json::to_value(GroundTruth { constraints }).expect("serializable"),
        horizon: plan.len() as u32,
    };
    RetailTask {
        spec,
        initial_state: world.state,
        policies: standard_policies(),
        user_script: UserScript { opening, replies },
        actor_plan: plan,
    }
}

/// `n` solvable tasks; identical `(n, seed)` gives identical fixtures.
pub fn generate(n: usize, seed: u64) -> Vec<RetailTask> {
    let catalog = build_catalog(&mut stream(seed, "retail-catalog"));
    (0..n).map(|i| build_task(seed, i, &catalog)).collect()
}

/// Post-conditions every shipped fixture satisfies: the fixture validates,
/// the intended plan reaches reward 1, each violation perturbation on the
/// scripted path breaks at least one policy, and every perturbation differs
/// from the action it replaces.
pub fn check_fixture(task: &RetailTask) -> Result<(), EnvError> {
    task.validate()?;
    let gt = task.ground_truth()?;
    let registry = ToolRegistry::for_env(EnvKind::Retail);
    let fail = |msg: String| Err(EnvError::Fixture(format!("{}: {msg}", task.spec.task_id)));
    if task.actor_plan.len() < task.spec.horizon as usize {
        return fail("actor plan shorter than the horizon".into());
    }
    let mut state = task.initial_state.clone();
    for (i, turn) in task.actor_plan.iter().enumerate() {
        for (mode, perturbed) in &turn.perturbations {
            if *perturbed == turn.intended {
                return fail(format!("turn {} {mode} perturbation equals the intended action", i + 1));
            }
            if *mode == ErrorMode::ViolateConstraint {
                let ActionProposal::ToolCall { tool_name, tool_args, .. } = perturbed else {
                    return fail(format!("turn {} violation is not a tool call", i + 1));
                };
                if registry.class_of(tool_name) != Some(ToolClass::StateMutating) {
                    return fail(format!("turn {} violation is not state-mutating", i + 1));
                }
                if check_policies(&task.policies, &state, tool_name, tool_args).is_empty() {
                    return fail(format!("turn {} violation breaks no policy", i + 1));
                }
            }
        }
        if let ActionProposal::ToolCall { tool_name, tool_args, .. } = &turn.intended {
            if !check_policies(&task.policies, &state, tool_name, tool_args).is_empty() {
                return fail(format!("turn {} intended call breaks a policy", i + 1));
            }
            state = execute_tool(&state, tool_name, tool_args, i as u32 + 1)?.0;
        }
    }
    if !reward(&state, &gt).is_success() {
        return fail("intended plan does not reach reward 1".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_fixtures_pass_checks() {
        let tasks = generate(60, 11);
        assert_eq!(tasks.len(), 60);
        for t in &tasks {
            check_fixture(t).unwrap();
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(5, 3), generate(5, 3));
        assert_ne!(generate(5, 3), generate(5, 4));
    }

    #[test]
    fn zero_tasks() {
        assert!(generate(0, 1).is_empty());
    }
}
