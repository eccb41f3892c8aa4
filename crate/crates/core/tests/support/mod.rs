//! Independent reference implementations used by the integration tests and
//! the acceptance harness. They read fixtures through serde_json rather than
//! the library's typed helpers, so a bug in one does not hide in the other.

#![allow(dead_code)]

use std::collections::BTreeSet;

use serde_json::Value;

use critic_gate::env::retail::state::RetailState;
use critic_gate::env::retail::RetailTask;
use critic_gate::env::travel::{AspectOptions, Preference};
use critic_gate::score::Score;

/// Field-wise retail check: walks the typed state for each constrained path.
pub fn retail_reward(state: &RetailState, task: &RetailTask) -> Score {
    if retail_mismatches(state, task).is_empty() {
        Score::ONE
    } else {
        Score::ZERO
    }
}

/// Constrained paths whose value differs from the expected one.
pub fn retail_mismatches(state: &RetailState, task: &RetailTask) -> Vec<String> {
    let constraints = task.spec.success_criterion["constraints"].as_object().expect("constraints object");
    let mut out = Vec::new();
    for (path, expected) in constraints {
        let parts: Vec<&str> = path.split('.').collect();
        let actual: Option<Value> = match parts.as_slice() {
            ["orders", oid, field] => state.orders.get(*oid).and_then(|o| match *field {
                "status" => Some(Value::String(o.status.to_string())),
                "cancel_reason" => o.cancel_reason.clone().map(Value::String),
                "refund_method" => o.refund_method.clone().map(Value::String),
                "settlement_method" => o.settlement_method.clone().map(Value::String),
                "payment_method" => Some(Value::String(o.payment_method.clone())),
                other => panic!("oracle does not know order field {other}"),
            }),
            ["orders", oid, "items", item, "variant_id"] => {
                state.orders.get(*oid).and_then(|o| o.items.get(*item)).map(|i| Value::String(i.variant_id.clone()))
            }
            other => panic!("oracle does not know path {other:?}"),
        };
        if actual.as_ref() != Some(expected) {
            out.push(path.clone());
        }
    }
    out
}

/// Order id named by a constrained path.
pub fn order_of(path: &str) -> &str {
    path.split('.').nth(1).expect("paths start with orders.<id>")
}

fn holds(pref: &Value, option: &Value) -> bool {
    let attr = pref["attribute"].as_str().unwrap();
    let value = if attr == "price" { option["price"].clone() } else { option["attributes"][attr].clone() };
    if value.is_null() {
        return false;
    }
    let threshold = &pref["threshold"];
    match pref["comparator"].as_str().unwrap() {
        ">=" => matches!((value.as_i64(), threshold.as_i64()), (Some(v), Some(t)) if v >= t),
        "<=" => matches!((value.as_i64(), threshold.as_i64()), (Some(v), Some(t)) if v <= t),
        "=" => &value == threshold,
        "in" => threshold.as_array().is_some_and(|set| set.contains(&value)),
        other => panic!("unknown comparator {other}"),
    }
}

/// Brute force over every option: feasible set, its minimum price, then the
/// score of `option_id`. `None` for an unknown id.
pub fn travel_reward(options: &AspectOptions, prefs: &[Preference], option_id: &str) -> Option<Score> {
    let opts: Vec<Value> = options.options.iter().map(|o| serde_json::to_value(o).unwrap()).collect();
    let prefs: Vec<Value> = prefs.iter().map(|p| serde_json::to_value(p).unwrap()).collect();
    let feasible: Vec<&Value> = opts.iter().filter(|o| prefs.iter().all(|p| holds(p, o))).collect();
    let chosen = opts.iter().find(|o| o["option_id"] == option_id)?;
    if !feasible.iter().any(|o| o["option_id"] == option_id) {
        return Some(Score::ZERO);
    }
    let min = feasible.iter().map(|o| o["price"].as_u64().unwrap()).min().unwrap();
    Some(if chosen["price"].as_u64() == Some(min) { Score::ONE } else { Score::new(4, 5) })
}

/// Ids scoring 1 by brute force.
pub fn travel_optimal(options: &AspectOptions, prefs: &[Preference]) -> BTreeSet<String> {
    options
        .options
        .iter()
        .filter(|o| travel_reward(options, prefs, &o.option_id) == Some(Score::ONE))
        .map(|o| o.option_id.clone())
        .collect()
}

/// Mean of a flat list, as an exact fraction built from integer counts.
pub fn recount_mean(values: &[Score]) -> Option<Score> {
    if values.is_empty() {
        return None;
    }
    // common denominator 5 covers {0, 4/5, 1}
    let fifths: i64 = values
        .iter()
        .map(|v| {
            let scaled = v.numer() * 5;
            assert_eq!(scaled % v.denom(), 0, "value {v} is not a multiple of 1/5");
            scaled / v.denom()
        })
        .sum();
    Some(Score::new(fifths, 5 * values.len() as i64))
}
