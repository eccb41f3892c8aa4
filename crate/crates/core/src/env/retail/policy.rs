//! Declarative policy rules.
//!
//! A rule applies to one tool and states a condition the call must satisfy.
//! Conditions compare operands drawn from the call's arguments, the state
//! view, or literals. State paths are templates: `{arg}` splices an argument
//! value in as a key, `<path>` splices in the value found at another path.
//!
//! ```text
//! orders.{order_id}.status
//! catalog.<orders.{order_id}.items.{item_id}.product_id>.variants
//! ```
//!
//! An operand that does not resolve makes its condition fail.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::state::{lookup_keys, RetailState};
use crate::env::{EnvError, ToolClass, ToolRegistry};
use crate::model::{ArgValue, EnvKind, ToolArgs};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Key(String),
    Arg(String),
    Nested(PathTemplate),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PathTemplate {
    segments: Vec<Segment>,
}

impl PathTemplate {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut segments = Vec::new();
        let mut rest = text;
        loop {
            let (segment, tail) = if let Some(inner) = rest.strip_prefix('<') {
                let close = matching_angle(inner).ok_or_else(|| format!("unbalanced `<` in `{text}`"))?;
                (Segment::Nested(PathTemplate::parse(&inner[..close])?), &inner[close + 1..])
            } else {
                let end = rest.find('.').unwrap_or(rest.len());
                let raw = &rest[..end];
                if raw.is_empty() {
                    return Err(format!("empty segment in `{text}`"));
                }
                let seg = match raw.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
                    Some(arg) if !arg.is_empty() => Segment::Arg(arg.to_string()),
                    Some(_) => return Err(format!("empty argument reference in `{text}`")),
                    None if raw.contains(['{', '}', '<', '>']) => {
                        return Err(format!("malformed segment `{raw}` in `{text}`"))
                    }
                    None => Segment::Key(raw.to_string()),
                };
                (seg, &rest[end..])
            };
            segments.push(segment);
            if tail.is_empty() {
                break;
            }
            rest = tail
                .strip_prefix('.')
                .ok_or_else(|| format!("expected `.` after segment in `{text}`"))?;
        }
        Ok(Self { segments })
    }

    /// Argument names referenced anywhere in the template.
    pub fn arg_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for seg in &self.segments {
            match seg {
                Segment::Arg(a) => out.push(a.as_str()),
                Segment::Nested(t) => out.extend(t.arg_refs()),
                Segment::Key(_) => {}
            }
        }
        out
    }

    fn keys(&self, view: &serde_json::Value, args: &ToolArgs) -> Option<Vec<String>> {
        self.segments
            .iter()
            .map(|seg| match seg {
                Segment::Key(k) => Some(k.clone()),
                Segment::Arg(a) => args.get(a).map(key_text),
                Segment::Nested(t) => t.resolve(view, args).map(|v| match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                }),
            })
            .collect()
    }

    pub fn resolve<'a>(&self, view: &'a serde_json::Value, args: &ToolArgs) -> Option<&'a serde_json::Value> {
        lookup_keys(view, self.keys(view, args)?)
    }
}

fn key_text(v: &ArgValue) -> String {
    match v {
        ArgValue::Text(s) => s.clone(),
        other => other.to_string(),
    }
}

fn matching_angle(s: &str) -> Option<usize> {
    let mut depth = 1usize;
    for (i, c) in s.char_indices() {
        match c {
            '<' => depth += 1,
            '>' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

impl fmt::Display for PathTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            match seg {
                Segment::Key(k) => f.write_str(k)?,
                Segment::Arg(a) => write!(f, "{{{a}}}")?,
                Segment::Nested(t) => write!(f, "<{t}>")?,
            }
        }
        Ok(())
    }
}

impl TryFrom<String> for PathTemplate {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        PathTemplate::parse(&s)
    }
}

impl From<PathTemplate> for String {
    fn from(t: PathTemplate) -> Self {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Arg(String),
    Path(PathTemplate),
    Literal(serde_json::Value),
}

impl Operand {
    fn eval(&self, view: &serde_json::Value, args: &ToolArgs) -> Option<serde_json::Value> {
        match self {
            Operand::Arg(name) => args.get(name).map(ArgValue::to_json),
            Operand::Path(t) => t.resolve(view, args).cloned(),
            Operand::Literal(v) => Some(v.clone()),
        }
    }

    fn arg_refs(&self) -> Vec<&str> {
        match self {
            Operand::Arg(a) => vec![a.as_str()],
            Operand::Path(t) => t.arg_refs(),
            Operand::Literal(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    Equals { left: Operand, right: Operand },
    OneOf { value: Operand, options: Vec<serde_json::Value> },
    /// Array membership, or key membership for objects.
    Contains { collection: Operand, member: Operand },
}

impl Condition {
    pub fn holds(&self, view: &serde_json::Value, args: &ToolArgs) -> bool {
        match self {
            Condition::Equals { left, right } => {
                match (left.eval(view, args), right.eval(view, args)) {
                    (Some(l), Some(r)) => l == r,
                    _ => false,
                }
            }
            Condition::OneOf { value, options } => {
                value.eval(view, args).is_some_and(|v| options.contains(&v))
            }
            Condition::Contains { collection, member } => {
                let (Some(c), Some(m)) = (collection.eval(view, args), member.eval(view, args)) else {
                    return false;
                };
                match (c, m) {
                    (serde_json::Value::Array(items), m) => items.contains(&m),
                    (serde_json::Value::Object(map), serde_json::Value::String(k)) => map.contains_key(&k),
                    _ => false,
                }
            }
        }
    }

    fn arg_refs(&self) -> Vec<&str> {
        match self {
            Condition::Equals { left, right } => left.arg_refs().into_iter().chain(right.arg_refs()).collect(),
            Condition::OneOf { value, .. } => value.arg_refs(),
            Condition::Contains { collection, member } => {
                collection.arg_refs().into_iter().chain(member.arg_refs()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    pub rule_id: String,
    pub tool: String,
    pub require: Condition,
    pub message: String,
}

/// Every rule the call breaks, in policy-set order. Calls that are not tool
/// calls, or that target tools no rule mentions, are compliant.
pub fn check_policies<'p>(
    policies: &'p [PolicyRule],
    state: &RetailState,
    tool_name: &str,
    args: &ToolArgs,
) -> Vec<&'p PolicyRule> {
    let view = state.view();
    policies
        .iter()
        .filter(|r| r.tool == tool_name && !r.require.holds(&view, args))
        .collect()
}

/// A policy set is consistent when rule ids are unique, every rule targets a
/// registered state-mutating tool, and every argument it references is an
/// argument of that tool.
pub fn validate_policy_set(policies: &[PolicyRule]) -> Result<(), EnvError> {
    let registry = ToolRegistry::for_env(EnvKind::Retail);
    for (i, rule) in policies.iter().enumerate() {
        if policies[..i].iter().any(|r| r.rule_id == rule.rule_id) {
            return Err(EnvError::Fixture(format!("duplicate rule id {}", rule.rule_id)));
        }
        let Some(spec) = registry.get(&rule.tool) else {
            return Err(EnvError::Fixture(format!("rule {} targets unknown tool {}", rule.rule_id, rule.tool)));
        };
        if spec.class != ToolClass::StateMutating {
            return Err(EnvError::Fixture(format!("rule {} targets read-only tool {}", rule.rule_id, rule.tool)));
        }
        if let Some(bad) = rule.require.arg_refs().into_iter().find(|a| !spec.args.contains(a)) {
            return Err(EnvError::Fixture(format!(
                "rule {} references `{bad}`, which {} does not take",
                rule.rule_id, rule.tool
            )));
        }
        if rule.message.trim().is_empty() {
            return Err(EnvError::Fixture(format!("rule {} has no message", rule.rule_id)));
        }
    }
    Ok(())
}

/// Policy text as shown to actors and critics.
pub fn render_policies(policies: &[PolicyRule]) -> String {
    policies
        .iter()
        .map(|r| format!("{} ({}): {}", r.rule_id, r.tool, r.message))
        .collect::<Vec<_>>()
        .join("\n")
}

fn path(t: &str) -> Operand {
    Operand::Path(PathTemplate::parse(t).expect("static template"))
}

fn arg(a: &str) -> Operand {
    Operand::Arg(a.to_string())
}

/// Allowed cancellation reasons.
pub const CANCEL_REASONS: [&str; 2] = ["no longer needed", "ordered by mistake"];

/// The standard retail policy set used by generated fixtures.
pub fn standard_policies() -> Vec<PolicyRule> {
    let rule = |id: &str, tool: &str, require: Condition, message: &str| PolicyRule {
        rule_id: id.into(),
        tool: tool.into(),
        require,
        message: message.into(),
    };
    let product_variants = "catalog.<orders.{order_id}.items.{item_id}.product_id>.variants";
    vec![
        rule(
            "P1",
            "modify_item",
            Condition::Equals { left: path("orders.{order_id}.status"), right: Operand::Literal("pending".into()) },
            "Only pending orders can have their items modified.",
        ),
        rule(
            "P2",
            "modify_item",
            Condition::Contains { collection: path(product_variants), member: arg("new_variant_id") },
            "An item can only be exchanged for another variant of the same product.",
        ),
        rule(
            "P3",
            "cancel_order",
            Condition::Equals { left: path("orders.{order_id}.status"), right: Operand::Literal("pending".into()) },
            "Only pending orders can be cancelled; shipped orders cannot be cancelled.",
        ),
        rule(
            "P4",
            "cancel_order",
            Condition::OneOf {
                value: arg("reason"),
                options: CANCEL_REASONS.iter().map(|r| serde_json::Value::from(*r)).collect(),
            },
            "The cancellation reason must be either 'no longer needed' or 'ordered by mistake'.",
        ),
        rule(
            "P5",
            "cancel_order",
            Condition::Equals { left: arg("refund_method"), right: path("orders.{order_id}.payment_method") },
            "The refund must be processed using the original payment method of the order.",
        ),
        rule(
            "P6",
            "modify_item",
            Condition::Contains {
                collection: path("users.<orders.{order_id}.user_id>.payment_methods"),
                member: arg("payment_method"),
            },
            "Any price difference must be settled with a payment method on file for the customer.",
        ),
        rule(
            "P7",
            "modify_item",
            Condition::Equals {
                left: path(&format!("{product_variants}.{{new_variant_id}}.available")),
                right: Operand::Literal(true.into()),
            },
            "The new variant must be available.",
        ),
    ]
}
