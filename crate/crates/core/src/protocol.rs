//! Text encoding of actor actions.
//!
//! Backends exchange plain text only. A tool call or recommendation is a
//! fenced block whose info string names the action, followed by one
//! `key = <json scalar>` line per argument:
//!
//! ````text
//! Let me cancel that for you.
//! ```tool_call cancel_order
//! order_id = "W1001"
//! reason = "no longer needed"
//! ```
//! ````
//!
//! Text outside the block becomes the action's `text`. A reply without a
//! block is a plain message.

use crate::model::{ActionProposal, ArgValue, ToolArgs};

const FENCE: &str = "```";
const TOOL_CALL: &str = "tool_call";
const RECOMMENDATION: &str = "recommendation";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("unterminated `{0}` block")]
    Unterminated(&'static str),
    #[error("tool_call block without a tool name")]
    MissingToolName,
    #[error("line {line} of action block is not `key = value`")]
    BadLine { line: usize },
    #[error("argument `{0}` is not a scalar")]
    NonScalar(String),
    #[error("duplicate argument `{0}`")]
    DuplicateArg(String),
    #[error("recommendation block missing `{0}`")]
    MissingField(&'static str),
}

pub fn render_action(action: &ActionProposal) -> String {
    fn block(out: &mut String, text: &Option<String>, header: &str, args: &[(String, String)]) {
        if let Some(t) = text {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str(FENCE);
        out.push_str(header);
        out.push('\n');
        for (k, v) in args {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(FENCE);
    }

    let mut out = String::new();
    match action {
        ActionProposal::Message { text } => out.push_str(text),
        ActionProposal::ToolCall { text, tool_name, tool_args } => {
            let args: Vec<_> = tool_args.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
            block(&mut out, text, &format!("{TOOL_CALL} {tool_name}"), &args);
        }
        ActionProposal::Recommendation { text, aspect, option_id } => {
            let args = vec![
                ("aspect".to_string(), serde_json::Value::from(aspect.as_str()).to_string()),
                ("option_id".to_string(), serde_json::Value::from(option_id.as_str()).to_string()),
            ];
            block(&mut out, text, RECOMMENDATION, &args);
        }
    }
    out
}

fn parse_scalar(raw: &str, key: &str) -> Result<ArgValue, ProtocolError> {
    match serde_json::from_str::<serde_json::Value>(raw) {
        Ok(serde_json::Value::Bool(b)) => Ok(ArgValue::Bool(b)),
        Ok(serde_json::Value::String(s)) => Ok(ArgValue::Text(s)),
        Ok(serde_json::Value::Number(n)) => Ok(match n.as_i64() {
            Some(i) => ArgValue::Int(i),
            None => ArgValue::Float(n.as_f64().unwrap_or_default()),
        }),
        Ok(_) => Err(ProtocolError::NonScalar(key.to_string())),
        // bare words from real models: keep them as text
        Err(_) => Ok(ArgValue::Text(raw.to_string())),
    }
}

pub fn parse_action(raw: &str) -> Result<ActionProposal, ProtocolError> {
    let lines: Vec<&str> = raw.lines().collect();
    let start = lines.iter().position(|l| {
        let l = l.trim_start();
        l.starts_with(&format!("{FENCE}{TOOL_CALL}")) || l.starts_with(&format!("{FENCE}{RECOMMENDATION}"))
    });
    let Some(start) = start else {
        return Ok(ActionProposal::Message { text: raw.trim().to_string() });
    };
    let header = lines[start].trim().trim_start_matches(FENCE).trim();
    let is_tool = header.starts_with(TOOL_CALL);
    let kind = if is_tool { TOOL_CALL } else { RECOMMENDATION };
    let end = lines[start + 1..]
        .iter()
        .position(|l| l.trim() == FENCE)
        .map(|p| p + start + 1)
        .ok_or(ProtocolError::Unterminated(kind))?;

    let mut args = ToolArgs::new();
    for (offset, line) in lines[start + 1..end].iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ProtocolError::BadLine { line: offset + 1 })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(ProtocolError::BadLine { line: offset + 1 });
        }
        let value = parse_scalar(v.trim(), key)?;
        if args.insert(key.to_string(), value).is_some() {
            return Err(ProtocolError::DuplicateArg(key.to_string()));
        }
    }

    let outside: Vec<&str> = lines[..start].iter().chain(&lines[end + 1..]).copied().collect();
    let text = outside.join("\n").trim().to_string();
    let text = (!text.is_empty()).then_some(text);

    if is_tool {
        let tool_name = header[TOOL_CALL.len()..].trim();
        if tool_name.is_empty() {
            return Err(ProtocolError::MissingToolName);
        }
        Ok(ActionProposal::ToolCall { text, tool_name: tool_name.to_string(), tool_args: args })
    } else {
        let mut take = |field: &'static str| -> Result<String, ProtocolError> {
            match args.remove(field) {
                Some(ArgValue::Text(s)) => Ok(s),
                Some(other) => Ok(other.to_string()),
                None => Err(ProtocolError::MissingField(field)),
            }
        };
        let aspect = take("aspect")?;
        let option_id = take("option_id")?;
        Ok(ActionProposal::Recommendation { text, aspect, option_id })
    }
}
