//! Critic output to [`CriticVerdict`].
//!
//! A reply that starts with `[APPROVE]` approves and one that starts with
//! `[REVISE]` asks for a revision with the rest of the text as guidance.
//! Anything else is treated as a revision request carrying the whole text,
//! so an untagged critic never silently approves.

use crate::model::{CriticVerdict, Decision};

pub const APPROVE_TAG: &str = "[APPROVE]";
pub const REVISE_TAG: &str = "[REVISE]";

/// Guidance used when a revise reply carries no text of its own.
pub const EMPTY_GUIDANCE: &str = "The critic asked for a revision without further detail; reconsider the proposed action.";

fn strip_tag<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let head = text.get(..tag.len())?;
    head.eq_ignore_ascii_case(tag).then(|| &text[tag.len()..])
}

fn guidance_or_default(text: &str) -> String {
    let t = text.trim();
    if t.is_empty() {
        EMPTY_GUIDANCE.to_string()
    } else {
        t.to_string()
    }
}

/// Total: every input yields a valid verdict and `raw_output` is `raw`.
pub fn parse_verdict(raw: &str) -> CriticVerdict {
    let body = raw.trim_start();
    let (decision, guidance) = if strip_tag(body, APPROVE_TAG).is_some() {
        (Decision::Approve, String::new())
    } else if let Some(rest) = strip_tag(body, REVISE_TAG) {
        (Decision::Revise, guidance_or_default(rest))
    } else {
        (Decision::Revise, guidance_or_default(raw))
    };
    CriticVerdict { decision, guidance, raw_output: raw.to_string() }
}
