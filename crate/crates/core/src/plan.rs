//! Per-task actor scripts shipped with fixtures.
//!
//! A plan lists, for every turn, the action a competent actor would take and
//! the perturbed action it takes instead when an error mode fires on that
//! turn. Turns without an entry for a mode cannot exhibit that mode.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::ActionProposal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// Permits an action that breaks a policy or a user preference.
    ViolateConstraint,
    /// Blocks or distorts a valid action because of an invented constraint.
    HallucinateConstraint,
    /// Picks a feasible but worse option.
    SuboptimalChoice,
}

impl ErrorMode {
    pub const ALL: [ErrorMode; 3] = [
        ErrorMode::ViolateConstraint,
        ErrorMode::HallucinateConstraint,
        ErrorMode::SuboptimalChoice,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorMode::ViolateConstraint => "violate_constraint",
            ErrorMode::HallucinateConstraint => "hallucinate_constraint",
            ErrorMode::SuboptimalChoice => "suboptimal_choice",
        }
    }
}

impl fmt::Display for ErrorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown error mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnPlan {
    pub intended: ActionProposal,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub perturbations: BTreeMap<ErrorMode, ActionProposal>,
}

impl TurnPlan {
    pub fn new(intended: ActionProposal) -> Self {
        Self { intended, perturbations: BTreeMap::new() }
    }

    pub fn with(mut self, mode: ErrorMode, action: ActionProposal) -> Self {
        self.perturbations.insert(mode, action);
        self
    }
}

/// Turn `t` (1-based) is `turns[t - 1]`.
pub type ActorPlan = Vec<TurnPlan>;
