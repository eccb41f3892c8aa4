//! Test-only critic with ground-truth access.
//!
//! It approves a proposal exactly when the environment's probe says
//! executing it keeps a reward-1 outcome reachable, and otherwise asks for a
//! revision with guidance built from the probe's finding.

use super::{BackendError, BackendIdentity, ModelBackend, ModelRequest, Phase};
use crate::env::{Assessment, Finding};

pub const APPROVAL: &str = "[APPROVE] The proposed action is consistent with the task and its constraints.";

fn guidance(finding: Finding, detail: &str) -> String {
    match finding {
        Finding::Violation => format!("The proposed action breaks a constraint. {detail} Do not go ahead with it as proposed."),
        Finding::Suboptimal => format!("The recommendation is feasible but not the best choice; {detail}."),
        Finding::Redundant => format!("Only one recommendation per aspect is allowed; {detail}."),
        Finding::Mismatch => format!("The proposed action does not do what the user asked for. {detail}"),
        Finding::Premature => format!("Do not end the conversation yet: {detail}."),
    }
}

/// Critic reply for a probe assessment.
pub fn render_assessment(assessment: &Assessment) -> String {
    match assessment.finding {
        None => APPROVAL.to_string(),
        Some(f) => format!("[REVISE] {}", guidance(f, assessment.detail.trim())),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleCritic;

impl ModelBackend for OracleCritic {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity { name: "oracle-critic".into(), version: "1".into() }
    }

    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, BackendError> {
        if request.phase != Phase::Critique {
            return Err(BackendError::Misuse("the oracle critic only critiques".into()));
        }
        let probe = request
            .context
            .probe
            .ok_or_else(|| BackendError::Misuse("the oracle critic needs ground-truth access".into()))?;
        let proposal = request
            .context
            .proposal
            .ok_or_else(|| BackendError::Misuse("critique request without a proposal".into()))?;
        Ok(render_assessment(&probe.assess(proposal)))
    }

    fn wants_ground_truth(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::parse_verdict;
    use crate::model::Decision;

    #[test]
    fn replies_parse_back() {
        assert_eq!(parse_verdict(&render_assessment(&Assessment::ok())).decision, Decision::Approve);
        let off = Assessment::off(Finding::Violation, "P5: refunds go to the original payment method.");
        let v = parse_verdict(&render_assessment(&off));
        assert_eq!(v.decision, Decision::Revise);
        assert!(v.guidance.contains("P5"));
    }
}
