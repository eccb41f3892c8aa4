//! Deterministic stand-ins for model backends.
//!
//! [`ScriptedActor`] replays each task's actor plan. On every turn an error
//! mode may fire (by a fixed schedule or with probability `p`), in which
//! case the plan's perturbed action for that mode is proposed instead of the
//! intended one. Whether the actor then heeds critic guidance is set by
//! [`Compliance`]. All randomness comes from `(seed, task, turn)`, so the
//! same inputs always give the same proposal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, BackendIdentity, ModelBackend, ModelRequest, Phase};
use crate::model::ActionProposal;
use crate::plan::{ActorPlan, ErrorMode};
use crate::protocol::render_action;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("turn {turn} is outside the {len}-turn program for `{task_id}`")]
    TurnOutOfRange { task_id: String, turn: u32, len: usize },
    #[error("no scripted program for task `{0}`")]
    UnknownTask(String),
    #[error("invalid program for `{task_id}`: {reason}")]
    InvalidProgram { task_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compliance {
    CompliesWithGuidance,
    IgnoresGuidance,
}

impl FromStr for Compliance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "complies_with_guidance" => Ok(Compliance::CompliesWithGuidance),
            "ignores_guidance" => Ok(Compliance::IgnoresGuidance),
            other => Err(format!("unknown compliance `{other}`")),
        }
    }
}

impl fmt::Display for Compliance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Compliance::CompliesWithGuidance => "complies_with_guidance",
            Compliance::IgnoresGuidance => "ignores_guidance",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSchedule {
    /// Exactly these turns err, with these modes.
    Fixed(BTreeMap<u32, ErrorMode>),
    /// Each turn errs independently with this probability, picking
    /// uniformly among the enabled modes the turn supports.
    Probability(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedActorProgram {
    pub task_id: String,
    pub turns: ActorPlan,
    pub error_modes: BTreeSet<ErrorMode>,
    pub error_schedule: ErrorSchedule,
    pub compliance: Compliance,
}

impl ScriptedActorProgram {
    pub fn validate(&self) -> Result<(), ScriptError> {
        let bad = |reason: String| Err(ScriptError::InvalidProgram { task_id: self.task_id.clone(), reason });
        match &self.error_schedule {
            ErrorSchedule::Probability(p) if !(0.0..=1.0).contains(p) => bad(format!("probability {p} outside [0, 1]")),
            ErrorSchedule::Probability(_) => Ok(()),
            ErrorSchedule::Fixed(map) => {
                for (turn, mode) in map {
                    let Some(plan) = (*turn as usize).checked_sub(1).and_then(|i| self.turns.get(i)) else {
                        return bad(format!("schedule names turn {turn}, program has {}", self.turns.len()));
                    };
                    if !self.error_modes.contains(mode) {
                        return bad(format!("turn {turn} schedules disabled mode {mode}"));
                    }
                    if !plan.perturbations.contains_key(mode) {
                        return bad(format!("turn {turn} has no {mode} perturbation"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Mode that fires at `turn` for `seed`, if any.
    pub fn fired_mode(&self, turn: u32, seed: u64) -> Option<ErrorMode> {
        let plan = &self.turns[turn as usize - 1];
        match &self.error_schedule {
            ErrorSchedule::Fixed(map) => map.get(&turn).copied(),
            ErrorSchedule::Probability(p) => {
                let mut rng = stream(seed, &format!("{}/turn-{turn}", self.task_id));
                let roll: f64 = rng.gen();
                let available: Vec<ErrorMode> =
                    self.error_modes.iter().copied().filter(|m| plan.perturbations.contains_key(m)).collect();
                if roll < *p && !available.is_empty() {
                    Some(available[rng.gen_range(0..available.len())])
                } else {
                    None
                }
            }
        }
    }
}

/// The action the scripted actor proposes at `turn` (1-based).
pub fn scripted_actor_step(
    program: &ScriptedActorProgram,
    turn: u32,
    seed: u64,
    guidance: Option<&str>,
) -> Result<ActionProposal, ScriptError> {
    if turn == 0 || turn as usize > program.turns.len() {
        return Err(ScriptError::TurnOutOfRange {
            task_id: program.task_id.clone(),
            turn,
            len: program.turns.len(),
        });
    }
    let plan = &program.turns[turn as usize - 1];
    if guidance.is_some() && program.compliance == Compliance::CompliesWithGuidance {
        return Ok(plan.intended.clone());
    }
    Ok(match program.fired_mode(turn, seed) {
        Some(mode) => plan.perturbations.get(&mode).cloned().unwrap_or_else(|| plan.intended.clone()),
        None => plan.intended.clone(),
    })
}

/// Scripted actor serving many tasks.
#[derive(Debug, Clone, Default)]
pub struct ScriptedActor {
    programs: BTreeMap<String, ScriptedActorProgram>,
}

impl ScriptedActor {
    pub fn new<I: IntoIterator<Item = ScriptedActorProgram>>(programs: I) -> Result<Self, ScriptError> {
        let programs = programs.into_iter().map(|p| (p.task_id.clone(), p)).collect::<BTreeMap<_, _>>();
        programs.values().try_for_each(ScriptedActorProgram::validate)?;
        Ok(Self { programs })
    }

    pub fn program(&self, task_id: &str) -> Option<&ScriptedActorProgram> {
        self.programs.get(task_id)
    }
}

impl ModelBackend for ScriptedActor {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity { name: "scripted-actor".into(), version: "1".into() }
    }

    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, BackendError> {
        let ctx = &request.context;
        let program = self.program(ctx.task_id).ok_or_else(|| ScriptError::UnknownTask(ctx.task_id.to_string()))?;
        let guidance = match &request.phase {
            Phase::Propose => None,
            Phase::Revise { guidance } => Some(guidance.as_str()),
            Phase::Critique | Phase::Extract => {
                return Err(BackendError::Misuse(format!("the scripted actor cannot serve a {} request", request.phase.name())))
            }
        };
        let action = scripted_actor_step(program, ctx.turn, ctx.seed, guidance)?;
        Ok(render_action(&action))
    }
}

/// Returns the same text for every request.
#[derive(Debug, Clone)]
pub struct FixedBackend {
    name: String,
    reply: String,
}

impl FixedBackend {
    pub fn new(name: impl Into<String>, reply: impl Into<String>) -> Self {
        Self { name: name.into(), reply: reply.into() }
    }
}

impl ModelBackend for FixedBackend {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity { name: self.name.clone(), version: "fixed".into() }
    }

    fn complete(&self, _request: &ModelRequest<'_>) -> Result<String, BackendError> {
        Ok(self.reply.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::TurnPlan;

    fn program(schedule: ErrorSchedule, compliance: Compliance) -> ScriptedActorProgram {
        let turns = vec![
            TurnPlan::new(ActionProposal::message("hello")),
            TurnPlan::new(ActionProposal::tool_call("cancel_order", [("order_id", "W1"), ("refund_method", "card")]))
                .with(
                    ErrorMode::ViolateConstraint,
                    ActionProposal::tool_call("cancel_order", [("order_id", "W1"), ("refund_method", "gift")]),
                ),
        ];
        ScriptedActorProgram {
            task_id: "t".into(),
            turns,
            error_modes: BTreeSet::from([ErrorMode::ViolateConstraint]),
            error_schedule: schedule,
            compliance,
        }
    }

    fn fixed_at_2() -> ErrorSchedule {
        ErrorSchedule::Fixed(BTreeMap::from([(2, ErrorMode::ViolateConstraint)]))
    }

    #[test]
    fn no_error_gives_intended() {
        let p = program(ErrorSchedule::Probability(0.0), Compliance::CompliesWithGuidance);
        assert_eq!(scripted_actor_step(&p, 2, 1, None).unwrap(), p.turns[1].intended);
    }

    /// (compliance, guidance present) -> proposes intended?
    #[test]
    fn compliance_table() {
        let table = [
            (Compliance::CompliesWithGuidance, false, false),
            (Compliance::CompliesWithGuidance, true, true),
            (Compliance::IgnoresGuidance, false, false),
            (Compliance::IgnoresGuidance, true, false),
        ];
        for (compliance, guided, intended) in table {
            let p = program(fixed_at_2(), compliance);
            let got = scripted_actor_step(&p, 2, 0, guided.then_some("refund to the card")).unwrap();
            assert_eq!(got == p.turns[1].intended, intended, "{compliance} guided={guided}");
        }
    }

    #[test]
    fn out_of_range_turns() {
        let p = program(fixed_at_2(), Compliance::IgnoresGuidance);
        assert!(matches!(scripted_actor_step(&p, 0, 0, None), Err(ScriptError::TurnOutOfRange { .. })));
        assert!(matches!(scripted_actor_step(&p, 3, 0, None), Err(ScriptError::TurnOutOfRange { .. })));
    }

    #[test]
    fn schedule_validation() {
        let mut p = program(ErrorSchedule::Fixed(BTreeMap::from([(1, ErrorMode::ViolateConstraint)])), Compliance::IgnoresGuidance);
        assert!(p.validate().is_err());
        p.error_schedule = ErrorSchedule::Fixed(BTreeMap::from([(9, ErrorMode::ViolateConstraint)]));
        assert!(p.validate().is_err());
        p.error_schedule = ErrorSchedule::Probability(1.5);
        assert!(p.validate().is_err());
        p.error_schedule = fixed_at_2();
        assert!(p.validate().is_ok());
    }

    #[test]
    fn probability_schedule_is_deterministic_and_calibrated() {
        let p = program(ErrorSchedule::Probability(0.3), Compliance::IgnoresGuidance);
        let fired = (0..2000u64).filter(|s| p.fired_mode(2, *s).is_some()).count();
        assert!((500..700).contains(&fired), "{fired}");
        for s in 0..50 {
            assert_eq!(scripted_actor_step(&p, 2, s, None), scripted_actor_step(&p, 2, s, None));
        }
        // turn 1 has nothing to perturb
        assert!((0..200u64).all(|s| p.fired_mode(1, s).is_none()));
    }
}
