//! Preference-elicitation travel planner.
//!
//! A task lists the bookable options for a few travel aspects and a set of
//! hidden user preferences per aspect. Some preferences are stated up
//! front; the rest surface only when the agent asks about them. The agent
//! recommends one option per aspect. An aspect scores 1 for a recommendation
//! that satisfies every preference at the lowest price, 4/5 for a satisfying
//! but pricier one, and 0 otherwise.

pub mod generator;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    check_args, Assessment, CriticContext, EnvError, Environment, Finding, GroundTruthProbe,
    Transition,
};
use crate::model::{ActionProposal, EnvKind, Observation, RewardComponent, RewardValue, TaskSpec};
use crate::plan::ActorPlan;
use crate::score::Score;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(i64),
    Text(String),
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Number(n) => write!(f, "{n}"),
            AttrValue::Text(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TravelOption {
    pub option_id: String,
    /// Whole currency units.
    pub price: u64,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl TravelOption {
    /// `price` is addressable like any other attribute.
    pub fn attribute(&self, name: &str) -> Option<AttrValue> {
        if name == "price" {
            return Some(AttrValue::Number(self.price as i64));
        }
        self.attributes.get(name).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectOptions {
    pub aspect: String,
    pub options: Vec<TravelOption>,
}

impl AspectOptions {
    pub fn get(&self, option_id: &str) -> Option<&TravelOption> {
        self.options.iter().find(|o| o.option_id == option_id)
    }

    pub fn render(&self) -> String {
        self.options
            .iter()
            .map(|o| {
                let attrs = o.attributes.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ");
                format!("- {}: price={}, {attrs}", o.option_id, o.price)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "=")]
    Equals,
    #[serde(rename = "in")]
    In,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Set(Vec<AttrValue>),
    Value(AttrValue),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preference {
    pub attribute: String,
    pub comparator: Comparator,
    pub threshold: Threshold,
    /// Known to the agent from the opening message.
    pub revealed: bool,
    /// Lower-case words that make the user state this preference.
    pub reveal_trigger: BTreeSet<String>,
    pub statement: String,
}

impl Preference {
    /// A missing attribute or a type mismatch never satisfies.
    pub fn satisfied_by(&self, option: &TravelOption) -> bool {
        let Some(value) = option.attribute(&self.attribute) else {
            return false;
        };
        match (self.comparator, &self.threshold, &value) {
            (Comparator::AtLeast, Threshold::Value(AttrValue::Number(t)), AttrValue::Number(v)) => v >= t,
            (Comparator::AtMost, Threshold::Value(AttrValue::Number(t)), AttrValue::Number(v)) => v <= t,
            (Comparator::Equals, Threshold::Value(t), v) => t == v,
            (Comparator::In, Threshold::Set(set), v) => set.contains(v),
            _ => false,
        }
    }

    fn well_formed(&self) -> bool {
        matches!(
            (self.comparator, &self.threshold),
            (Comparator::AtLeast | Comparator::AtMost, Threshold::Value(AttrValue::Number(_)))
                | (Comparator::Equals, Threshold::Value(_))
                | (Comparator::In, Threshold::Set(_))
        )
    }
}

pub type PreferenceSet = BTreeMap<String, Vec<Preference>>;

pub fn satisfies_all(prefs: &[Preference], option: &TravelOption) -> bool {
    prefs.iter().all(|p| p.satisfied_by(option))
}

/// Score of recommending `option_id` for one aspect.
pub fn aspect_reward(options: &AspectOptions, prefs: &[Preference], option_id: &str) -> Result<Score, EnvError> {
    let chosen = options.get(option_id).ok_or_else(|| EnvError::UnknownOption {
        aspect: options.aspect.clone(),
        option_id: option_id.to_string(),
    })?;
    if !satisfies_all(prefs, chosen) {
        return Ok(Score::ZERO);
    }
    let cheapest = options
        .options
        .iter()
        .filter(|o| satisfies_all(prefs, o))
        .map(|o| o.price)
        .min()
        .expect("the chosen option satisfies");
    Ok(if chosen.price == cheapest { Score::ONE } else { Score::PARTIAL })
}

/// Options scoring 1, sorted by id.
pub fn optimal_options(options: &AspectOptions, prefs: &[Preference]) -> Vec<String> {
    let satisfying: Vec<&TravelOption> = options.options.iter().filter(|o| satisfies_all(prefs, o)).collect();
    let Some(min) = satisfying.iter().map(|o| o.price).min() else {
        return Vec::new();
    };
    let mut ids: Vec<String> =
        satisfying.iter().filter(|o| o.price == min).map(|o| o.option_id.clone()).collect();
    ids.sort();
    ids
}

/// Lower-case alphanumeric words.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub const NEUTRAL_REPLY: &str = "I don't have any other requirements to mention there.";

/// Simulated user. Every preference whose trigger words appear in
/// `question` is stated; unrevealed ones become revealed. With no trigger
/// overlap the reply is neutral and nothing changes.
pub fn user_reply(prefs: &PreferenceSet, question: &str) -> (String, PreferenceSet) {
    let words = tokens(question);
    let mut next = prefs.clone();
    let mut said = Vec::new();
    for p in next.values_mut().flatten() {
        if !p.reveal_trigger.is_disjoint(&words) {
            p.revealed = true;
            said.push(p.statement.clone());
        }
    }
    let reply = if said.is_empty() { NEUTRAL_REPLY.to_string() } else { said.join(" ") };
    (reply, next)
}

/// First recommendation per aspect is binding; later ones are refused.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecommendationLedger {
    aspects: BTreeSet<String>,
    accepted: BTreeMap<String, String>,
}

impl RecommendationLedger {
    pub fn new<I: IntoIterator<Item = String>>(aspects: I) -> Self {
        Self { aspects: aspects.into_iter().collect(), accepted: BTreeMap::new() }
    }

    /// `Ok(true)` when accepted, `Ok(false)` when the aspect already has one.
    pub fn record(&mut self, aspect: &str, option_id: &str) -> Result<bool, EnvError> {
        if !self.aspects.contains(aspect) {
            return Err(EnvError::UnknownAspect(aspect.to_string()));
        }
        if self.accepted.contains_key(aspect) {
            return Ok(false);
        }
        self.accepted.insert(aspect.to_string(), option_id.to_string());
        Ok(true)
    }

    pub fn get(&self, aspect: &str) -> Option<&str> {
        self.accepted.get(aspect).map(String::as_str)
    }

    pub fn is_complete(&self) -> bool {
        self.accepted.len() == self.aspects.len()
    }

    pub fn accepted(&self) -> &BTreeMap<String, String> {
        &self.accepted
    }
}

/// Success criterion: the score-1 option ids of every aspect.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TravelCriterion {
    pub optimal: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TravelTask {
    pub spec: TaskSpec,
    pub aspects: Vec<AspectOptions>,
    pub preferences: PreferenceSet,
    pub opening: String,
    pub actor_plan: ActorPlan,
}

impl TravelTask {
    pub fn aspect(&self, name: &str) -> Option<&AspectOptions> {
        self.aspects.iter().find(|a| a.aspect == name)
    }

    pub fn prefs(&self, aspect: &str) -> &[Preference] {
        self.preferences.get(aspect).map_or(&[], Vec::as_slice)
    }

    pub fn criterion(&self) -> Result<TravelCriterion, EnvError> {
        serde_json::from_value(self.spec.success_criterion.clone())
            .map_err(|e| EnvError::Fixture(format!("travel success criterion: {e}")))
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::Fixture(format!("{}: {msg}", self.spec.task_id)));
        self.spec.validate().map_err(|e| EnvError::Fixture(e.to_string()))?;
        if self.spec.environment_id != EnvKind::Travel {
            return bad("not a travel task".into());
        }
        if self.aspects.is_empty() {
            return bad("no aspects".into());
        }
        let names: BTreeSet<&str> = self.aspects.iter().map(|a| a.aspect.as_str()).collect();
        if names.len() != self.aspects.len() {
            return bad("duplicate aspect".into());
        }
        for a in &self.aspects {
            let ids: BTreeSet<&str> = a.options.iter().map(|o| o.option_id.as_str()).collect();
            if ids.len() != a.options.len() {
                return bad(format!("duplicate option id in `{}`", a.aspect));
            }
            if a.options.iter().any(|o| o.price == 0) {
                return bad(format!("non-positive price in `{}`", a.aspect));
            }
        }
        if let Some(extra) = self.preferences.keys().find(|k| !names.contains(k.as_str())) {
            return bad(format!("preferences for unknown aspect `{extra}`"));
        }
        if self.preferences.values().flatten().any(|p| !p.well_formed()) {
            return bad("comparator does not fit its threshold".into());
        }
        if self.preferences.values().flatten().any(|p| !p.revealed && p.reveal_trigger.is_empty()) {
            return bad("unrevealed preference without trigger words".into());
        }
        let criterion = self.criterion()?;
        for a in &self.aspects {
            let optimal = optimal_options(a, self.prefs(&a.aspect));
            if optimal.is_empty() {
                return bad(format!("no option satisfies every preference for `{}`", a.aspect));
            }
            if criterion.optimal.get(&a.aspect) != Some(&optimal) {
                return bad(format!("stored optimum for `{}` is wrong", a.aspect));
            }
        }
        if criterion.optimal.len() != self.aspects.len() {
            return bad("criterion names an unknown aspect".into());
        }
        Ok(())
    }
}

pub struct TravelEnv {
    task: TravelTask,
    prefs: PreferenceSet,
    ledger: RecommendationLedger,
}

impl TravelEnv {
    pub fn new(task: TravelTask) -> Result<Self, EnvError> {
        task.validate()?;
        let prefs = task.preferences.clone();
        let ledger = RecommendationLedger::new(task.aspects.iter().map(|a| a.aspect.clone()));
        Ok(Self { task, prefs, ledger })
    }

    pub fn ledger(&self) -> &RecommendationLedger {
        &self.ledger
    }

    /// Preferences with their current reveal state.
    pub fn preferences(&self) -> &PreferenceSet {
        &self.prefs
    }

    pub fn task(&self) -> &TravelTask {
        &self.task
    }
}

impl Environment for TravelEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Travel
    }

    fn initial_observation(&self) -> Observation {
        Observation::user(1, self.task.opening.clone())
    }

    fn actor_system_prompt(&self) -> String {
        let aspects = self.task.aspects.iter().map(|a| a.aspect.as_str()).collect::<Vec<_>>().join(", ");
        format!(
            "You are a travel planning assistant. Recommend exactly one option for each of these aspects: \
             {aspects}. Ask the user about their preferences before recommending, and pick the cheapest \
             option that satisfies all of them.\n\n# Tools\n{}\n\n\
             To call a tool, reply with a fenced block:\n```tool_call <tool_name>\n<arg> = \"<value>\"\n```\n\
             To recommend, reply with:\n```recommendation\naspect = \"<aspect>\"\noption_id = \"<option id>\"\n```\n\
             Otherwise reply with a plain message to the user.",
            self.registry().describe(),
        )
    }

    fn critic_context(&self, proposal: &ActionProposal) -> CriticContext {
        match proposal {
            ActionProposal::Recommendation { aspect, .. } => CriticContext {
                context: self.task.aspect(aspect).map_or_else(String::new, AspectOptions::render),
                aspect: Some(aspect.clone()),
            },
            _ => CriticContext {
                context: self
                    .task
                    .aspects
                    .iter()
                    .map(|a| format!("{}:\n{}", a.aspect, a.render()))
                    .collect::<Vec<_>>()
                    .join("\n"),
                aspect: Some(self.task.aspects.iter().map(|a| a.aspect.as_str()).collect::<Vec<_>>().join(", ")),
            },
        }
    }

    fn step(&mut self, action: &ActionProposal, turn: u32) -> Result<Transition, EnvError> {
        let next = turn + 1;
        let observation = match action {
            ActionProposal::Message { text } => {
                let (reply, prefs) = user_reply(&self.prefs, text);
                self.prefs = prefs;
                Observation::user(next, reply)
            }
            ActionProposal::ToolCall { tool_name, tool_args, .. } => {
                let spec = self
                    .registry()
                    .get(tool_name)
                    .ok_or_else(|| EnvError::UnknownTool(tool_name.clone()))?;
                check_args(spec, tool_args)?;
                let aspect = tool_args["aspect"].as_text().expect("checked by check_args");
                let result = match self.task.aspect(aspect) {
                    Some(a) => serde_json::to_value(&a.options).expect("serializable"),
                    None => serde_json::json!({ "error": format!("unknown aspect {aspect}") }),
                };
                Observation::tool(next, result)
            }
            ActionProposal::Recommendation { aspect, option_id, .. } => {
                let known = self.task.aspect(aspect).is_some_and(|a| a.get(option_id).is_some());
                let text = if !known {
                    format!("recommendation refused: {aspect} has no option {option_id}")
                } else {
                    match self.ledger.record(aspect, option_id)? {
                        true => format!("recommendation recorded: {aspect} -> {option_id}"),
                        false => format!("recommendation refused: {aspect} already has a recommendation"),
                    }
                };
                Observation::system(next, text)
            }
        };
        Ok(Transition { observation, done: self.ledger.is_complete() })
    }

    fn evaluate(&self) -> RewardValue {
        let breakdown: Vec<RewardComponent> = self
            .task
            .aspects
            .iter()
            .map(|a| {
                let value = match self.ledger.get(&a.aspect) {
                    Some(id) => aspect_reward(a, self.task.prefs(&a.aspect), id).expect("ledger holds known options"),
                    None => Score::ZERO,
                };
                let mismatches = if value == Score::ONE {
                    Vec::new()
                } else {
                    vec![format!("{} -> {}", a.aspect, self.ledger.get(&a.aspect).unwrap_or("none"))]
                };
                RewardComponent { name: a.aspect.clone(), value, mismatches }
            })
            .collect();
        let value = Score::mean(breakdown.iter().map(|c| c.value)).expect("tasks have aspects");
        RewardValue { value, breakdown }
    }

    fn probe(&self) -> &dyn GroundTruthProbe {
        self
    }
}

impl GroundTruthProbe for TravelEnv {
    fn assess(&self, proposal: &ActionProposal) -> Assessment {
        let ActionProposal::Recommendation { aspect, option_id, .. } = proposal else {
            return match proposal.tool_name() {
                Some(name) if self.registry().get(name).is_none() => {
                    Assessment::off(Finding::Mismatch, format!("`{name}` is not an available tool"))
                }
                _ => Assessment::ok(),
            };
        };
        let Some(options) = self.task.aspect(aspect) else {
            return Assessment::off(Finding::Mismatch, format!("`{aspect}` is not one of the requested aspects"));
        };
        if let Some(prev) = self.ledger.get(aspect) {
            return Assessment::off(Finding::Redundant, format!("{aspect} already has a recommendation ({prev})"));
        }
        let prefs = self.task.prefs(aspect);
        match aspect_reward(options, prefs, option_id) {
            Err(_) => Assessment::off(Finding::Mismatch, format!("{option_id} is not an available {aspect} option")),
            Ok(s) if s == Score::ONE => Assessment::ok(),
            Ok(s) if s == Score::ZERO => {
                let chosen = options.get(option_id).expect("scored");
                let broken = prefs
                    .iter()
                    .filter(|p| !p.satisfied_by(chosen))
                    .map(|p| p.statement.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                Assessment::off(Finding::Violation, broken)
            }
            Ok(_) => {
                let best = optimal_options(options, prefs).join(", ");
                Assessment::off(Finding::Suboptimal, format!("a cheaper option meeting every preference exists: {best}"))
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::ArgValue;

    fn opt(id: &str, price: u64, stops: i64, airline: &str) -> TravelOption {
        TravelOption {
            option_id: id.into(),
            price,
            attributes: BTreeMap::from([
                ("stops".to_string(), AttrValue::Number(stops)),
                ("airline".to_string(), AttrValue::Text(airline.into())),
            ]),
        }
    }

    fn pref(attribute: &str, comparator: Comparator, threshold: Threshold, trigger: &[&str]) -> Preference {
        Preference {
            attribute: attribute.into(),
            comparator,
            threshold,
            revealed: false,
            reveal_trigger: trigger.iter().map(|s| s.to_string()).collect(),
            statement: format!("{attribute} matters."),
        }
    }

    pub(crate) fn flights() -> (AspectOptions, Vec<Preference>) {
        let options = AspectOptions {
            aspect: "flight".into(),
            options: vec![
                opt("F1", 300, 2, "Aero"),
                opt("F2", 420, 0, "Aero"),
                opt("F3", 450, 1, "Blue"),
                opt("F4", 510, 0, "Aero"),
                opt("F5", 420, 1, "Aero"),
            ],
        };
        let prefs = vec![
            pref("stops", Comparator::AtMost, Threshold::Value(AttrValue::Number(1)), &["stops"]),
            pref("airline", Comparator::In, Threshold::Set(vec![AttrValue::Text("Aero".into())]), &["airline"]),
        ];
        (options, prefs)
    }

    #[test]
    fn reward_table() {
        let (options, prefs) = flights();
        let expect = [("F1", Score::ZERO), ("F2", Score::ONE), ("F3", Score::ZERO), ("F4", Score::PARTIAL), ("F5", Score::ONE)];
        for (id, want) in expect {
            assert_eq!(aspect_reward(&options, &prefs, id).unwrap(), want, "{id}");
        }
        assert!(matches!(aspect_reward(&options, &prefs, "F9"), Err(EnvError::UnknownOption { .. })));
        assert_eq!(optimal_options(&options, &prefs), vec!["F2", "F5"]);
    }

    #[test]
    fn price_is_an_attribute() {
        let (options, _) = flights();
        let p = pref("price", Comparator::AtMost, Threshold::Value(AttrValue::Number(420)), &[]);
        assert!(p.satisfied_by(options.get("F2").unwrap()));
        assert!(!p.satisfied_by(options.get("F4").unwrap()));
    }

    #[test]
    fn type_mismatch_never_satisfies() {
        let (options, _) = flights();
        let p = pref("airline", Comparator::AtLeast, Threshold::Value(AttrValue::Number(1)), &[]);
        assert!(!p.satisfied_by(options.get("F2").unwrap()));
        let missing = pref("wifi", Comparator::Equals, Threshold::Value(AttrValue::Text("yes".into())), &[]);
        assert!(!missing.satisfied_by(options.get("F2").unwrap()));
    }

    #[test]
    fn ledger_keeps_first() {
        let mut l = RecommendationLedger::new(["flight".to_string(), "apartment".to_string()]);
        assert!(l.record("flight", "F2").unwrap());
        assert!(!l.record("flight", "F4").unwrap());
        assert_eq!(l.get("flight"), Some("F2"));
        assert!(!l.is_complete());
        assert_eq!(l.record("cruise", "C1"), Err(EnvError::UnknownAspect("cruise".into())));
        assert!(l.record("apartment", "A1").unwrap());
        assert!(l.is_complete());
    }

    #[test]
    fn user_reveals_on_trigger() {
        let (_, prefs) = flights();
        let mut set = PreferenceSet::from([("flight".to_string(), prefs)]);
        let budget = Preference {
            statement: "Keep it under 500.".into(),
            ..pref("price", Comparator::AtMost, Threshold::Value(AttrValue::Number(500)), &["budget", "price", "cost"])
        };
        set.get_mut("flight").unwrap().push(budget);

        let (reply, same) = user_reply(&set, "Hello there");
        assert_eq!(reply, NEUTRAL_REPLY);
        assert_eq!(same, set);

        let (reply, after) = user_reply(&set, "What is your BUDGET for this?");
        assert_eq!(reply, "Keep it under 500.");
        let flags: Vec<bool> = after["flight"].iter().map(|p| p.revealed).collect();
        assert_eq!(flags, vec![false, false, true]);

        let (again, unchanged) = user_reply(&after, "and the price?");
        assert_eq!(again, "Keep it under 500.");
        assert_eq!(unchanged, after);
    }

    fn task() -> TravelTask {
        let (options, prefs) = flights();
        let criterion = TravelCriterion {
            optimal: BTreeMap::from([("flight".to_string(), vec!["F2".to_string(), "F5".to_string()])]),
        };
        TravelTask {
            spec: TaskSpec {
                task_id: "travel-t".into(),
                environment_id: EnvKind::Travel,
                instruction: "Book a flight.".into(),
                user_script_id: "travel-t/user".into(),
                success_criterion: serde_json::to_value(criterion).unwrap(),
                horizon: 4,
            },
            aspects: vec![options],
            preferences: PreferenceSet::from([("flight".to_string(), prefs)]),
            opening: "Book a flight.".into(),
            actor_plan: Vec::new(),
        }
    }

    #[test]
    fn env_episode() {
        let mut env = TravelEnv::new(task()).unwrap();
        let listed = env
            .step(&ActionProposal::tool_call("list_options", [("aspect", ArgValue::from("flight"))]), 1)
            .unwrap();
        assert_eq!(listed.observation.tool_result.unwrap().as_array().unwrap().len(), 5);
        assert!(!listed.done);
        assert_eq!(env.probe().assess(&ActionProposal::recommendation("flight", "F4")).finding, Some(Finding::Suboptimal));
        assert_eq!(env.probe().assess(&ActionProposal::recommendation("flight", "F3")).finding, Some(Finding::Violation));
        let t = env.step(&ActionProposal::recommendation("flight", "F5"), 2).unwrap();
        assert!(t.done);
        assert_eq!(env.evaluate().value, Score::ONE);
        assert_eq!(env.probe().assess(&ActionProposal::recommendation("flight", "F2")).finding, Some(Finding::Redundant));
    }

    #[test]
    fn unrecommended_aspect_scores_zero() {
        let env = TravelEnv::new(task()).unwrap();
        assert_eq!(env.evaluate().value, Score::ZERO);
    }

    #[test]
    fn wrong_criterion_is_rejected() {
        let mut t = task();
        t.spec.success_criterion = serde_json::json!({ "optimal": { "flight": ["F2"] } });
        assert!(t.validate().is_err());
    }
}
