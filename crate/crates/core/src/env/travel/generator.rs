//! Seeded generator for travel task fixtures.
//!
//! Preferences are derived from a target option so every aspect has a
//! satisfying choice. Each aspect is guaranteed a strictly pricier
//! satisfying option and at least one violating option, so all three
//! scripted error modes have something to pick.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    aspect_reward, optimal_options, satisfies_all, AspectOptions, AttrValue, Comparator, Preference, PreferenceSet,
    Threshold, TravelCriterion, TravelOption, TravelTask,
};
use crate::env::EnvError;
use crate::model::{ActionProposal, EnvKind, TaskSpec};
use crate::plan::{ErrorMode, TurnPlan};
use crate::rng::stream;
use crate::score::Score;

#[derive(Clone, Copy)]
enum Domain {
    /// Inclusive integer range with the comparator a user would use.
    Range(i64, i64, Comparator),
    Choice(&'static [&'static str]),
}

struct AttrSpec {
    name: &'static str,
    domain: Domain,
    triggers: &'static [&'static str],
    noun: &'static str,
}

struct AspectSpec {
    aspect: &'static str,
    prefix: &'static str,
    price: (u64, u64),
    attrs: &'static [AttrSpec],
}

const ASPECTS: &[AspectSpec] = &[
    AspectSpec {
        aspect: "flight",
        prefix: "F",
        price: (120, 900),
        attrs: &[
            AttrSpec { name: "stops", domain: Domain::Range(0, 2, Comparator::AtMost), triggers: &["stops", "layovers"], noun: "number of stops" },
            AttrSpec { name: "departure_hour", domain: Domain::Range(6, 21, Comparator::AtLeast), triggers: &["departure", "depart"], noun: "departure hour" },
            AttrSpec { name: "airline", domain: Domain::Choice(&["Aerolux", "BlueJet", "Cirrus", "Nordair"]), triggers: &["airline", "carrier"], noun: "airline" },
            AttrSpec { name: "cabin", domain: Domain::Choice(&["economy", "premium"]), triggers: &["cabin", "seating"], noun: "cabin" },
        ],
    },
    AspectSpec {
        aspect: "apartment",
        prefix: "A",
        price: (60, 400),
        attrs: &[
            AttrSpec { name: "bedrooms", domain: Domain::Range(1, 4, Comparator::AtLeast), triggers: &["bedrooms", "bedroom"], noun: "number of bedrooms" },
            AttrSpec { name: "guest_rating", domain: Domain::Range(3, 5, Comparator::AtLeast), triggers: &["reviews", "guests"], noun: "guest rating" },
            AttrSpec { name: "neighborhood", domain: Domain::Choice(&["old town", "harbor", "university", "riverside"]), triggers: &["neighborhood", "area"], noun: "neighborhood" },
            AttrSpec { name: "wifi", domain: Domain::Choice(&["yes", "no"]), triggers: &["wifi", "internet"], noun: "wifi" },
        ],
    },
    AspectSpec {
        aspect: "rental_car",
        prefix: "C",
        price: (30, 160),
        attrs: &[
            AttrSpec { name: "seats", domain: Domain::Range(2, 7, Comparator::AtLeast), triggers: &["seats", "passengers"], noun: "number of seats" },
            AttrSpec { name: "transmission", domain: Domain::Choice(&["automatic", "manual"]), triggers: &["transmission", "gearbox"], noun: "transmission" },
            AttrSpec { name: "fuel", domain: Domain::Choice(&["petrol", "hybrid", "electric"]), triggers: &["fuel", "engine"], noun: "fuel type" },
            AttrSpec { name: "luggage", domain: Domain::Range(1, 5, Comparator::AtLeast), triggers: &["luggage", "bags"], noun: "luggage capacity" },
        ],
    },
    AspectSpec {
        aspect: "restaurant",
        prefix: "R",
        price: (20, 180),
        attrs: &[
            AttrSpec { name: "cuisine", domain: Domain::Choice(&["italian", "thai", "mexican", "japanese", "indian"]), triggers: &["cuisine", "food"], noun: "cuisine" },
            AttrSpec { name: "stars", domain: Domain::Range(1, 5, Comparator::AtLeast), triggers: &["stars", "star"], noun: "star rating" },
            AttrSpec { name: "distance_km", domain: Domain::Range(1, 12, Comparator::AtMost), triggers: &["distance", "walk"], noun: "distance in km" },
            AttrSpec { name: "outdoor", domain: Domain::Choice(&["yes", "no"]), triggers: &["outdoor", "terrace"], noun: "outdoor seating" },
        ],
    },
];

fn random_value(rng: &mut ChaCha8Rng, domain: Domain) -> AttrValue {
    match domain {
        Domain::Range(lo, hi, _) => AttrValue::Number(rng.gen_range(lo..=hi)),
        Domain::Choice(items) => AttrValue::Text(items[rng.gen_range(0..items.len())].to_string()),
    }
}

fn random_option(rng: &mut ChaCha8Rng, spec: &AspectSpec, id: String) -> TravelOption {
    let attributes = spec.attrs.iter().map(|a| (a.name.to_string(), random_value(rng, a.domain))).collect();
    let price = rng.gen_range(spec.price.0 / 5..=spec.price.1 / 5) * 5;
    TravelOption { option_id: id, price, attributes }
}

fn derive_preference(rng: &mut ChaCha8Rng, aspect: &str, attr: &AttrSpec, target: &AttrValue) -> Preference {
    let (comparator, threshold, wish) = match (attr.domain, target) {
        (Domain::Range(lo, hi, cmp), AttrValue::Number(v)) => {
            // loosen the bound a little so several options qualify
            let t = match cmp {
                Comparator::AtMost => (*v + rng.gen_range(0..=1)).min(hi),
                _ => (*v - rng.gen_range(0..=1)).max(lo),
            };
            let word = if cmp == Comparator::AtMost { "at most" } else { "at least" };
            (cmp, Threshold::Value(AttrValue::Number(t)), format!("{word} {t}"))
        }
        (Domain::Choice(items), AttrValue::Text(v)) if items.len() > 2 && rng.gen_bool(0.5) => {
            let other = items.iter().find(|i| **i != v).expect("several choices");
            let mut set = vec![AttrValue::Text(v.clone()), AttrValue::Text(other.to_string())];
            set.sort();
            let wish = format!("either {} or {}", set[0], set[1]);
            (Comparator::In, Threshold::Set(set), wish)
        }
        (_, v) => (Comparator::Equals, Threshold::Value(v.clone()), v.to_string()),
    };
    Preference {
        attribute: attr.name.to_string(),
        comparator,
        threshold,
        revealed: false,
        reveal_trigger: attr.triggers.iter().map(|s| s.to_string()).collect(),
        statement: format!("For the {}, the {} should be {wish}.", aspect.replace('_', " "), attr.noun),
    }
}

/// Replaces the value of `pref.attribute` on `option` with one that breaks it.
fn break_preference(option: &mut TravelOption, pref: &Preference, attr: &AttrSpec) {
    let value = match (attr.domain, &pref.threshold) {
        (Domain::Range(lo, hi, _), Threshold::Value(AttrValue::Number(t))) => match pref.comparator {
            Comparator::AtMost => AttrValue::Number((t + 1).max(lo)),
            _ => AttrValue::Number((t - 1).min(hi)),
        },
        (Domain::Choice(items), threshold) => {
            let allowed: Vec<&AttrValue> = match threshold {
                Threshold::Set(s) => s.iter().collect(),
                Threshold::Value(v) => vec![v],
            };
            items
                .iter()
                .map(|i| AttrValue::Text(i.to_string()))
                .find(|v| !allowed.contains(&v))
                .expect("choice domains are wider than a preference")
        }
        _ => return,
    };
    option.attributes.insert(pref.attribute.clone(), value);
}

struct BuiltAspect {
    options: AspectOptions,
    prefs: Vec<Preference>,
}

fn build_aspect(rng: &mut ChaCha8Rng, spec: &AspectSpec, difficulty: usize) -> BuiltAspect {
    loop {
        let n = rng.gen_range(10..=14);
        let mut options: Vec<TravelOption> =
            (0..n).map(|i| random_option(rng, spec, format!("{}{}", spec.prefix, 101 + i))).collect();
        let target = options[rng.gen_range(0..n)].clone();

        let mut chosen: Vec<&AttrSpec> = spec.attrs.iter().collect();
        chosen.shuffle(rng);
        chosen.truncate(difficulty);
        let prefs: Vec<Preference> =
            chosen.iter().map(|a| derive_preference(rng, spec.aspect, a, &target.attributes[a.name])).collect();

        // a strictly pricier twin of the target
        let twin_slot = (options.iter().position(|o| o.option_id == target.option_id).unwrap() + 1) % n;
        options[twin_slot].attributes = target.attributes.clone();
        options[twin_slot].price = target.price + rng.gen_range(1..=20) * 5;
        // and a cheap option breaking the first breakable preference
        let breaker = (twin_slot + 1) % n;
        if options[breaker].option_id != target.option_id {
            if let Some((p, a)) = prefs.iter().zip(&chosen).find(|(p, a)| {
                let mut probe = target.clone();
                break_preference(&mut probe, p, a);
                !p.satisfied_by(&probe)
            }) {
                options[breaker].attributes = target.attributes.clone();
                break_preference(&mut options[breaker], p, a);
                options[breaker].price = spec.price.0;
            }
        }

        let built = AspectOptions { aspect: spec.aspect.to_string(), options };
        let satisfying: Vec<u64> =
            built.options.iter().filter(|o| satisfies_all(&prefs, o)).map(|o| o.price).collect();
        let violating = built.options.len() - satisfying.len();
        let spread = satisfying.iter().min() < satisfying.iter().max();
        if satisfying.len() >= 2 && spread && violating >= 1 {
            return BuiltAspect { options: built, prefs };
        }
    }
}

fn cheapest<'a, I: Iterator<Item = &'a TravelOption>>(it: I) -> Option<&'a TravelOption> {
    it.min_by(|a, b| a.price.cmp(&b.price).then_with(|| a.option_id.cmp(&b.option_id)))
}

fn recommendation_turn(aspect: &str, options: &AspectOptions, prefs: &[Preference]) -> TurnPlan {
    let satisfying = || options.options.iter().filter(|o| satisfies_all(prefs, o));
    let best = cheapest(satisfying()).expect("aspect has a satisfying option");
    let violate = cheapest(options.options.iter().filter(|o| !satisfies_all(prefs, o))).expect("aspect has a violator");
    let suboptimal = cheapest(satisfying().filter(|o| o.price > best.price)).expect("aspect has a pricier option");
    let lavish = satisfying()
        .max_by(|a, b| a.price.cmp(&b.price).then_with(|| b.option_id.cmp(&a.option_id)))
        .expect("non-empty");
    let label = aspect.replace('_', " ");
    TurnPlan::new(ActionProposal::recommendation(aspect, &best.option_id))
        .with(ErrorMode::ViolateConstraint, ActionProposal::recommendation(aspect, &violate.option_id))
        .with(ErrorMode::SuboptimalChoice, ActionProposal::recommendation(aspect, &suboptimal.option_id))
        .with(
            ErrorMode::HallucinateConstraint,
            ActionProposal::recommendation(aspect, &lavish.option_id)
                .with_text(format!("Since you said you want the most premium {label} available,")),
        )
}

fn build_task(seed: u64, index: usize, difficulty: Option<usize>) -> TravelTask {
    let mut rng = stream(seed, &format!("travel-task-{index}"));
    let mut specs: Vec<&AspectSpec> = ASPECTS.iter().collect();
    specs.shuffle(&mut rng);
    specs.truncate(2);
    specs.sort_by_key(|s| s.aspect);
    let difficulty = difficulty.unwrap_or(2 + index % 3);

    let mut aspects = Vec::new();
    let mut preferences = PreferenceSet::new();
    let mut plan = Vec::new();
    let mut stated = Vec::new();
    let mut optimal = BTreeMap::new();
    for spec in &specs {
        let BuiltAspect { options, mut prefs } = build_aspect(&mut rng, spec, difficulty);
        prefs[0].revealed = true;
        stated.push(prefs[0].statement.clone());
        plan.push(TurnPlan::new(ActionProposal::tool_call("list_options", [("aspect", spec.aspect)])));
        for p in prefs.iter().skip(1) {
            let word = p.reveal_trigger.iter().next().expect("triggers are non-empty");
            plan.push(TurnPlan::new(ActionProposal::message(format!(
                "Do you have any requirement about the {word} for the {}?",
                spec.aspect.replace('_', " ")
            ))));
        }
        plan.push(recommendation_turn(spec.aspect, &options, &prefs));
        optimal.insert(spec.aspect.to_string(), optimal_options(&options, &prefs));
        preferences.insert(spec.aspect.to_string(), prefs);
        aspects.push(options);
    }
    let wanted: Vec<String> = specs.iter().map(|s| s.aspect.replace('_', " ")).collect();
    let opening = format!(
        "Hi! I'm planning a trip and need a {} and a {}. {} I'd like to keep costs down.",
        wanted[0],
        wanted[1],
        stated.join(" ")
    );
    let task_id = format!("travel-{index:03}");
    TravelTask {
        spec: TaskSpec {
            task_id: task_id.clone(),
            environment_id: EnvKind::Travel,
            instruction: opening.clone(),
            user_script_id: format!("{task_id}/user"),
            success_criterion: serde_json::to_value(TravelCriterion { optimal }).expect("serializable"),
            horizon: plan.len() as u32,
        },
        aspects,
        preferences,
        opening,
        actor_plan: plan,
    }
}

pub const DIFFICULTIES: std::ops::RangeInclusive<usize> = 2..=4;

/// `n` solvable tasks with `difficulty` preferences per aspect, or a
/// rotation through every tier when `None`. Identical arguments give
/// identical fixtures.
pub fn generate(n: usize, seed: u64, difficulty: Option<usize>) -> Result<Vec<TravelTask>, EnvError> {
    if let Some(d) = difficulty.filter(|d| !DIFFICULTIES.contains(d)) {
        return Err(EnvError::Fixture(format!("difficulty {d} is outside 2..=4")));
    }
    Ok((0..n).map(|i| build_task(seed, i, difficulty)).collect())
}

/// Fixture post-conditions: the task validates, option counts stay within
/// 20 per aspect, trigger words do not collide across preferences, and each
/// recommendation perturbation scores what its mode implies.
pub fn check_fixture(task: &TravelTask) -> Result<(), EnvError> {
    task.validate()?;
    let fail = |msg: String| Err(EnvError::Fixture(format!("{}: {msg}", task.spec.task_id)));
    if task.aspects.iter().any(|a| a.options.len() > 20) {
        return fail("more than 20 options for an aspect".into());
    }
    let mut seen = BTreeSet::new();
    for word in task.preferences.values().flatten().flat_map(|p| &p.reveal_trigger) {
        if !seen.insert(word) {
            return fail(format!("trigger word `{word}` is shared"));
        }
    }
    for turn in &task.actor_plan {
        let ActionProposal::Recommendation { aspect, option_id, .. } = &turn.intended else {
            continue;
        };
        let options = task.aspect(aspect).ok_or_else(|| EnvError::UnknownAspect(aspect.clone()))?;
        let prefs = task.prefs(aspect);
        if aspect_reward(options, prefs, option_id)? != Score::ONE {
            return fail(format!("intended {aspect} recommendation is not optimal"));
        }
        for (mode, action) in &turn.perturbations {
            let ActionProposal::Recommendation { option_id, .. } = action else {
                return fail(format!("{mode} perturbation is not a recommendation"));
            };
            let want = match mode {
                ErrorMode::ViolateConstraint => Score::ZERO,
                ErrorMode::SuboptimalChoice | ErrorMode::HallucinateConstraint => Score::PARTIAL,
            };
            if aspect_reward(options, prefs, option_id)? != want {
                return fail(format!("{mode} perturbation for {aspect} scores wrong"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_fixtures_pass_checks() {
        for t in generate(40, 5, None).unwrap() {
            check_fixture(&t).unwrap();
            assert_eq!(t.actor_plan.len() as u32, t.spec.horizon);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(4, 9, None).unwrap(), generate(4, 9, None).unwrap());
    }

    #[test]
    fn difficulty_sets_preference_count() {
        for d in DIFFICULTIES {
            for t in generate(6, 1, Some(d)).unwrap() {
                assert!(t.preferences.values().all(|p| p.len() == d));
            }
        }
        assert!(generate(1, 1, Some(5)).is_err());
    }
}
