mod support;

use std::collections::{BTreeMap, BTreeSet};

use critic_gate::backends::oracle::OracleCritic;
use critic_gate::backends::{ModelBackend, ModelRequest, Phase, RequestContext};
use critic_gate::env::retail::policy::CANCEL_REASONS;
use critic_gate::env::retail::{check_policies, execute_tool, generator, on_reward_path, reward, RetailEnv, RetailState, RetailTask};
use critic_gate::env::travel::{self, aspect_reward, optimal_options, TravelEnv};
use critic_gate::env::{Environment, ToolClass, ToolRegistry};
use critic_gate::model::{ActionProposal, EnvKind};
use critic_gate::plan::TurnPlan;
use critic_gate::score::Score;

fn retail_tasks() -> Vec<RetailTask> {
    generator::generate(50, 17)
}

/// Every way of picking intended-or-perturbed per turn.
fn plan_variants(plan: &[TurnPlan]) -> Vec<Vec<ActionProposal>> {
    let mut out = vec![Vec::new()];
    for turn in plan {
        let choices: Vec<&ActionProposal> =
            std::iter::once(&turn.intended).chain(turn.perturbations.values()).collect();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |c| {
                    let mut p = prefix.clone();
                    p.push((*c).clone());
                    p
                })
            })
            .collect();
    }
    out
}

/// Runs `actions` on a fresh environment; `None` if any step is an error.
fn simulate(task: &RetailTask, actions: &[ActionProposal]) -> Option<RetailEnv> {
    let mut env = RetailEnv::new(task.clone()).unwrap();
    for (i, a) in actions.iter().enumerate() {
        let t = env.step(a, i as u32 + 1).ok()?;
        if t.done {
            break;
        }
    }
    Some(env)
}

#[test]
fn retail_reward_matches_fieldwise_oracle() {
    let mut checked = 0;
    for task in retail_tasks() {
        for actions in plan_variants(&task.actor_plan) {
            let env = simulate(&task, &actions).expect("plan actions are well formed");
            assert_eq!(env.evaluate().value, support::retail_reward(env.state(), &task), "{}", task.spec.task_id);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

/// States visited while following the intended plan, before each turn.
fn path_states(task: &RetailTask) -> Vec<RetailState> {
    let mut env = RetailEnv::new(task.clone()).unwrap();
    let mut states = Vec::new();
    for (i, turn) in task.actor_plan.iter().enumerate() {
        states.push(env.state().clone());
        if env.step(&turn.intended, i as u32 + 1).unwrap().done {
            break;
        }
    }
    states.push(env.state().clone());
    states
}

fn call(name: &str, args: &[(&str, &str)]) -> ActionProposal {
    ActionProposal::tool_call(name, args.iter().map(|(k, v)| (*k, *v)))
}

/// Every read-only call over ids drawn from the state, plus unknown ids.
fn read_only_calls(state: &RetailState) -> Vec<ActionProposal> {
    let mut out = vec![];
    for u in state.users.keys().map(String::as_str).chain(["U0"]) {
        out.push(call("get_user_details", &[("user_id", u)]));
    }
    for o in state.orders.keys().map(String::as_str).chain(["W0"]) {
        out.push(call("get_order_details", &[("order_id", o)]));
    }
    for p in state.catalog.keys().map(String::as_str).chain(["P0"]) {
        out.push(call("get_product_details", &[("product_id", p)]));
    }
    out
}

/// Mutating calls over ids from the state, with one off-file payment method
/// and one off-list reason.
fn mutating_calls(state: &RetailState) -> Vec<ActionProposal> {
    let mut methods: BTreeSet<String> = state.users.values().flat_map(|u| u.payment_methods.iter().cloned()).collect();
    methods.insert("paypal_999".into());
    let reasons: Vec<&str> = CANCEL_REASONS.iter().copied().chain(["changed my mind"]).collect();
    let variants: Vec<&str> =
        state.catalog.values().flat_map(|p| p.variants.keys().map(String::as_str)).collect();
    let mut out = vec![];
    for (oid, order) in &state.orders {
        for r in &reasons {
            for m in &methods {
                out.push(call("cancel_order", &[("order_id", oid), ("reason", r), ("refund_method", m)]));
            }
        }
        for item in order.items.keys() {
            for v in &variants {
                for m in &methods {
                    out.push(call(
                        "modify_item",
                        &[("order_id", oid), ("item_id", item), ("new_variant_id", v), ("payment_method", m)],
                    ));
                }
            }
        }
    }
    out
}

fn apply(state: &RetailState, action: &ActionProposal) -> Option<RetailState> {
    match action {
        ActionProposal::ToolCall { tool_name, tool_args, .. } => execute_tool(state, tool_name, tool_args, 1).ok().map(|(s, _)| s),
        _ => Some(state.clone()),
    }
}

/// Whether some sequence of enumerated mutations from `state` reaches
/// reward 1. Each mutation touches one order, so orders are searched
/// independently: every order with a wrong field needs a single call that
/// fixes all of its fields at once.
fn reachable(state: &RetailState, task: &RetailTask) -> bool {
    let broken: BTreeSet<String> =
        support::retail_mismatches(state, task).iter().map(|p| support::order_of(p).to_string()).collect();
    broken.iter().all(|oid| {
        mutating_calls(state)
            .iter()
            .filter(|c| matches!(c, ActionProposal::ToolCall { tool_args, .. } if tool_args["order_id"].as_text() == Some(oid.as_str())))
            .filter_map(|c| apply(state, c))
            .any(|s| !support::retail_mismatches(&s, task).iter().any(|p| support::order_of(p) == oid))
    })
}

#[test]
fn read_only_tools_never_change_state() {
    let registry = ToolRegistry::for_env(EnvKind::Retail);
    for task in retail_tasks() {
        for state in path_states(&task) {
            for c in read_only_calls(&state) {
                assert_eq!(registry.class_of(c.tool_name().unwrap()), Some(ToolClass::ReadOnly));
                assert_eq!(apply(&state, &c).as_ref(), Some(&state), "{}", c.render_inline());
            }
        }
    }
}

fn oracle_approves(env: &dyn Environment, proposal: &ActionProposal) -> bool {
    let request = ModelRequest {
        system: String::new(),
        messages: vec![],
        phase: Phase::Critique,
        context: RequestContext { task_id: "t", seed: 0, turn: 1, proposal: Some(proposal), probe: Some(env.probe()) },
    };
    let reply = OracleCritic.complete(&request).unwrap();
    critic_gate::backends::parse_verdict(&reply).decision == critic_gate::Decision::Approve
}

/// At every intervention point of the scripted path, the oracle approves an
/// enumerated mutation exactly when a reward-1 state stays reachable.
#[test]
fn retail_oracle_is_sound_on_enumerated_proposals() {
    let tasks = retail_tasks();
    let mut shapes = BTreeMap::new();
    for t in &tasks {
        let mutations = t.actor_plan.iter().filter(|p| matches!(p.intended.tool_name(), Some("cancel_order" | "modify_item"))).count();
        shapes.entry((mutations, t.user_script.replies.is_empty())).or_insert(t);
    }
    assert!(shapes.len() >= 3, "fixture corpus covers too few task shapes");
    let mut approvals = 0;
    let mut rejections = 0;
    for task in shapes.values() {
        assert!(task.actor_plan.len() <= 6);
        let mut env = RetailEnv::new((*task).clone()).unwrap();
        let mutating_turns: Vec<usize> = task
            .actor_plan
            .iter()
            .enumerate()
            .filter(|(_, p)| p.intended.tool_name().is_some_and(|n| n == "cancel_order" || n == "modify_item"))
            .map(|(i, _)| i)
            .collect();
        for (i, turn) in task.actor_plan.iter().enumerate() {
            if mutating_turns.contains(&i) {
                for c in mutating_calls(env.state()) {
                    let approve = oracle_approves(&env, &c);
                    let expected = apply(env.state(), &c).is_some_and(|s| reachable(&s, task));
                    assert_eq!(approve, expected, "{}: {}", task.spec.task_id, c.render_inline());
                    if approve {
                        approvals += 1;
                    } else {
                        rejections += 1;
                    }
                }
            }
            env.step(&turn.intended, i as u32 + 1).unwrap();
        }
    }
    assert!(approvals > 0 && rejections > 0);
}

/// Compliant scripted proposals keep the episode on the reward-1 path.
#[test]
fn compliant_scripted_mutations_stay_on_path() {
    for task in retail_tasks() {
        let gt = task.ground_truth().unwrap();
        let mut state = task.initial_state.clone();
        for turn in &task.actor_plan {
            assert!(on_reward_path(&state, &gt));
            for proposal in std::iter::once(&turn.intended).chain(turn.perturbations.values()) {
                let ActionProposal::ToolCall { tool_name, tool_args, .. } = proposal else { continue };
                if ToolRegistry::for_env(EnvKind::Retail).class_of(tool_name) != Some(ToolClass::StateMutating) {
                    continue;
                }
                if check_policies(&task.policies, &state, tool_name, tool_args).is_empty() {
                    let after = apply(&state, proposal).unwrap();
                    assert!(on_reward_path(&after, &gt), "{}: {}", task.spec.task_id, proposal.render_inline());
                    assert!(reachable(&after, &task));
                }
            }
            state = apply(&state, &turn.intended).unwrap();
        }
        assert!(reward(&state, &gt).is_success());
    }
}

fn travel_corpus() -> Vec<travel::TravelTask> {
    let mut v = Vec::new();
    for d in travel::generator::DIFFICULTIES {
        v.extend(travel::generator::generate(12, 5 + d as u64, Some(d)).unwrap());
    }
    v
}

#[test]
fn travel_reward_matches_brute_force() {
    let mut aspects = 0;
    for task in travel_corpus() {
        for opts in &task.aspects {
            assert!(opts.options.len() <= 20);
            let prefs = task.prefs(&opts.aspect);
            for o in &opts.options {
                assert_eq!(
                    Some(aspect_reward(opts, prefs, &o.option_id).unwrap()),
                    support::travel_reward(opts, prefs, &o.option_id),
                    "{} {} {}",
                    task.spec.task_id,
                    opts.aspect,
                    o.option_id
                );
            }
            assert!(aspect_reward(opts, prefs, "nope").is_err());
            let optimal: BTreeSet<String> = optimal_options(opts, prefs).into_iter().collect();
            assert!(!optimal.is_empty(), "aspect without a reward-1 option");
            assert_eq!(optimal, support::travel_optimal(opts, prefs));
            aspects += 1;
        }
    }
    assert!(aspects >= 72);
}

#[test]
fn travel_task_score_is_mean_of_aspects() {
    for task in travel_corpus().into_iter().take(9) {
        let mut env = TravelEnv::new(task.clone()).unwrap();
        let picks: Vec<(String, String)> = task
            .aspects
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let pick = &a.options[(i * 7) % a.options.len()];
                (a.aspect.clone(), pick.option_id.clone())
            })
            .collect();
        for (turn, (aspect, id)) in picks.iter().enumerate() {
            env.step(&ActionProposal::recommendation(aspect, id), turn as u32 + 1).unwrap();
        }
        let parts: Vec<Score> = picks
            .iter()
            .map(|(aspect, id)| support::travel_reward(task.aspect(aspect).unwrap(), task.prefs(aspect), id).unwrap())
            .collect();
        let r = env.evaluate();
        assert_eq!(r.value, support::recount_mean(&parts).unwrap());
        assert_eq!(r.breakdown.iter().map(|c| c.value).collect::<Vec<_>>(), parts);
    }
}
