mod support;

use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;

use critic_gate::backends::{Compliance, ErrorSchedule, OracleCritic, ScriptedActor};
use critic_gate::eval::{pass_at_1, summarize, travel_score, uplift_report, EvalError, RunSummary};
use critic_gate::model::{parse_log, to_log_line, Trajectory};
use critic_gate::plan::ErrorMode;
use critic_gate::runner::{run_all, RunSettings};
use critic_gate::score::Score;
use critic_gate::suite::{generate_suite, scripted_actor, TaskFixture};
use critic_gate::{EnvKind, ModelBackend};

fn binary() -> impl Strategy<Value = Score> {
    prop_oneof![Just(Score::ZERO), Just(Score::ONE)]
}

fn graded() -> impl Strategy<Value = Score> {
    prop_oneof![Just(Score::ZERO), Just(Score::PARTIAL), Just(Score::ONE)]
}

fn flat(rows: &[Vec<Score>]) -> Vec<Score> {
    rows.iter().flatten().copied().collect()
}

/// Success count over run count, by plain integer counting.
fn count_successes(rows: &[Vec<Score>]) -> Score {
    let n: usize = rows.iter().map(Vec::len).sum();
    let k = rows.iter().flatten().filter(|v| **v == Score::ONE).count();
    Score::new(k as i64, n as i64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pass_at_1_equals_success_ratio(rows in prop::collection::vec(prop::collection::vec(binary(), 1..8), 1..12)) {
        prop_assert_eq!(pass_at_1(&rows).unwrap(), count_successes(&rows));
    }

    #[test]
    fn travel_score_equals_recount(rows in prop::collection::vec(prop::collection::vec(graded(), 1..6), 1..12)) {
        prop_assert_eq!(travel_score(&rows).unwrap(), support::recount_mean(&flat(&rows)).unwrap());
    }

    #[test]
    fn metrics_ignore_order(
        rows in prop::collection::vec(prop::collection::vec(graded(), 1..6), 1..10),
        rot in 0usize..10,
    ) {
        let mut shuffled = rows.clone();
        shuffled.rotate_left(rot % rows.len());
        for r in &mut shuffled {
            r.reverse();
        }
        prop_assert_eq!(travel_score(&rows).unwrap(), travel_score(&shuffled).unwrap());
        // regrouping the same pairs into one list changes nothing
        prop_assert_eq!(travel_score(&rows).unwrap(), travel_score(&[flat(&rows)]).unwrap());
    }

    #[test]
    fn singleton_is_the_value(v in graded()) {
        prop_assert_eq!(travel_score(&[vec![v]]).unwrap(), v);
        if v != Score::PARTIAL {
            prop_assert_eq!(pass_at_1(&[vec![v]]).unwrap(), v);
        } else {
            prop_assert_eq!(pass_at_1(&[vec![v]]), Err(EvalError::OutOfDomain(v)));
        }
    }
}

fn retail_tasks() -> Vec<TaskFixture> {
    generate_suite(EnvKind::Retail, 3, 404, None).unwrap()
}

fn travel_tasks() -> Vec<TaskFixture> {
    generate_suite(EnvKind::Travel, 3, 404, None).unwrap()
}

fn actor(tasks: &[TaskFixture]) -> ScriptedActor {
    let modes: BTreeSet<ErrorMode> = ErrorMode::ALL.into_iter().collect();
    scripted_actor(tasks, &modes, ErrorSchedule::Probability(0.5), Compliance::CompliesWithGuidance).unwrap()
}

fn trajectories(tasks: &[TaskFixture], critic: Option<&dyn ModelBackend>) -> Vec<Trajectory> {
    let a = actor(tasks);
    let refs: Vec<&TaskFixture> = tasks.iter().collect();
    run_all(&refs, &[1, 2, 3, 4, 5], &a, critic, &RunSettings::default())
        .into_iter()
        .map(|r| r.result.unwrap().trajectory)
        .collect()
}

/// 3 tasks x 5 runs, recounted from the serialized log.
#[test]
fn retail_summary_matches_log_recount() {
    let ts = trajectories(&retail_tasks(), None);
    assert_eq!(ts.len(), 15);
    let log: String = ts.iter().map(|t| to_log_line(t) + "\n").collect();
    let parsed = parse_log(&log).unwrap();
    let s = summarize("actor-only", EnvKind::Retail, &parsed).unwrap();
    let doc: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let ones = doc.iter().filter(|d| d["reward"]["value"] == "1").count();
    assert_eq!(s.aggregate, Score::new(ones as i64, 15));
    assert_eq!(s.per_task.len(), 3);
    assert!(s.per_task.values().all(|v| v.len() == 5));
    assert_eq!(s.interventions.interventions, 0);
}

#[test]
fn travel_summary_matches_log_recount() {
    let ts = trajectories(&travel_tasks(), None);
    let log: String = ts.iter().map(|t| to_log_line(t) + "\n").collect();
    let s = summarize("actor-only", EnvKind::Travel, &parse_log(&log).unwrap()).unwrap();
    let mut parts = Vec::new();
    for line in log.lines() {
        let d: serde_json::Value = serde_json::from_str(line).unwrap();
        for c in d["reward"]["breakdown"].as_array().unwrap() {
            parts.push(c["value"].as_str().unwrap().parse::<Score>().unwrap());
        }
    }
    assert_eq!(parts.len(), 15 * 2);
    assert_eq!(s.aggregate, support::recount_mean(&parts).unwrap());
}

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    assert_eq!(actual, std::fs::read_to_string(&path).unwrap(), "golden {name} differs");
}

#[test]
fn uplift_report_golden() {
    let tasks = retail_tasks();
    let base = summarize("actor-only", EnvKind::Retail, &trajectories(&tasks, None)).unwrap();
    let treated = summarize("oracle-critic", EnvKind::Retail, &trajectories(&tasks, Some(&OracleCritic))).unwrap();
    let report = uplift_report(&base, &treated).unwrap();
    assert!(report.treated.value >= report.baseline.value);
    golden("uplift.golden.txt", &report.to_text());
    golden("uplift.golden.json", &(serde_json::to_string_pretty(&report).unwrap() + "\n"));
    let back: RunSummary = serde_json::from_str(&serde_json::to_string(&base).unwrap()).unwrap();
    assert_eq!(back, base);
}
