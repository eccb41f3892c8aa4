use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use critic_gate::datagen::parse_dataset;
use critic_gate::eval::RunSummary;
use critic_gate::model::parse_log;
use critic_gate::suite::{check_fixture, load_suite, TaskFixture};
use critic_gate::EnvKind;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_critic-gate"));
    c.env_remove("RUST_LOG");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn suite(dir: &Path, kind: &str, n: &str, seed: &str) -> PathBuf {
    let name = format!("{kind}_{n}_{seed}.jsonl");
    ok(dir, &["gen-suite", "--env", kind, "-n", n, "--seed", seed, "-o", &name]);
    dir.join(name)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn gen_suite_is_seeded_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let retail = suite(d, "retail", "50", "9");
    let tasks = load_suite(&retail).unwrap();
    assert_eq!(tasks.len(), 50);
    assert!(tasks.iter().all(|t| t.kind() == EnvKind::Retail && check_fixture(t).is_ok()));
    assert_eq!(ok(d, &["gen-suite", "--env", "retail", "-n", "50", "--seed", "9"]).into_bytes(), read(&retail));

    ok(d, &["gen-suite", "--env", "travel", "-n", "10", "--seed", "1", "--difficulty", "2", "-o", "t.jsonl"]);
    let travel = load_suite(&d.join("t.jsonl")).unwrap();
    assert_eq!(travel.len(), 10);
    for t in &travel {
        let TaskFixture::Travel(task) = t else { panic!("not travel") };
        assert!(task.aspects.iter().all(|a| task.prefs(&a.aspect).len() == 2));
        assert!(task.aspects.iter().all(|a| !critic_gate::env::travel::optimal_options(a, task.prefs(&a.aspect)).is_empty()));
    }

    assert_eq!(ok(d, &["gen-suite", "--env", "retail", "-n", "0"]), "");
    assert!(!run(d, &["gen-suite", "--env", "retail", "--difficulty", "2"]).status.success());
    assert!(!run(d, &["gen-suite", "--env", "travel", "--difficulty", "7"]).status.success());
}

#[test]
fn run_writes_logs_and_eval_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "retail", "12", "4");
    let base = ok(d, &["run", "--suite", "retail_12_4.jsonl", "--out", "base"]);
    assert!(base.contains("pass@1: "), "{base}");
    for f in ["trajectories.jsonl", "summary.json", "run.json"] {
        let text = String::from_utf8(read(&d.join("base").join(f))).unwrap();
        assert!(text.contains("\"schema\":"), "{f} lacks a schema tag");
    }
    let log = parse_log(&String::from_utf8(read(&d.join("base/trajectories.jsonl"))).unwrap()).unwrap();
    assert_eq!(log.len(), 12 * 5);
    assert!(log.iter().all(|t| (1..=5).contains(&t.seed)));

    // eval works from the log alone
    assert_eq!(ok(d, &["eval", "base/trajectories.jsonl"]), base);
    let copy = d.join("elsewhere");
    std::fs::create_dir(&copy).unwrap();
    std::fs::copy(d.join("base/trajectories.jsonl"), copy.join("log.jsonl")).unwrap();
    assert_eq!(ok(d, &["eval", "elsewhere/log.jsonl", "--env", "retail", "--method", "actor-only"]), base);
    let json = ok(d, &["eval", "base/trajectories.jsonl", "--json"]);
    assert_eq!(json.as_bytes(), read(&d.join("base/summary.json")));

    let sup = ok(d, &["run", "--suite", "retail_12_4.jsonl", "--out", "sup", "--critic", "oracle"]);
    let b: RunSummary = serde_json::from_slice(&read(&d.join("base/summary.json"))).unwrap();
    let s: RunSummary = serde_json::from_slice(&read(&d.join("sup/summary.json"))).unwrap();
    assert!(s.aggregate >= b.aggregate, "{base}\n{sup}");
    assert!(s.interventions.interventions > 0);

    let report = ok(d, &["eval", "base/trajectories.jsonl", "sup/trajectories.jsonl"]);
    assert!(report.starts_with("pass@1  actor-only vs oracle-critic (retail)"), "{report}");
    let overall = format!(
        "{:<13}  {:>10}  {:>10}  {:>10}\n",
        "overall",
        b.aggregate.to_string(),
        s.aggregate.to_string(),
        (s.aggregate - b.aggregate).to_string()
    );
    assert!(report.contains(&overall), "{report}");
    let report: serde_json::Value =
        serde_json::from_str(&ok(d, &["eval", "base/trajectories.jsonl", "sup/trajectories.jsonl", "--json"])).unwrap();
    assert_eq!(report["schema"], "critic-gate/uplift@1");
    assert_eq!(report["delta"], (s.aggregate - b.aggregate).to_string());
}

#[test]
fn identical_arguments_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "travel", "8", "2");
    let a = ok(d, &["run", "--suite", "travel_8_2.jsonl", "--out", "a", "--critic", "oracle", "--concurrency", "1"]);
    let b = ok(d, &["run", "--suite", "travel_8_2.jsonl", "--out", "a2", "--critic", "oracle", "--concurrency", "1"]);
    let c = ok(d, &["run", "--suite", "travel_8_2.jsonl", "--out", "a3", "--critic", "oracle", "--concurrency", "8"]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.contains("travel_score: "));
    for f in ["trajectories.jsonl", "summary.json"] {
        assert_eq!(read(&d.join("a").join(f)), read(&d.join("a2").join(f)));
        assert_eq!(read(&d.join("a").join(f)), read(&d.join("a3").join(f)));
    }
}

#[test]
fn missing_suite_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["run", "--suite", "absent.jsonl", "--out", "out"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("absent.jsonl"));
    assert!(!d.join("out").exists());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "retail", "4", "1");
    std::fs::write(
        d.join("c.toml"),
        "suite = \"retail_4_1.jsonl\"\nout_dir = \"from_file\"\nruns = 2\n\n[critic]\nkind = \"oracle\"\n",
    )
    .unwrap();
    ok(d, &["run", "--config", "c.toml"]);
    assert_eq!(parse_log(&String::from_utf8(read(&d.join("from_file/trajectories.jsonl"))).unwrap()).unwrap().len(), 8);
    let printed = ok(d, &["run", "--config", "c.toml", "-k", "3", "--out", "flagged", "--critic", "none"]);
    assert!(printed.contains("method: actor-only"));
    assert_eq!(parse_log(&String::from_utf8(read(&d.join("flagged/trajectories.jsonl"))).unwrap()).unwrap().len(), 12);
    let cfg: serde_json::Value = serde_json::from_slice(&read(&d.join("flagged/run.json"))).unwrap();
    assert_eq!(cfg["runs"], 3);
    assert_eq!(cfg["critic"]["kind"], "none");

    std::fs::write(d.join("bad.toml"), "runz = 2\n").unwrap();
    let out = run(d, &["run", "--config", "bad.toml"]);
    assert!(!out.status.success() && stderr(&out).contains("runz"), "{}", stderr(&out));
}

#[test]
fn aborted_episodes_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "retail", "2", "1");
    // nothing listens here, so every critic call fails
    let out = run(
        d,
        &["run", "--suite", "retail_2_1.jsonl", "--out", "o", "--critic", "chat", "--critic-url", "http://127.0.0.1:9/v1", "--critic-model", "m", "--error-probability", "0"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("aborted: retail-000 seed 1"));
}

#[test]
fn datagen_rejects_psi_above_k_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "retail", "3", "1");
    let out = run(d, &["datagen", "--suite", "retail_3_1.jsonl", "--out", "dg", "-k", "3", "--psi", "4"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("psi"), "{}", stderr(&out));
    assert!(!d.join("dg").exists());
}

#[test]
fn datagen_is_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "retail", "16", "6");
    let first = ok(d, &["datagen", "--suite", "retail_16_6.jsonl", "--out", "one"]);
    let second = ok(d, &["datagen", "--suite", "retail_16_6.jsonl", "--out", "two", "--concurrency", "1"]);
    assert_eq!(first, second);
    for f in ["critic_dataset.jsonl", "critic_dataset.jsonl.stats.json", "actor_only.jsonl", "supervised.jsonl"] {
        assert_eq!(read(&d.join("one").join(f)), read(&d.join("two").join(f)), "{f}");
    }
    let rows = parse_dataset(&String::from_utf8(read(&d.join("one/critic_dataset.jsonl"))).unwrap()).unwrap();
    assert!(!rows.is_empty());
    let sources = parse_log(&String::from_utf8(read(&d.join("one/supervised.jsonl"))).unwrap()).unwrap();
    for r in &rows {
        let t = sources.iter().find(|t| t.task_id == r.task_id && t.seed == r.seed).unwrap();
        assert!(t.reward.as_ref().unwrap().is_success());
    }
    // the actor-only log evaluates like any run log
    let eval = ok(d, &["eval", "one/actor_only.jsonl"]);
    assert!(eval.starts_with("method: actor_only\nenvironment: retail\n"), "{eval}");
}

#[test]
fn datagen_with_a_flawless_actor_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "retail", "5", "2");
    let out = ok(d, &["datagen", "--suite", "retail_5_2.jsonl", "--out", "dg", "--error-probability", "0"]);
    assert!(out.starts_with("hard tasks: 0 of 5"), "{out}");
    assert_eq!(read(&d.join("dg/critic_dataset.jsonl")), b"");
    let stats: serde_json::Value = serde_json::from_slice(&read(&d.join("dg/critic_dataset.jsonl.stats.json"))).unwrap();
    assert_eq!(stats["n_samples"], 0);
    assert_eq!(stats["n_trajectories"], 0);
}

#[test]
fn eval_names_the_corrupt_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "retail", "2", "1");
    ok(d, &["run", "--suite", "retail_2_1.jsonl", "--out", "o", "-k", "2"]);
    let mut text = String::from_utf8(read(&d.join("o/trajectories.jsonl"))).unwrap();
    text.push_str("{\"schema\": \"critic-gate/trajectory@1\", \"task_id\": \n");
    std::fs::write(d.join("o/trajectories.jsonl"), text).unwrap();
    let out = run(d, &["eval", "o/trajectories.jsonl"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 5"), "{}", stderr(&out));
}

#[test]
fn inspect_shows_transcripts_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    suite(d, "retail", "6", "3");
    ok(d, &["run", "--suite", "retail_6_3.jsonl", "--out", "o", "--critic", "oracle", "--error-probability", "1", "--error-modes", "violate_constraint"]);
    let all = ok(d, &["inspect", "o/trajectories.jsonl"]);
    assert!(all.contains("== retail-000 seed 1"));
    assert!(all.contains("   revise: "), "{all}");
    let one = ok(d, &["inspect", "o/trajectories.jsonl", "--task", "retail-002", "--seed", "3"]);
    assert_eq!(one.matches("== ").count(), 1);
    assert!(one.contains("user: "));
    assert!(!run(d, &["inspect", "o/trajectories.jsonl", "--task", "nope"]).status.success());
}
