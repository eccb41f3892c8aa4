use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use critic_gate::backends::prompts::PromptOptions;
use critic_gate::backends::{ChatBackend, ChatClient, ErrorSchedule, OracleCritic};
use critic_gate::datagen::{emit_dataset, run_pipeline, FilterConfig, PipelineConfig};
use critic_gate::eval::{summarize, uplift_report, RunSummary};
use critic_gate::model::{parse_log, render_history, to_log_line, Trajectory};
use critic_gate::runner::{run_all, RunOutcome, RunSettings};
use critic_gate::suite::{check_fixture, generate_suite, load_suite, render_suite, scripted_actor, TaskFixture};
use critic_gate::{Decision, EnvKind, ModelBackend};

use crate::config::{ActorSpec, CriticSpec, DatagenSettings, RunConfig};

pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RUN_FILE: &str = "run.json";
pub const ACTOR_ONLY_FILE: &str = "actor_only.jsonl";
pub const SUPERVISED_FILE: &str = "supervised.jsonl";
pub const DATASET_FILE: &str = "critic_dataset.jsonl";
/// Kept apart from `run.json` so `eval` does not mistake datagen logs for one run.
pub const DATAGEN_FILE: &str = "datagen.json";

/// What a command printed and how the process should exit.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub failed: bool,
}

fn build_actor(spec: &ActorSpec, tasks: &[TaskFixture]) -> anyhow::Result<Box<dyn ModelBackend>> {
    Ok(match spec {
        ActorSpec::Scripted { error_modes, error_probability, compliance } => Box::new(scripted_actor(
            tasks,
            error_modes,
            ErrorSchedule::Probability(*error_probability),
            *compliance,
        )?),
        ActorSpec::Chat { endpoint } => Box::new(ChatBackend::new(ChatClient::from_env(endpoint.clone()))),
    })
}

fn build_critic(spec: &CriticSpec) -> Option<Box<dyn ModelBackend>> {
    match spec {
        CriticSpec::None => None,
        CriticSpec::Oracle => Some(Box::new(OracleCritic)),
        CriticSpec::Chat { endpoint } => Some(Box::new(ChatBackend::new(ChatClient::from_env(endpoint.clone())))),
    }
}

fn settings(cfg: &RunConfig) -> RunSettings {
    RunSettings {
        gate_policy: cfg.gate_policy,
        concurrency: cfg.concurrency,
        prompt: PromptOptions { current_time: cfg.current_time.clone(), ..PromptOptions::default() },
    }
}

fn single_domain(tasks: &[TaskFixture]) -> anyhow::Result<EnvKind> {
    let kinds: BTreeSet<EnvKind> = tasks.iter().map(TaskFixture::kind).collect();
    match kinds.len() {
        0 => bail!("the suite is empty"),
        1 => Ok(*kinds.first().expect("one kind")),
        _ => bail!("`run` needs a single-environment suite; this one mixes retail and travel"),
    }
}

fn log_text(runs: &[RunOutcome]) -> String {
    runs.iter().filter_map(|r| r.result.as_ref().ok()).map(|r| to_log_line(&r.trajectory) + "\n").collect()
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// Runs K seeds per task and writes the trajectory log, summary and
/// resolved configuration.
pub fn cmd_run(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let tasks = load_suite(&cfg.suite)?;
    let kind = single_domain(&tasks)?;
    let actor = build_actor(&cfg.actor, &tasks)?;
    let critic = build_critic(&cfg.critic);
    let refs: Vec<&TaskFixture> = tasks.iter().collect();
    log::info!("running {} tasks x {} seeds", tasks.len(), cfg.runs);
    let runs = run_all(&refs, &cfg.seeds(), actor.as_ref(), critic.as_deref(), &settings(cfg));

    let finished: Vec<Trajectory> = runs.iter().filter_map(|r| r.result.as_ref().ok()).map(|r| r.trajectory.clone()).collect();
    let aborted: Vec<&RunOutcome> = runs.iter().filter(|r| r.result.is_err()).collect();
    let summary = summarize(&cfg.method, kind, &finished)?;

    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    write(&cfg.out_dir.join(TRAJECTORIES_FILE), &log_text(&runs))?;
    write(&cfg.out_dir.join(SUMMARY_FILE), &pretty(&summary))?;
    write(&cfg.out_dir.join(RUN_FILE), &pretty(cfg))?;

    let mut stdout = summary.to_text();
    for r in &aborted {
        let _ = writeln!(stdout, "aborted: {} seed {}: {}", r.task_id, r.seed, r.result.as_ref().expect_err("aborted"));
    }
    Ok(Outcome { stdout, failed: !aborted.is_empty() })
}

/// Hard-task filter, supervised collection, retention and extraction.
pub fn cmd_datagen(cfg: &RunConfig, dg: DatagenSettings) -> anyhow::Result<Outcome> {
    let filter = FilterConfig { k: cfg.runs, psi: dg.psi, seed_base: cfg.seed };
    filter.validate()?;
    let critic = build_critic(&cfg.critic).context("datagen needs a critic (oracle or chat)")?;
    let tasks = load_suite(&cfg.suite)?;
    let actor = build_actor(&cfg.actor, &tasks)?;
    let pipeline = PipelineConfig { filter, strict: dg.strict, run: settings(cfg) };
    let out = run_pipeline(&tasks, actor.as_ref(), critic.as_ref(), &pipeline)?;

    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    write(&cfg.out_dir.join(ACTOR_ONLY_FILE), &log_text(&out.filter.runs))?;
    write(&cfg.out_dir.join(SUPERVISED_FILE), &log_text(&out.collected))?;
    write(&cfg.out_dir.join(DATAGEN_FILE), &pretty(cfg))?;
    let stats = emit_dataset(&out.samples, &cfg.out_dir.join(DATASET_FILE))?;

    let mut stdout = String::new();
    let _ = writeln!(stdout, "hard tasks: {} of {}", out.filter.hard.len(), tasks.len());
    let _ = writeln!(stdout, "retained trajectories: {}", out.retained.len());
    stdout.push_str(&pretty(&stats));
    let aborted = out.filter.runs.iter().chain(&out.collected).filter(|r| r.result.is_err()).count();
    if aborted > 0 {
        let _ = writeln!(stdout, "aborted episodes: {aborted}");
    }
    Ok(Outcome { stdout, failed: false })
}

/// Generates a seeded fixture corpus and checks every fixture is solvable.
pub fn cmd_gen_suite(kind: EnvKind, n: usize, seed: u64, difficulty: Option<usize>, output: Option<&Path>) -> anyhow::Result<Outcome> {
    let tasks = generate_suite(kind, n, seed, difficulty)?;
    for t in &tasks {
        check_fixture(t).with_context(|| format!("generated fixture {} failed its check", t.task_id()))?;
    }
    let text = render_suite(&tasks);
    match output {
        Some(path) => {
            write(path, &text)?;
            Ok(Outcome { stdout: format!("wrote {} {} tasks to {}\n", tasks.len(), kind, path.display()), failed: false })
        }
        None => Ok(Outcome { stdout: text, failed: false }),
    }
}

/// Log file, environment and method of one evaluated run.
#[derive(Debug, Clone)]
pub struct LogSource {
    pub path: PathBuf,
    pub environment: Option<EnvKind>,
    pub method: Option<String>,
}

/// A log's run metadata lives in `run.json` next to it, if anywhere.
fn sibling_run_config(log: &Path) -> Option<RunConfig> {
    let path = log.parent().unwrap_or(Path::new(".")).join(RUN_FILE);
    serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()
}

fn read_log(path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_log(&text).map_err(|(line, e)| anyhow::anyhow!("{}: line {line}: {e}", path.display()))
}

fn infer_environment(ts: &[Trajectory], cfg: Option<&RunConfig>) -> Option<EnvKind> {
    if let Some(kind) = cfg.and_then(|c| load_suite(&c.suite).ok()).and_then(|tasks| single_domain(&tasks).ok()) {
        return Some(kind);
    }
    let kinds: BTreeSet<EnvKind> =
        ts.iter().filter_map(|t| t.task_id.split('-').next().and_then(|p| p.parse().ok())).collect();
    (kinds.len() == 1).then(|| *kinds.first().expect("one kind"))
}

pub fn summarize_log(src: &LogSource) -> anyhow::Result<RunSummary> {
    let ts = read_log(&src.path)?;
    let cfg = sibling_run_config(&src.path);
    let env = src
        .environment
        .or_else(|| infer_environment(&ts, cfg.as_ref()))
        .with_context(|| format!("cannot tell the environment of {}; pass --env", src.path.display()))?;
    let method = src
        .method
        .clone()
        .or_else(|| cfg.map(|c| c.method))
        .unwrap_or_else(|| src.path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned()));
    Ok(summarize(&method, env, &ts)?)
}

/// One log: its summary. Two logs: an uplift report, first log as baseline.
pub fn cmd_eval(sources: &[LogSource], json: bool) -> anyhow::Result<Outcome> {
    let summaries = sources.iter().map(summarize_log).collect::<anyhow::Result<Vec<_>>>()?;
    let stdout = match summaries.as_slice() {
        [one] if json => pretty(one),
        [one] => one.to_text(),
        [base, treated] => {
            let report = uplift_report(base, treated)?;
            if json {
                pretty(&report)
            } else {
                report.to_text()
            }
        }
        _ => bail!("eval takes one or two logs"),
    };
    Ok(Outcome { stdout, failed: false })
}

/// Transcript plus critic activity for the selected trajectories.
pub fn cmd_inspect(log: &Path, task: Option<&str>, seed: Option<u64>) -> anyhow::Result<Outcome> {
    let ts = read_log(log)?;
    let selected: Vec<&Trajectory> =
        ts.iter().filter(|t| task.is_none_or(|id| t.task_id == id) && seed.is_none_or(|s| t.seed == s)).collect();
    if selected.is_empty() {
        bail!("no trajectory in {} matches", log.display());
    }
    let mut out = String::new();
    for t in selected {
        let reward = t.reward.as_ref().map_or("unscored".to_string(), |r| r.value.to_string());
        let _ = writeln!(
            out,
            "== {} seed {}  reward {}  turns {}  interventions {}  revisions {}",
            t.task_id,
            t.seed,
            reward,
            t.steps.len(),
            t.intervention_count(),
            t.revision_count()
        );
        out.push_str(&render_history(t));
        if !out.ends_with('\n') {
            out.push('\n');
        }
        for s in t.steps.iter().filter(|s| s.action.gate) {
            let r = &s.action;
            let Some(v) = &r.verdict else { continue };
            let _ = writeln!(out, "-- turn {} critic: {}", r.turn_index, r.proposal.render_inline());
            match v.decision {
                Decision::Approve => {
                    let _ = writeln!(out, "   approve");
                }
                Decision::Revise => {
                    let _ = writeln!(out, "   revise: {}", v.guidance);
                    let _ = writeln!(out, "   executed: {}", r.final_action.render_inline());
                }
            }
        }
        if let Some(r) = &t.reward {
            for c in r.breakdown.iter().filter(|c| !c.mismatches.is_empty()) {
                let _ = writeln!(out, "-- {} mismatches: {}", c.name, c.mismatches.join(", "));
            }
        }
        out.push('\n');
    }
    Ok(Outcome { stdout: out, failed: false })
}
