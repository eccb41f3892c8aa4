//! TOML configuration merged with command-line overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use critic_gate::backends::prompts::DEFAULT_CURRENT_TIME;
use critic_gate::backends::{Compliance, EndpointConfig};
use critic_gate::orchestrator::GatePolicy;
use critic_gate::plan::ErrorMode;

pub const RUN_SCHEMA: &str = "critic-gate/run@1";
pub const DEFAULT_RUNS: u32 = 5;
pub const DEFAULT_PSI: u32 = 2;
pub const DEFAULT_CONCURRENCY: usize = 4;
pub const DEFAULT_ERROR_PROBABILITY: f64 = 0.3;

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub suite: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub runs: Option<u32>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub gate_policy: Option<GatePolicy>,
    pub method: Option<String>,
    pub current_time: Option<String>,
    #[serde(default)]
    pub actor: ActorSection,
    #[serde(default)]
    pub critic: CriticSection,
    #[serde(default)]
    pub datagen: DatagenSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSection {
    pub kind: Option<ActorKind>,
    pub error_modes: Option<Vec<ErrorMode>>,
    pub error_probability: Option<f64>,
    pub compliance: Option<Compliance>,
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticSection {
    pub kind: Option<CriticKind>,
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenSection {
    pub psi: Option<u32>,
    pub strict: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Scripted,
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    None,
    Oracle,
    Chat,
}

/// Flag values; `None` means "not given on the command line".
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML configuration file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task suite (JSON lines, one fixture per line)
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Runs per task, K [default: 5]
    #[arg(short = 'k', long)]
    pub runs: Option<u32>,
    /// Base seed; runs use seeds base+1 ..= base+K [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Episodes run in parallel [default: 4]
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// state_mutating | final_recommendation | always | never [default: per environment]
    #[arg(long)]
    pub gate_policy: Option<GatePolicy>,
    /// Label used in summaries [default: derived from the critic]
    #[arg(long)]
    pub method: Option<String>,
    /// Current time quoted in critic prompts
    #[arg(long)]
    pub current_time: Option<String>,
    /// Actor backend [default: scripted]
    #[arg(long, value_enum)]
    pub actor: Option<ActorKind>,
    /// Comma-separated scripted error modes [default: all]
    #[arg(long, value_delimiter = ',')]
    pub error_modes: Option<Vec<ErrorMode>>,
    /// Per-turn error probability of the scripted actor [default: 0.3]
    #[arg(long)]
    pub error_probability: Option<f64>,
    /// complies_with_guidance | ignores_guidance [default: complies_with_guidance]
    #[arg(long)]
    pub compliance: Option<Compliance>,
    /// Critic backend [default: none for run, oracle for datagen]
    #[arg(long, value_enum)]
    pub critic: Option<CriticKind>,
    /// Chat endpoint base URL for the actor
    #[arg(long)]
    pub actor_url: Option<String>,
    /// Chat model name for the actor
    #[arg(long)]
    pub actor_model: Option<String>,
    /// Chat endpoint base URL for the critic
    #[arg(long)]
    pub critic_url: Option<String>,
    /// Chat model name for the critic
    #[arg(long)]
    pub critic_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActorSpec {
    Scripted { error_modes: BTreeSet<ErrorMode>, error_probability: f64, compliance: Compliance },
    Chat { endpoint: EndpointConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriticSpec {
    None,
    Oracle,
    Chat { endpoint: EndpointConfig },
}

impl CriticSpec {
    pub fn label(&self) -> String {
        match self {
            CriticSpec::None => "actor-only".into(),
            CriticSpec::Oracle => "oracle-critic".into(),
            CriticSpec::Chat { endpoint } => format!("critic:{}", endpoint.model),
        }
    }
}

/// Fully resolved settings, persisted as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub suite: PathBuf,
    pub out_dir: PathBuf,
    pub runs: u32,
    pub seed: u64,
    pub concurrency: usize,
    pub gate_policy: Option<GatePolicy>,
    pub method: String,
    pub current_time: String,
    pub actor: ActorSpec,
    pub critic: CriticSpec,
}

impl RunConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (self.seed + 1..=self.seed + u64::from(self.runs)).collect()
    }
}

pub fn load_file(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn endpoint(
    kind: &str,
    file: Option<EndpointConfig>,
    url: Option<String>,
    model: Option<String>,
    base: fn(String, String) -> EndpointConfig,
) -> anyhow::Result<EndpointConfig> {
    let mut e = match (file, &url, &model) {
        (Some(e), _, _) => e,
        (None, Some(u), Some(m)) => base(u.clone(), m.clone()),
        _ => bail!("a chat {kind} needs an endpoint: set [{kind}.endpoint] or pass --{kind}-url and --{kind}-model"),
    };
    if let Some(u) = url {
        e.base_url = u;
    }
    if let Some(m) = model {
        e.model = m;
    }
    Ok(e)
}

/// Merges file and flags (flags win) and checks the result.
/// `default_critic` differs between `run` and `datagen`.
pub fn resolve(flags: &Overrides, default_critic: CriticKind) -> anyhow::Result<RunConfig> {
    let file = match &flags.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    let suite = flags.suite.clone().or(file.suite).context("no suite given (--suite or `suite` in the config)")?;
    let out_dir = flags.out.clone().or(file.out_dir).context("no output directory given (--out or `out_dir`)")?;
    let runs = flags.runs.or(file.runs).unwrap_or(DEFAULT_RUNS);
    if runs == 0 {
        bail!("runs per task must be at least 1");
    }
    let concurrency = flags.concurrency.or(file.concurrency).unwrap_or(DEFAULT_CONCURRENCY);
    if concurrency == 0 {
        bail!("concurrency must be at least 1");
    }

    let actor = match flags.actor.or(file.actor.kind).unwrap_or(ActorKind::Scripted) {
        ActorKind::Scripted => {
            let p = flags.error_probability.or(file.actor.error_probability).unwrap_or(DEFAULT_ERROR_PROBABILITY);
            if !(0.0..=1.0).contains(&p) {
                bail!("error probability {p} is outside [0, 1]");
            }
            let modes = flags.error_modes.clone().or(file.actor.error_modes).unwrap_or_else(|| ErrorMode::ALL.to_vec());
            ActorSpec::Scripted {
                error_modes: modes.into_iter().collect(),
                error_probability: p,
                compliance: flags.compliance.or(file.actor.compliance).unwrap_or(Compliance::CompliesWithGuidance),
            }
        }
        ActorKind::Chat => ActorSpec::Chat {
            endpoint: endpoint(
                "actor",
                file.actor.endpoint,
                flags.actor_url.clone(),
                flags.actor_model.clone(),
                EndpointConfig::actor,
            )?,
        },
    };
    let critic = match flags.critic.or(file.critic.kind).unwrap_or(default_critic) {
        CriticKind::None => CriticSpec::None,
        CriticKind::Oracle => CriticSpec::Oracle,
        CriticKind::Chat => CriticSpec::Chat {
            endpoint: endpoint(
                "critic",
                file.critic.endpoint,
                flags.critic_url.clone(),
                flags.critic_model.clone(),
                EndpointConfig::critic,
            )?,
        },
    };
    Ok(RunConfig {
        schema: RUN_SCHEMA.to_string(),
        suite,
        out_dir,
        runs,
        seed: flags.seed.or(file.seed).unwrap_or(0),
        concurrency,
        gate_policy: flags.gate_policy.or(file.gate_policy),
        method: flags.method.clone().or(file.method).unwrap_or_else(|| critic.label()),
        current_time: flags.current_time.clone().or(file.current_time).unwrap_or_else(|| DEFAULT_CURRENT_TIME.to_string()),
        actor,
        critic,
    })
}

/// Datagen settings on top of a [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatagenSettings {
    pub psi: u32,
    pub strict: bool,
}

pub fn resolve_datagen(flags: &Overrides, psi: Option<u32>, strict: bool) -> anyhow::Result<DatagenSettings> {
    let file = match &flags.config {
        Some(p) => load_file(p)?.datagen,
        None => DatagenSection::default(),
    };
    Ok(DatagenSettings {
        psi: psi.or(file.psi).unwrap_or(DEFAULT_PSI),
        strict: strict || file.strict.unwrap_or(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Overrides {
        Overrides { suite: Some("s.jsonl".into()), out: Some("out".into()), ..Overrides::default() }
    }

    #[test]
    fn defaults() {
        let c = resolve(&flags(), CriticKind::None).unwrap();
        assert_eq!(c.runs, 5);
        assert_eq!(c.seeds(), vec![1, 2, 3, 4, 5]);
        assert_eq!(c.method, "actor-only");
        assert_eq!(c.gate_policy, None);
        assert!(matches!(c.actor, ActorSpec::Scripted { error_probability, .. } if error_probability == 0.3));
    }

    #[test]
    fn flags_beat_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "suite = \"a.jsonl\"\nout_dir = \"o\"\nruns = 2\ngate_policy = \"always\"\n[actor]\nerror_probability = 0.1\n[critic]\nkind = \"oracle\"\n[datagen]\npsi = 1\n",
        )
        .unwrap();
        let mut f = Overrides { config: Some(path), ..Overrides::default() };
        let c = resolve(&f, CriticKind::None).unwrap();
        assert_eq!((c.runs, c.gate_policy, c.critic.clone()), (2, Some(GatePolicy::Always), CriticSpec::Oracle));
        assert_eq!(c.suite, PathBuf::from("a.jsonl"));
        f.runs = Some(3);
        f.critic = Some(CriticKind::None);
        f.error_probability = Some(0.5);
        let c = resolve(&f, CriticKind::None).unwrap();
        assert_eq!((c.runs, c.critic), (3, CriticSpec::None));
        assert!(matches!(c.actor, ActorSpec::Scripted { error_probability, .. } if error_probability == 0.5));
        assert_eq!(resolve_datagen(&f, None, false).unwrap().psi, 1);
        assert_eq!(resolve_datagen(&f, Some(4), false).unwrap().psi, 4);
    }

    #[test]
    fn rejects_bad_values() {
        let mut f = flags();
        f.runs = Some(0);
        assert!(resolve(&f, CriticKind::None).is_err());
        let mut f = flags();
        f.error_probability = Some(1.5);
        assert!(resolve(&f, CriticKind::None).is_err());
        let mut f = flags();
        f.critic = Some(CriticKind::Chat);
        assert!(resolve(&f, CriticKind::None).is_err());
        f.critic_url = Some("http://localhost:8000/v1".into());
        f.critic_model = Some("c".into());
        assert_eq!(resolve(&f, CriticKind::None).unwrap().method, "critic:c");
        assert!(resolve(&Overrides::default(), CriticKind::None).is_err());
    }

    #[test]
    fn unknown_config_keys_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "sute = \"typo\"\n").unwrap();
        assert!(load_file(&path).is_err());
    }

    #[test]
    fn run_config_roundtrips() {
        let c = resolve(&flags(), CriticKind::Oracle).unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
