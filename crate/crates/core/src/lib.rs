//! Runtime actor-critic supervision for tool-using conversational agents.
//!
//! An actor proposes one action per turn. A gate decides whether a critic
//! reviews it; the critic approves or sends back guidance, and the actor
//! gets exactly one chance to revise before the environment executes the
//! result. The same machinery produces critic training data: runs on tasks
//! the actor fails alone are replayed with the critic, and every critic
//! evaluation on a successful, revised run becomes a labelled sample.
//!
//! Two simulated environments are included: order management with policy
//! rules ([`env::retail`]) and preference-driven travel planning
//! ([`env::travel`]).

pub mod backends;
pub mod datagen;
pub mod env;
pub mod eval;
pub mod model;
pub mod orchestrator;
pub mod plan;
pub mod protocol;
pub mod rng;
pub mod runner;
pub mod score;
pub mod suite;

pub use backends::{ModelBackend, OracleCritic, ScriptedActor};
pub use model::{ActionProposal, CriticVerdict, Decision, EnvKind, TaskSpec, Trajectory};
pub use orchestrator::{run_episode, should_intervene, EpisodeConfig, EpisodeResult, GatePolicy};
pub use score::Score;
pub use suite::TaskFixture;
