//! Declarative society configuration.
//!
//! A single TOML file declares the members, the structure, the task
//! binding, and every backend. The CLI loads it, builds the backend
//! registry (seeding any stochastic baseline backends from the manifest
//! seed), and dispatches on the task adapter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    Backend, BackendRegistry, ConsoleBackend, HttpChatBackend, HttpChatConfig, ScriptedBackend,
    ScriptedBehavior,
};
use crate::eom::{EconomyConfig, Money, SimConfig};
use crate::gridworld::{EchoObserver, FrontierCaptain, RandomCaptain, RelayFirstMate};
use crate::message::{AgentId, RoleSpec};
use crate::society::{Right, SocietyConfig, Structure, TaskBinding};
use crate::tasks::{ArtistCriticConfig, CamelConfig, MultipleChoiceTask, ThreeDLoopConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default)]
    pub allow_dual_chair: bool,
    #[serde(default)]
    pub members: Vec<MemberDecl>,
    pub structure: Option<StructureDecl>,
    pub task: TaskDecl,
    #[serde(default)]
    pub backend: BTreeMap<String, BackendDecl>,
}

fn default_rounds() -> u32 {
    crate::society::DEFAULT_ROUNDS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberDecl {
    pub id: String,
    #[serde(default)]
    pub name: Option<String>,
    pub role: String,
    pub system_prompt: String,
    pub backend: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StructureDecl {
    Monarchy { leader: String, organizer: String },
    Democracy { rights: Vec<String> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDecl {
    pub adapter: String,
    pub mcq: Option<McqDecl>,
    pub caption: Option<CaptionDecl>,
    pub artist_critic: Option<ArtistCriticDecl>,
    pub threed: Option<ThreeDDecl>,
    pub camel: Option<CamelDecl>,
    pub retrieval: Option<RetrievalDecl>,
    pub exploration: Option<ExplorationDecl>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McqDecl {
    pub question: String,
    /// Four [key, label] pairs.
    pub options: Vec<(String, String)>,
    pub context_provider: String,
    pub answer: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionDecl {
    pub image_ref: String,
    pub scorer: Option<String>,
    #[serde(default)]
    pub scorer_lower_is_better: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtistCriticDecl {
    pub object: String,
    #[serde(default = "default_artist_rounds")]
    pub rounds_per_artist: u32,
    pub artist_backend: String,
    pub critic_backend: String,
    pub collector_backend: String,
    pub painter_backend: Option<String>,
    /// Defaults to the shipped 26-style list.
    pub artists: Option<Vec<String>>,
    /// Defaults to the shipped 50-profession list.
    pub critics: Option<Vec<String>>,
}

fn default_artist_rounds() -> u32 {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeDDecl {
    pub initial_prompt: String,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    pub designer_backend: String,
    pub critic_backend: String,
    pub leader_backend: String,
}

fn default_iterations() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamelDecl {
    pub task: String,
    #[serde(default = "default_max_messages")]
    pub max_messages: usize,
    #[serde(default = "default_done_marker")]
    pub done_marker: String,
    pub user_role: RoleDecl,
    pub assistant_role: RoleDecl,
    pub specifier: Option<RoleDecl>,
}

fn default_max_messages() -> usize {
    crate::tasks::DEFAULT_MAX_MESSAGES
}

fn default_done_marker() -> String {
    crate::tasks::DEFAULT_DONE_MARKER.to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleDecl {
    pub role_name: String,
    pub system_prompt: String,
    pub backend: String,
}

impl RoleDecl {
    fn to_role_spec(&self) -> RoleSpec {
        RoleSpec::new(&self.role_name, &self.system_prompt, &self.backend)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalDecl {
    /// Fixture file path, relative to the config file.
    pub fixture: String,
    pub debaters: Vec<String>,
    /// Monarchy editor; omit for the democratic structure.
    pub editor: Option<String>,
    #[serde(default = "default_retrieval_rounds")]
    pub rounds: u32,
    #[serde(default)]
    pub w_exec: bool,
    #[serde(default = "default_retrieval_k")]
    pub k: usize,
}

fn default_retrieval_rounds() -> u32 {
    1
}

fn default_retrieval_k() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationDecl {
    /// Map file path, relative to the config file.
    pub map: String,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_qa_rounds")]
    pub qa_rounds: u32,
    pub observer: String,
    pub first_mate: String,
    pub captain: String,
    /// Optional question answered over the exploration record.
    pub question: Option<String>,
}

fn default_max_steps() -> usize {
    100
}

fn default_qa_rounds() -> u32 {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendDecl {
    Scripted {
        #[serde(default)]
        rules: Vec<(String, String)>,
        default: String,
        refusal_markers: Option<Vec<String>>,
    },
    Http {
        endpoint: String,
        model: String,
        credential_env: String,
        #[serde(default)]
        temperature: f64,
        retry_cap: Option<u32>,
        backoff_base_ms: Option<u64>,
        refusal_markers: Option<Vec<String>>,
        #[serde(default)]
        serial: bool,
    },
    Console,
    FrontierCaptain,
    /// Uniform random action policy; seeded from the run manifest.
    RandomCaptain,
    EchoObserver,
    Relay,
}

/// Economy simulation file: agents, endowment, and rates.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyFileConfig {
    pub agents: usize,
    pub endowment: String,
    pub rent_per_tick: String,
    pub tax_rate: String,
    pub spawn_fraction: String,
    pub brigade_gamma: String,
    #[serde(default = "default_tick_every")]
    pub tick_every: u64,
}

fn default_tick_every() -> u64 {
    100
}

impl EconomyFileConfig {
    pub fn to_sim_config(&self) -> Result<SimConfig, ConfigError> {
        let money = |field: &str, value: &str| -> Result<Money, ConfigError> {
            value
                .parse()
                .map_err(|e| ConfigError::Invalid(format!("{field}: {e}")))
        };
        Ok(SimConfig {
            initial_agents: self.agents,
            endowment: money("endowment", &self.endowment)?,
            economy: EconomyConfig {
                rent_per_tick: money("rent_per_tick", &self.rent_per_tick)?,
                tax_rate: money("tax_rate", &self.tax_rate)?,
                spawn_fraction: money("spawn_fraction", &self.spawn_fraction)?,
                brigade_gamma: money("brigade_gamma", &self.brigade_gamma)?,
            },
            tick_every: self.tick_every,
        })
    }
}

pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(toml::from_str(&text)?)
}

pub fn load_economy_file(path: &Path) -> Result<EconomyFileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(toml::from_str(&text)?)
}

impl FileConfig {
    /// Instantiates every declared backend; stochastic policies draw from
    /// the manifest seed so one seed governs all randomness.
    pub fn build_registry(&self, seed: u64) -> Result<BackendRegistry, ConfigError> {
        let mut registry = BackendRegistry::new();
        for (offset, (name, decl)) in self.backend.iter().enumerate() {
            let backend: Arc<dyn Backend> = match decl {
                BackendDecl::Scripted {
                    rules,
                    default,
                    refusal_markers,
                } => {
                    let mut behavior = ScriptedBehavior::with_default(default.clone());
                    for (pattern, response) in rules {
                        behavior = behavior.rule(pattern.clone(), response.clone());
                    }
                    if let Some(markers) = refusal_markers {
                        behavior.refusal_markers = markers.clone();
                    }
                    Arc::new(ScriptedBackend::new(behavior))
                }
                BackendDecl::Http {
                    endpoint,
                    model,
                    credential_env,
                    temperature,
                    retry_cap,
                    backoff_base_ms,
                    refusal_markers,
                    serial,
                } => {
                    let config = HttpChatConfig {
                        endpoint: endpoint.clone(),
                        model: model.clone(),
                        credential_env: credential_env.clone(),
                        temperature: *temperature,
                        retry_cap: retry_cap.unwrap_or(3),
                        backoff_base_ms: backoff_base_ms.unwrap_or(250),
                        refusal_markers: refusal_markers
                            .clone()
                            .unwrap_or_else(crate::backend::default_refusal_markers),
                        serial: *serial,
                    };
                    Arc::new(HttpChatBackend::new(config).map_err(|e| {
                        ConfigError::Invalid(format!("backend {name}: {e}"))
                    })?)
                }
                BackendDecl::Console => Arc::new(ConsoleBackend),
                BackendDecl::FrontierCaptain => Arc::new(FrontierCaptain),
                BackendDecl::RandomCaptain => {
                    Arc::new(RandomCaptain::new(seed.wrapping_add(offset as u64)))
                }
                BackendDecl::EchoObserver => Arc::new(EchoObserver),
                BackendDecl::Relay => Arc::new(RelayFirstMate),
            };
            registry.insert(name.clone(), backend);
        }
        Ok(registry)
    }

    /// The engine-facing society definition; engine adapters (mcq,
    /// caption) require members and a structure.
    pub fn society(&self, rounds_override: Option<u32>) -> Result<SocietyConfig, ConfigError> {
        let structure_decl = self.structure.as_ref().ok_or_else(|| {
            ConfigError::Invalid("this adapter requires a [structure] section".to_string())
        })?;
        if self.members.is_empty() {
            return Err(ConfigError::Invalid(
                "this adapter requires [[members]]".to_string(),
            ));
        }
        let member_id = |id: &str| -> AgentId {
            let name = self
                .members
                .iter()
                .find(|m| m.id == id)
                .and_then(|m| m.name.clone())
                .unwrap_or_else(|| id.to_string());
            AgentId::new(id, name)
        };
        let structure = match structure_decl {
            StructureDecl::Monarchy { leader, organizer } => Structure::Monarchy {
                leader: member_id(leader),
                organizer: member_id(organizer),
            },
            StructureDecl::Democracy { rights } => {
                let rights = rights
                    .iter()
                    .map(|r| parse_right(r))
                    .collect::<Result<_, _>>()?;
                Structure::Democracy { rights }
            }
        };
        let members = self
            .members
            .iter()
            .map(|m| {
                (
                    AgentId::new(&m.id, m.name.clone().unwrap_or_else(|| m.id.clone())),
                    RoleSpec::new(&m.role, &m.system_prompt, &m.backend),
                )
            })
            .collect();
        Ok(SocietyConfig {
            members,
            structure,
            rounds: rounds_override.unwrap_or(self.rounds),
            task_binding: TaskBinding {
                adapter: self.task.adapter.clone(),
                params: BTreeMap::new(),
            },
            allow_dual_chair: self.allow_dual_chair,
        })
    }

    pub fn mcq_task(&self) -> Result<MultipleChoiceTask, ConfigError> {
        let decl = self
            .task
            .mcq
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [task.mcq]".to_string()))?;
        Ok(MultipleChoiceTask {
            question: decl.question.clone(),
            options: decl.options.clone(),
            context_provider: decl.context_provider.clone(),
            answer: decl.answer.clone(),
        })
    }

    pub fn artist_critic_config(&self) -> Result<(ArtistCriticConfig, String), ConfigError> {
        let decl = self
            .task
            .artist_critic
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [task.artist_critic]".to_string()))?;
        let cfg = ArtistCriticConfig {
            artist_roles: decl
                .artists
                .clone()
                .unwrap_or_else(crate::tasks::default_artist_roles),
            critic_roles: decl
                .critics
                .clone()
                .unwrap_or_else(crate::tasks::default_critic_roles),
            rounds_per_artist: decl.rounds_per_artist,
            collector: RoleSpec::new(
                "Assistant",
                "You are a Assistant.",
                &decl.collector_backend,
            ),
            artist_backend: decl.artist_backend.clone(),
            critic_backend: decl.critic_backend.clone(),
            painter_backend: decl.painter_backend.clone(),
        };
        Ok((cfg, decl.object.clone()))
    }

    pub fn threed_config(&self, iterations: Option<u32>) -> Result<(ThreeDLoopConfig, String), ConfigError> {
        let decl = self
            .task
            .threed
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [task.threed]".to_string()))?;
        let cfg = ThreeDLoopConfig {
            designer_backend: decl.designer_backend.clone(),
            critic_backend: decl.critic_backend.clone(),
            leader_backend: decl.leader_backend.clone(),
            critic_views: crate::tasks::ThreeDLoopConfig::default().critic_views,
            iterations: iterations.unwrap_or(decl.iterations),
        };
        Ok((cfg, decl.initial_prompt.clone()))
    }

    pub fn camel_config(&self) -> Result<(CamelConfig, String), ConfigError> {
        let decl = self
            .task
            .camel
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [task.camel]".to_string()))?;
        let mut cfg = CamelConfig::new(
            decl.user_role.to_role_spec(),
            decl.assistant_role.to_role_spec(),
        );
        cfg.specifier = decl.specifier.as_ref().map(|s| s.to_role_spec());
        cfg.max_messages = decl.max_messages;
        cfg.done_marker = decl.done_marker.clone();
        Ok((cfg, decl.task.clone()))
    }
}

pub fn parse_right(text: &str) -> Result<Right, ConfigError> {
    match text.to_lowercase().as_str() {
        "rtk" => Ok(Right::Rtk),
        "rtc" => Ok(Right::Rtc),
        "rte" => Ok(Right::Rte),
        other => Err(ConfigError::Invalid(format!("unknown right: {other}"))),
    }
}
