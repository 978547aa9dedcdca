//! TOML configuration with `NLMAP_SECTION__KEY=value` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nlmap::embedding::{EmbeddingProvider, MockProviderSpec, RemoteProvider, RemoteProviderConfig};
use nlmap::llm::{LlmBackend, LlmScript, RemoteLlm, RemoteLlmConfig};
use nlmap::map::ChannelSchema;
use nlmap::planner::{PlannerConfig, PlanningPrompt, Skill, SkillLibrary};
use nlmap::proposal::ProposalPrompt;
use nlmap::sim::{NoiseSpec, SimProviders, Visibility, DEFAULT_REACH, DISTRACTOR_LABELS, KITCHEN_LABELS};
use nlmap::types::FusionParams;

use crate::CliError;

pub const ENV_PREFIX: &str = "NLMAP_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackend {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub backend: EmbeddingBackend,
    pub mock: MockProviderSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteProviderConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    #[default]
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub backend: LlmKind,
    /// JSON script for the scripted backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteLlmConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub noise: NoiseSpec,
    pub visibility: Visibility,
    pub reach: f64,
    pub trials: usize,
    /// Worker threads for `simulate`; 0 picks the machine default, 1 runs sequentially.
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            noise: NoiseSpec::default(),
            visibility: Visibility::default(),
            reach: DEFAULT_REACH,
            trials: 5,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkillsConfig {
    /// JSON list of skills; replaces the generated library.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Labels added to the built-in vocabulary of the generated library.
    pub extra_labels: Vec<String>,
}

impl Default for SkillsConfig {
    fn default() -> Self {
        SkillsConfig {
            file: None,
            extra_labels: vec!["human".into(), "trash can".into(), "table".into(), "counter".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal_prompt: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planning_prompt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub fusion: FusionParams,
    pub embedding: EmbeddingConfig,
    pub llm: LlmConfig,
    pub planner: PlannerConfig,
    pub sim: SimConfig,
    pub skills: SkillsConfig,
    pub paths: PathsConfig,
}

fn parse_env_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty override path");
    let mut table = root;
    for part in parents {
        let entry = table.entry(part.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override path `{}` crosses a non-table key", path.join("."))))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl Config {
    /// Defaults, then the file, then environment overrides. Relative paths
    /// inside the file resolve against its directory.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Config, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> =
            env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.contains("__")).collect();
        overrides.sort();
        for (key, raw) in overrides {
            let parts: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_lowercase()).collect();
            if parts.iter().any(|p| p.is_empty()) {
                return Err(CliError::Config(format!("malformed override variable `{key}`")));
            }
            apply_override(&mut table, &parts, parse_env_value(&raw))?;
        }
        let mut config: Config = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(dir) = path.and_then(Path::parent) {
            resolve(dir, &mut config.llm.script);
            resolve(dir, &mut config.skills.file);
            resolve(dir, &mut config.paths.proposal_prompt);
            resolve(dir, &mut config.paths.planning_prompt);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.fusion.validate()?;
        self.embedding.mock.validate()?;
        self.planner.validate()?;
        self.sim.noise.validate()?;
        let v = &self.sim.visibility;
        if !(v.range > 0.0 && v.min_depth >= 0.0 && v.min_depth < v.range && v.image_size > 0) {
            return Err(CliError::Config("sim.visibility needs 0 <= min_depth < range and image_size > 0".into()));
        }
        if !(self.sim.reach > 0.0 && self.sim.reach.is_finite()) {
            return Err(CliError::Config("sim.reach must be positive".into()));
        }
        if self.embedding.backend == EmbeddingBackend::Remote && self.embedding.remote.is_none() {
            return Err(CliError::Config("embedding.backend = \"remote\" needs an [embedding.remote] table".into()));
        }
        if self.llm.backend == LlmKind::Remote && self.llm.remote.is_none() {
            return Err(CliError::Config("llm.backend = \"remote\" needs an [llm.remote] table".into()));
        }
        Ok(())
    }

    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn proposal_prompt(&self) -> Result<ProposalPrompt, CliError> {
        Ok(match &self.paths.proposal_prompt {
            Some(p) => ProposalPrompt::load(p)?,
            None => ProposalPrompt::default_v1(),
        })
    }

    pub fn planning_prompt(&self) -> Result<PlanningPrompt, CliError> {
        Ok(match &self.paths.planning_prompt {
            Some(p) => PlanningPrompt::load(p)?,
            None => PlanningPrompt::default_v1(),
        })
    }

    /// Mock channels used by the simulator and the mock backend.
    pub fn sim_providers(&self, noisy: bool) -> Result<SimProviders, CliError> {
        let noise = if noisy { self.sim.noise.embedding_noise } else { 0.0 };
        Ok(SimProviders::with_noise(self.embedding.mock.clone(), noise)?)
    }

    pub fn text_provider(&self) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        match self.embedding.backend {
            EmbeddingBackend::Mock => Ok(Box::new(self.sim_providers(false)?.clip)),
            EmbeddingBackend::Remote => {
                let remote = self.embedding.remote.clone().expect("validated");
                Ok(Box::new(RemoteProvider::new(remote)?))
            }
        }
    }

    /// Channels a frames file must carry.
    pub fn channel_schema(&self) -> Result<ChannelSchema, CliError> {
        match self.embedding.backend {
            EmbeddingBackend::Mock => Ok(self.sim_providers(false)?.schema()),
            EmbeddingBackend::Remote => {
                let r = self.embedding.remote.as_ref().expect("validated");
                Ok(ChannelSchema::new(vec![nlmap::map::ChannelSpec {
                    provider_id: r.provider_id.clone(),
                    role: nlmap::embedding::ChannelRole::TextRegion,
                    dimension: r.dimension,
                }])?)
            }
        }
    }

    pub fn llm(&self, proposal: &ProposalPrompt, planning: &PlanningPrompt) -> Result<Box<dyn LlmBackend>, CliError> {
        match self.llm.backend {
            LlmKind::Scripted => {
                let script = match &self.llm.script {
                    Some(p) => LlmScript::load(p)?,
                    None => LlmScript::default(),
                };
                Ok(Box::new(script.to_llm(proposal, planning)))
            }
            LlmKind::Remote => Ok(Box::new(RemoteLlm::new(self.llm.remote.as_ref().expect("validated"))?)),
        }
    }

    pub fn skill_library(&self, provider: &dyn EmbeddingProvider, extra: &[String]) -> Result<SkillLibrary, CliError> {
        if let Some(path) = &self.skills.file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let skills: Vec<Skill> =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok(SkillLibrary::new(skills, provider)?);
        }
        let mut vocab: Vec<String> = KITCHEN_LABELS.iter().chain(DISTRACTOR_LABELS).map(|s| s.to_string()).collect();
        vocab.extend(self.skills.extra_labels.iter().cloned());
        vocab.extend(extra.iter().cloned());
        vocab.sort();
        vocab.dedup();
        Ok(SkillLibrary::for_objects(&vocab, provider)?)
    }
}
