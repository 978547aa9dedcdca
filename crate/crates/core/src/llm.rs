//! Text-generation and scoring backends: a scripted table-driven mock and a
//! remote HTTP client.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::JsonClient;
use crate::planner::prompt::{parse_query_context, PlanningPrompt};
use crate::proposal::{instruction_from_prompt, ProposalExample, ProposalPrompt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmCapabilities {
    pub generate: bool,
    pub score: bool,
}

/// A language model. `score` returns log-probability-like values, one per
/// continuation, higher meaning more likely.
pub trait LlmBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn capabilities(&self) -> LlmCapabilities;
    fn generate(&self, prompt: &str, max_tokens: usize, stop: &[&str]) -> Result<String>;
    fn score(&self, prompt: &str, continuations: &[String]) -> Result<Vec<f64>>;
}

/// What the scripted backend does with an instruction it has no entry for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    /// Fail with a generation error.
    #[default]
    Error,
    /// Complete with nothing; planning treats it as "done".
    Empty,
}

/// Scripted planning behaviour for one instruction: follow `steps` when all
/// `required_objects` are available, otherwise answer "done".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanScript {
    pub required_objects: Vec<String>,
    pub steps: Vec<String>,
}

/// Log score given to continuations other than the scripted one.
pub const MISMATCH_LOG_PROB: f64 = -10.0;

const DONE: &str = "done";

fn key(text: &str) -> String {
    text.trim().to_lowercase()
}

fn plan_key(instruction: &str, objects: &[String]) -> String {
    let objects: Vec<String> = objects.iter().map(|o| key(o)).collect();
    format!("{}\u{1f}{}", key(instruction), objects.join("\u{1f}"))
}

/// Deterministic table-driven backend. Immutable once built, so safe to
/// share across threads.
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    proposals: BTreeMap<String, String>,
    plan_completions: BTreeMap<String, String>,
    plans: BTreeMap<String, PlanScript>,
    unknown: UnknownPolicy,
    never_done: bool,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    /// Completion returned for the proposal prompt of `instruction`.
    pub fn with_proposal(mut self, instruction: &str, completion: &str) -> Self {
        self.proposals.insert(key(instruction), completion.to_string());
        self
    }

    /// Echo every example's recorded (or synthesized) completion.
    pub fn with_proposal_examples(self, prompt: &ProposalPrompt) -> Self {
        self.with_proposal_examples_from(&prompt.examples)
    }

    pub fn with_proposal_examples_from(mut self, examples: &[ProposalExample]) -> Self {
        for ex in examples {
            self.proposals.insert(key(&ex.instruction), ex.completion());
        }
        self
    }

    /// Echo each exemplar's recorded answer for its own (instruction,
    /// objects), continuing after the prompt's open "1. ".
    pub fn with_planning_examples(mut self, prompt: &PlanningPrompt) -> Self {
        for ex in &prompt.examples {
            let answer = &ex.recorded_completion;
            let continuation = answer.strip_prefix("1. ").unwrap_or(answer);
            self.plan_completions.insert(plan_key(&ex.instruction, &ex.available_objects), continuation.to_string());
        }
        self
    }

    pub fn with_plan(mut self, instruction: &str, script: PlanScript) -> Self {
        self.plans.insert(key(instruction), script);
        self
    }

    pub fn with_unknown(mut self, policy: UnknownPolicy) -> Self {
        self.unknown = policy;
        self
    }

    /// Never let "done" score highest.
    pub fn adversarial(mut self) -> Self {
        self.never_done = true;
        self
    }

    fn unknown(&self, what: &str) -> Result<Option<String>> {
        match self.unknown {
            UnknownPolicy::Error => Err(Error::Generation(format!("scripted backend has no entry for {what}"))),
            UnknownPolicy::Empty => Ok(None),
        }
    }

    fn next_step(&self, prompt: &str) -> Result<String> {
        let ctx =
            parse_query_context(prompt).ok_or_else(|| Error::Generation("prompt has no open planning query".into()))?;
        let Some(script) = self.plans.get(&key(&ctx.instruction)) else {
            return Ok(self.unknown(&format!("instruction `{}`", ctx.instruction))?.unwrap_or_else(|| DONE.into()));
        };
        let available: Vec<String> = ctx.available_objects.iter().map(|o| key(o)).collect();
        let feasible = script.required_objects.iter().all(|r| available.contains(&key(r)));
        if !feasible {
            return Ok(DONE.into());
        }
        Ok(script.steps.get(ctx.history.len()).cloned().unwrap_or_else(|| DONE.into()))
    }
}

impl LlmBackend for ScriptedLlm {
    fn backend_id(&self) -> &str {
        "scripted"
    }

    fn capabilities(&self) -> LlmCapabilities {
        LlmCapabilities { generate: true, score: true }
    }

    fn generate(&self, prompt: &str, _max_tokens: usize, _stop: &[&str]) -> Result<String> {
        if let Some(instruction) = instruction_from_prompt(prompt) {
            return match self.proposals.get(&key(instruction)) {
                Some(c) => Ok(c.clone()),
                None => Ok(self.unknown(&format!("instruction `{instruction}`"))?.unwrap_or_default()),
            };
        }
        if let Some(ctx) = parse_query_context(prompt) {
            if let Some(c) = self.plan_completions.get(&plan_key(&ctx.instruction, &ctx.available_objects)) {
                return Ok(c.clone());
            }
            return Ok(self.unknown(&format!("plan `{}`", ctx.instruction))?.unwrap_or_default());
        }
        Err(Error::Generation("unrecognized prompt shape".into()))
    }

    fn score(&self, prompt: &str, continuations: &[String]) -> Result<Vec<f64>> {
        if self.never_done {
            return Ok(continuations
                .iter()
                .map(|c| if key(c) == DONE { 2.0 * MISMATCH_LOG_PROB } else { 0.0 })
                .collect());
        }
        let next = key(&self.next_step(prompt)?);
        Ok(continuations.iter().map(|c| if key(c) == next { 0.0 } else { MISMATCH_LOG_PROB }).collect())
    }
}

/// Proposal answer in a script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedProposal {
    pub instruction: String,
    pub completion: String,
}

/// Planning policy entry in a script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedPlan {
    pub instruction: String,
    pub required_objects: Vec<String>,
    pub steps: Vec<String>,
}

/// File form of a [`ScriptedLlm`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmScript {
    pub unknown: UnknownPolicy,
    pub proposals: Vec<ScriptedProposal>,
    pub plans: Vec<ScriptedPlan>,
}

impl LlmScript {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
    }

    /// Script entries layered over echoes of both prompts' own examples.
    pub fn to_llm(&self, proposal_prompt: &ProposalPrompt, planning_prompt: &PlanningPrompt) -> ScriptedLlm {
        let mut llm = ScriptedLlm::new()
            .with_proposal_examples(proposal_prompt)
            .with_planning_examples(planning_prompt)
            .with_unknown(self.unknown);
        for p in &self.proposals {
            llm = llm.with_proposal(&p.instruction, &p.completion);
        }
        for p in &self.plans {
            let script = PlanScript { required_objects: p.required_objects.clone(), steps: p.steps.clone() };
            llm = llm.with_plan(&p.instruction, script);
        }
        llm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteLlmConfig {
    pub base_url: String,
    #[serde(default = "default_backend_id")]
    pub backend_id: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retries: u32,
}

fn default_backend_id() -> String {
    "remote".into()
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
    stop: &'a [&'a str],
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    prompt: &'a str,
    continuations: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    log_probs: Vec<f64>,
}

/// HTTP client for `/generate` and `/score`.
#[derive(Debug)]
pub struct RemoteLlm {
    backend_id: String,
    client: JsonClient,
}

impl RemoteLlm {
    pub fn new(config: &RemoteLlmConfig) -> Result<Self> {
        if !(config.base_url.starts_with("http://") || config.base_url.starts_with("https://")) {
            return Err(Error::invalid(format!("llm base_url `{}` is not an http(s) URL", config.base_url)));
        }
        let client = JsonClient::new(&config.base_url, config.timeout_ms, config.max_in_flight, config.retries);
        Ok(RemoteLlm { backend_id: config.backend_id.clone(), client })
    }
}

impl LlmBackend for RemoteLlm {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn capabilities(&self) -> LlmCapabilities {
        LlmCapabilities { generate: true, score: true }
    }

    fn generate(&self, prompt: &str, max_tokens: usize, stop: &[&str]) -> Result<String> {
        let resp: GenerateResponse = self.client.post("/generate", &GenerateRequest { prompt, max_tokens, stop })?;
        Ok(resp.text)
    }

    fn score(&self, prompt: &str, continuations: &[String]) -> Result<Vec<f64>> {
        let resp: ScoreResponse = self.client.post("/score", &ScoreRequest { prompt, continuations })?;
        if resp.log_probs.len() != continuations.len() {
            return Err(Error::Generation(format!(
                "backend returned {} scores for {} continuations",
                resp.log_probs.len(),
                continuations.len()
            )));
        }
        Ok(resp.log_probs)
    }
}
