//! Context-grounded planning: options from detected objects, policy binding
//! by text-embedding nearest neighbour, and the language-model × affordance
//! selection loop.

pub mod prompt;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::embedding::{encode_text, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::llm::LlmBackend;
use crate::map::{query_objects, SceneRepresentation};
use crate::proposal::{propose_objects, ProposalPrompt};
use crate::types::{EmbeddingVector, FusionParams, Point3};

pub use prompt::{parse_plan_completion, render_planning_prompt, PlanningExample, PlanningPrompt};

/// Label of the terminal option.
pub const DONE: &str = "done";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    Navigate,
    Pick,
    Place,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skill {
    pub policy_id: String,
    pub description: String,
    pub kind: SkillKind,
}

/// Skills with precomputed description embeddings.
#[derive(Debug, Clone)]
pub struct SkillLibrary {
    skills: Vec<Skill>,
    vectors: Vec<EmbeddingVector>,
}

impl SkillLibrary {
    /// Requires unique policy ids and exactly one terminal skill.
    pub fn new(skills: Vec<Skill>, provider: &dyn EmbeddingProvider) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for s in &skills {
            if s.policy_id.is_empty() || !ids.insert(s.policy_id.as_str()) {
                return Err(Error::invalid(format!("duplicate or empty policy id `{}`", s.policy_id)));
            }
        }
        let terminals = skills.iter().filter(|s| s.kind == SkillKind::Terminal).count();
        if terminals != 1 {
            return Err(Error::invalid(format!("skill library needs exactly one terminal skill, found {terminals}")));
        }
        let vectors = skills
            .iter()
            .map(|s| encode_text(provider, &s.description).map(|q| q.text_vector))
            .collect::<Result<Vec<_>>>()?;
        Ok(SkillLibrary { skills, vectors })
    }

    /// A go-to-position skill, a terminal skill, and pick/place skills for
    /// each label in `vocabulary`.
    pub fn for_objects<S: AsRef<str>>(vocabulary: &[S], provider: &dyn EmbeddingProvider) -> Result<Self> {
        let mut skills = vec![
            Skill { policy_id: "navigate".into(), description: "go to a location".into(), kind: SkillKind::Navigate },
            Skill { policy_id: DONE.into(), description: DONE.into(), kind: SkillKind::Terminal },
        ];
        let labels: BTreeSet<String> = vocabulary.iter().map(|l| l.as_ref().trim().to_lowercase()).collect();
        for label in labels {
            skills.push(Skill {
                policy_id: format!("pick:{label}"),
                description: format!("pick up the {label}"),
                kind: SkillKind::Pick,
            });
            skills.push(Skill {
                policy_id: format!("place:{label}"),
                description: format!("put down the {label}"),
                kind: SkillKind::Place,
            });
        }
        Self::new(skills, provider)
    }

    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    pub fn get(&self, policy_id: &str) -> Option<&Skill> {
        self.skills.iter().find(|s| s.policy_id == policy_id)
    }

    fn first_of(&self, kind: SkillKind) -> Option<&Skill> {
        self.skills.iter().find(|s| s.kind == kind)
    }
}

/// Option frame with a single `{}` slot for the object name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub frame: String,
    pub kind: SkillKind,
}

impl Template {
    pub fn new(frame: impl Into<String>, kind: SkillKind) -> Result<Self> {
        let frame = frame.into();
        if frame.matches("{}").count() != 1 {
            return Err(Error::invalid(format!("template `{frame}` must contain exactly one {{}} slot")));
        }
        if kind == SkillKind::Terminal {
            return Err(Error::invalid("templates cannot be terminal"));
        }
        Ok(Template { frame, kind })
    }

    pub fn render(&self, object: &str) -> String {
        self.frame.replacen("{}", object, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateSet {
    templates: Vec<Template>,
}

impl TemplateSet {
    pub fn new(templates: Vec<Template>) -> Result<Self> {
        for t in &templates {
            Template::new(t.frame.clone(), t.kind)?;
        }
        Ok(TemplateSet { templates })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: vec![
                Template { frame: "find the {}".into(), kind: SkillKind::Navigate },
                Template { frame: "pick up the {}".into(), kind: SkillKind::Pick },
                Template { frame: "put down the {}".into(), kind: SkillKind::Place },
            ],
        }
    }
}

/// An object confirmed in the map, with its best fused location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub name: String,
    pub position: Point3,
    pub score: f64,
}

/// An executable option. `bound_policy` is `None` until binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOption {
    pub label: String,
    pub kind: SkillKind,
    pub target_object: Option<String>,
    pub target_position: Option<Point3>,
    pub bound_policy: Option<String>,
}

impl PlanOption {
    pub fn done() -> Self {
        PlanOption {
            label: DONE.into(),
            kind: SkillKind::Terminal,
            target_object: None,
            target_position: None,
            bound_policy: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.kind == SkillKind::Terminal
    }
}

/// Every detected object under every template, then "done".
pub fn generate_options(detected: &[DetectedObject], templates: &TemplateSet) -> Vec<PlanOption> {
    let mut out = Vec::with_capacity(detected.len() * templates.templates.len() + 1);
    for object in detected {
        for t in &templates.templates {
            out.push(PlanOption {
                label: t.render(&object.name),
                kind: t.kind,
                target_object: Some(object.name.clone()),
                target_position: (t.kind == SkillKind::Navigate).then_some(object.position),
                bound_policy: None,
            });
        }
    }
    out.push(PlanOption::done());
    out
}

/// Nearest skill description to `label` in text space, ties by policy id.
/// Returns the policy id and its similarity.
pub fn bind_policy(
    label: &str,
    library: &SkillLibrary,
    provider: &dyn EmbeddingProvider,
    tau_bind: f64,
) -> Result<(String, f64)> {
    if library.skills.is_empty() {
        return Err(Error::invalid("skill library is empty"));
    }
    let query = encode_text(provider, label)?.text_vector;
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in library.vectors.iter().enumerate() {
        let sim = query.dot(v);
        let better = match best {
            None => true,
            Some((j, s)) => sim > s || (sim == s && library.skills[i].policy_id < library.skills[j].policy_id),
        };
        if better {
            best = Some((i, sim));
        }
    }
    let (i, sim) = best.expect("library is non-empty");
    if sim < tau_bind {
        return Err(Error::UnboundOption { label: label.to_string(), best: sim });
    }
    Ok((library.skills[i].policy_id.clone(), sim))
}

/// Bind navigate options to the go-to skill, "done" to the terminal skill and
/// manipulation options by nearest neighbour. Unbindable options are dropped
/// and their labels returned.
pub fn bind_options(
    options: Vec<PlanOption>,
    library: &SkillLibrary,
    provider: &dyn EmbeddingProvider,
    tau_bind: f64,
) -> Result<(Vec<PlanOption>, Vec<String>)> {
    let mut bound = Vec::with_capacity(options.len());
    let mut unbound = Vec::new();
    for mut option in options {
        let policy = match option.kind {
            SkillKind::Navigate | SkillKind::Terminal => library.first_of(option.kind).map(|s| s.policy_id.clone()),
            SkillKind::Pick | SkillKind::Place => match bind_policy(&option.label, library, provider, tau_bind) {
                Ok((id, _)) => Some(id),
                Err(Error::UnboundOption { label, best }) => {
                    log::warn!("option `{label}` left unbound (best similarity {best:.3})");
                    None
                }
                Err(e) => return Err(e),
            },
        };
        match policy {
            Some(id) => {
                option.bound_policy = Some(id);
                bound.push(option);
            }
            None => unbound.push(option.label),
        }
    }
    Ok((bound, unbound))
}

/// Executability of an option in the current state, in [0, 1].
pub trait Affordance {
    fn affordance(&self, option: &PlanOption) -> f64;
}

/// Carries out a selected option, updating its state. Returns success.
pub trait Executor {
    fn execute(&mut self, option: &PlanOption) -> bool;
}

/// Everything is executable and every execution succeeds.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenLoop;

impl Affordance for OpenLoop {
    fn affordance(&self, _option: &PlanOption) -> f64 {
        1.0
    }
}

impl Executor for OpenLoop {
    fn execute(&mut self, _option: &PlanOption) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerState {
    pub instruction: String,
    pub scene_objects: Vec<String>,
    pub history: Vec<String>,
    pub step_index: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub label: String,
    pub q_llm: f64,
    pub q_affordance: f64,
    pub q_combined: f64,
}

/// Per-option records for one step and the index of the selected option.
#[derive(Debug, Clone, PartialEq)]
pub struct StepChoice {
    pub selected: usize,
    pub candidates: Vec<StepRecord>,
}

impl StepChoice {
    pub fn record(&self) -> &StepRecord {
        &self.candidates[self.selected]
    }
}

/// Softmax of raw log scores.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Argmax of `q_combined`, ties broken by label ascending.
pub fn select(candidates: &[StepRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let better = match best {
            None => true,
            Some(j) => {
                let b = &candidates[j];
                c.q_combined > b.q_combined || (c.q_combined == b.q_combined && c.label < b.label)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Score every option as the next step and pick the best product of
/// language-model probability and affordance.
pub fn plan_step(
    state: &PlannerState,
    options: &[PlanOption],
    llm: &dyn LlmBackend,
    prompt: &PlanningPrompt,
    affordance: &dyn Affordance,
) -> Result<StepChoice> {
    if !options.iter().any(PlanOption::is_done) {
        return Err(Error::invalid("option set must include \"done\""));
    }
    if !llm.capabilities().score {
        return Err(Error::Capability { provider: llm.backend_id().to_string(), capability: "scoring" });
    }
    let rendered = render_planning_prompt(&state.instruction, &state.scene_objects, &state.history, prompt);
    let labels: Vec<String> = options.iter().map(|o| o.label.clone()).collect();
    let raw = llm.score(&rendered, &labels)?;
    if raw.len() != labels.len() || raw.iter().any(|r| r.is_nan()) {
        return Err(Error::Generation(format!("backend returned {} scores for {} options", raw.len(), labels.len())));
    }
    let q_llm = softmax(&raw);
    let mut candidates = Vec::with_capacity(options.len());
    for ((option, label), q) in options.iter().zip(labels).zip(q_llm) {
        let a = affordance.affordance(option);
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid(format!("affordance {a} for `{label}` outside [0, 1]")));
        }
        candidates.push(StepRecord { label, q_llm: q, q_affordance: a, q_combined: q * a });
    }
    let selected = select(&candidates).expect("options are non-empty");
    Ok(StepChoice { selected, candidates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "completed")]
    Completed,
    #[serde(rename = "infeasible")]
    Infeasible,
    #[serde(rename = "step-limit")]
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub instruction: String,
    pub scene_objects: Vec<String>,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unbound_options: Vec<String>,
}

impl Plan {
    pub fn labels(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.label.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub max_steps: usize,
    pub tau_bind: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { max_steps: 20, tau_bind: 0.5 }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::invalid("planner.max_steps must be >= 1"));
        }
        if !(-1.0..=1.0).contains(&self.tau_bind) {
            return Err(Error::invalid("planner.tau_bind must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// Wiring for the full instruction-to-plan pipeline.
pub struct Planner<'a> {
    pub llm: &'a dyn LlmBackend,
    pub text_provider: &'a dyn EmbeddingProvider,
    pub library: &'a SkillLibrary,
    pub templates: &'a TemplateSet,
    pub proposal_prompt: &'a ProposalPrompt,
    pub planning_prompt: &'a PlanningPrompt,
    pub fusion: FusionParams,
    pub config: PlannerConfig,
    pub mode: ExecMode,
}

impl Planner<'_> {
    /// Propose objects for `instruction` and keep those the map finds. An
    /// empty proposal yields no objects.
    pub fn perceive(&self, instruction: &str, map: &SceneRepresentation) -> Result<Vec<DetectedObject>> {
        let names = match propose_objects(self.llm, instruction, self.proposal_prompt) {
            Ok(list) => list.names().to_vec(),
            Err(Error::EmptyProposal) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let results = query_objects(map, &names, self.text_provider, &self.fusion, self.mode)?;
        Ok(results
            .into_iter()
            .filter_map(|r| {
                let best = r.best()?;
                Some(DetectedObject { name: r.name.clone(), position: best.position, score: best.score })
            })
            .collect())
    }

    /// Plan against an already detected object set, executing each step.
    pub fn plan_with_objects<E>(&self, instruction: &str, detected: &[DetectedObject], env: &mut E) -> Result<Plan>
    where
        E: Affordance + Executor,
    {
        self.config.validate()?;
        let options = generate_options(detected, self.templates);
        let (options, unbound_options) = bind_options(options, self.library, self.text_provider, self.config.tau_bind)?;
        let mut state = PlannerState {
            instruction: instruction.trim().to_string(),
            scene_objects: detected.iter().map(|d| d.name.clone()).collect(),
            history: Vec::new(),
            step_index: 1,
            max_steps: self.config.max_steps,
        };
        let mut steps = Vec::new();
        let mut outcome = Outcome::StepLimit;
        while state.step_index <= state.max_steps {
            let choice = plan_step(&state, &options, self.llm, self.planning_prompt, &*env)?;
            let option = &options[choice.selected];
            steps.push(choice.record().clone());
            if option.is_done() {
                outcome = if state.step_index == 1 { Outcome::Infeasible } else { Outcome::Completed };
                break;
            }
            if !env.execute(option) {
                log::info!("step {} `{}` failed to execute", state.step_index, option.label);
            }
            state.history.push(option.label.clone());
            state.step_index += 1;
        }
        Ok(Plan { instruction: state.instruction, scene_objects: state.scene_objects, steps, outcome, unbound_options })
    }

    /// Propose, ground in `map`, then plan and execute.
    pub fn run<E>(&self, instruction: &str, map: &SceneRepresentation, env: &mut E) -> Result<Plan>
    where
        E: Affordance + Executor,
    {
        let detected = self.perceive(instruction, map)?;
        self.plan_with_objects(instruction, &detected, env)
    }

    /// Free-form plan text for `instruction` given `objects`, parsed into steps.
    pub fn generate_plan(&self, instruction: &str, objects: &[String]) -> Result<Vec<String>> {
        generate_plan(self.llm, instruction, objects, self.planning_prompt)
    }
}

/// Generate a whole plan in one completion and parse its numbered steps.
pub fn generate_plan(
    llm: &dyn LlmBackend,
    instruction: &str,
    objects: &[String],
    prompt: &PlanningPrompt,
) -> Result<Vec<String>> {
    let rendered = render_planning_prompt(instruction, objects, &[], prompt);
    let completion = llm.generate(&rendered, 256, &["\nHuman:"])?;
    Ok(parse_plan_completion(&format!("1. {completion}")))
}
