use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::explore::{simulate_exploration, NoiseSpec, SimProviders, Visibility};
use super::scene::{default_waypoints, dense_waypoints, generate_scene, SceneSpec, DISTRACTOR_LABELS};
use super::world::{SimWorld, WorldState};
use crate::embedding::MockProviderSpec;
use crate::error::{Error, Result};
use crate::exec::{map_range, ExecMode};
use crate::llm::{PlanScript, ScriptedLlm};
use crate::map::build_map;
use crate::planner::{Outcome, Plan, Planner, PlannerConfig, PlanningPrompt, SkillLibrary, TemplateSet, DONE};
use crate::proposal::ProposalPrompt;
use crate::seeds::derive_seed;
use crate::types::FusionParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaypointLayout {
    /// Eight cameras.
    #[default]
    Ring8,
    /// Sixteen cameras.
    Ring16,
}

/// What a correct plan looks like.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    /// Exactly these steps, then "done".
    Steps { steps: Vec<String> },
    /// "done" as the first step.
    Infeasible,
}

/// End-state predicate on the simulated world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Goal {
    /// `object` on the floor within reach of `target`.
    Near {
        object: String,
        target: String,
    },
    Holding {
        object: String,
    },
    /// Nothing moved and nothing held.
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchTask {
    pub id: String,
    pub family: String,
    pub instruction: String,
    /// Completion the scripted model gives for the proposal prompt.
    pub proposal: String,
    /// Labels placed in every trial scene.
    pub scene_labels: Vec<String>,
    /// Labels kept out of every trial scene.
    #[serde(default)]
    pub absent_labels: Vec<String>,
    /// Scripted planning policy.
    pub plan: PlanScript,
    pub expect: Expectation,
    pub goal: Goal,
}

/// Benchmark fixture. Tasks stay raw so a malformed entry is reported
/// without abandoning the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    pub suite_id: String,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub embedding: MockProviderSpec,
    #[serde(default)]
    pub fusion: FusionParams,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub visibility: Visibility,
    #[serde(default)]
    pub waypoints: WaypointLayout,
    pub tasks: Vec<serde_json::Value>,
}

impl BenchSuite {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub task_id: String,
    pub family: String,
    pub planning_success: bool,
    pub execution_success: bool,
    pub outcome: Option<Outcome>,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: String,
    pub trials: usize,
    pub planning_success_rate: f64,
    pub execution_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryError {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite_id: String,
    pub seed: u64,
    pub trials_per_task: usize,
    pub families: Vec<FamilyReport>,
    pub records: Vec<TrialRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entry_errors: Vec<EntryError>,
}

impl BenchReport {
    pub fn family(&self, name: &str) -> Option<&FamilyReport> {
        self.families.iter().find(|f| f.family == name)
    }

    /// One row per trial.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial_id,task_id,family,planning_success,execution_success,outcome,steps\n");
        for r in &self.records {
            let outcome = match r.outcome {
                Some(Outcome::Completed) => "completed",
                Some(Outcome::Infeasible) => "infeasible",
                Some(Outcome::StepLimit) => "step-limit",
                None => "error",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},\"{}\"",
                r.trial_id,
                r.task_id,
                r.family,
                u8::from(r.planning_success),
                u8::from(r.execution_success),
                outcome,
                r.steps.join("; ").replace('"', "\"\"")
            );
        }
        out
    }
}

/// Whether the plan, read as text, does what the task expects.
pub fn grade_plan(plan: &Plan, expect: &Expectation) -> bool {
    let labels = plan.labels();
    match expect {
        Expectation::Infeasible => plan.outcome == Outcome::Infeasible,
        Expectation::Steps { steps } => {
            plan.outcome == Outcome::Completed
                && labels.len() == steps.len() + 1
                && labels.iter().zip(steps).all(|(a, b)| *a == b.as_str())
                && labels.last() == Some(&DONE)
        }
    }
}

/// Whether the final world satisfies `goal`.
pub fn grade_world(initial: &WorldState, world: &SimWorld, goal: &Goal) -> bool {
    let s = &world.state;
    match goal {
        Goal::Near { object, target } => match (s.objects.get(object), s.objects.get(target)) {
            (Some(a), Some(b)) => a.planar_distance(b) <= world.reach,
            _ => false,
        },
        Goal::Holding { object } => s.gripper.as_deref() == Some(object.as_str()),
        Goal::Unchanged => s.gripper.is_none() && s.objects == initial.objects,
    }
}

struct Shared<'a> {
    suite: &'a BenchSuite,
    providers: SimProviders,
    llm: ScriptedLlm,
    library: SkillLibrary,
    templates: TemplateSet,
    proposal_prompt: ProposalPrompt,
    planning_prompt: PlanningPrompt,
}

fn run_trial(shared: &Shared<'_>, task: &BenchTask, trial: usize, seed: u64) -> TrialRecord {
    let trial_id = format!("{}#{trial:03}", task.id);
    let mut record = TrialRecord {
        trial_id: trial_id.clone(),
        task_id: task.id.clone(),
        family: task.family.clone(),
        planning_success: false,
        execution_success: false,
        outcome: None,
        steps: Vec::new(),
        error: None,
    };
    let result = (|| -> Result<(Plan, bool)> {
        let suite = shared.suite;
        let trial_seed = derive_seed(seed, &["trial", &trial_id]);
        let mut spec = suite.scene.clone();
        spec.required_labels.extend(task.scene_labels.iter().cloned());
        spec.excluded_labels.extend(task.absent_labels.iter().cloned());
        let scene = generate_scene(&trial_id, &spec, trial_seed)?;
        let poses = match suite.waypoints {
            WaypointLayout::Ring8 => default_waypoints(&scene.bounds, spec.height),
            WaypointLayout::Ring16 => dense_waypoints(&scene.bounds, spec.height),
        };
        let ex = simulate_exploration(&scene, &poses, &suite.noise, &shared.providers, &suite.visibility, trial_seed)?;
        let map = build_map(&trial_id, &ex.frames, &shared.providers.schema())?.map;
        let initial = WorldState::from_scene(&scene, scene.bounds.center());
        let mut world = SimWorld::new(initial.clone());
        let planner = Planner {
            llm: &shared.llm,
            text_provider: &shared.providers.clip,
            library: &shared.library,
            templates: &shared.templates,
            proposal_prompt: &shared.proposal_prompt,
            planning_prompt: &shared.planning_prompt,
            fusion: suite.fusion,
            config: suite.planner,
            mode: ExecMode::Sequential,
        };
        let plan = planner.run(&task.instruction, &map, &mut world)?;
        let executed = grade_world(&initial, &world, &task.goal);
        Ok((plan, executed))
    })();
    match result {
        Ok((plan, executed)) => {
            record.planning_success = grade_plan(&plan, &task.expect);
            record.execution_success = executed && plan.outcome != Outcome::StepLimit;
            record.outcome = Some(plan.outcome);
            record.steps = plan.steps.into_iter().map(|s| s.label).collect();
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Run every task `trials` times on freshly generated scenes and aggregate
/// per family. Malformed task entries are reported and skipped.
pub fn run_benchmark(suite: &BenchSuite, trials: usize, seed: u64, mode: ExecMode) -> Result<BenchReport> {
    if suite.tasks.is_empty() {
        return Err(Error::invalid("benchmark suite has no tasks"));
    }
    if trials == 0 {
        return Err(Error::invalid("benchmark needs at least one trial per task"));
    }
    suite.noise.validate()?;
    suite.fusion.validate()?;
    suite.planner.validate()?;
    let mut tasks = Vec::new();
    let mut entry_errors = Vec::new();
    for (index, raw) in suite.tasks.iter().enumerate() {
        match serde_json::from_value::<BenchTask>(raw.clone()) {
            Ok(task) => tasks.push(task),
            Err(e) => {
                log::warn!("benchmark task #{index}: {e}");
                entry_errors.push(EntryError { index, message: e.to_string() });
            }
        }
    }
    let providers = SimProviders::with_noise(suite.embedding.clone(), suite.noise.embedding_noise)?;
    let mut llm = ScriptedLlm::new();
    let mut vocabulary: Vec<String> = suite.scene.label_pool.clone();
    vocabulary.extend(DISTRACTOR_LABELS.iter().map(|s| s.to_string()));
    for task in &tasks {
        llm = llm.with_proposal(&task.instruction, &task.proposal).with_plan(&task.instruction, task.plan.clone());
        vocabulary.extend(task.scene_labels.iter().chain(&task.absent_labels).cloned());
    }
    let shared = Shared {
        suite,
        library: SkillLibrary::for_objects(&vocabulary, &providers.clip)?,
        providers,
        llm,
        templates: TemplateSet::default(),
        proposal_prompt: ProposalPrompt::default_v1(),
        planning_prompt: PlanningPrompt::default_v1(),
    };
    let jobs: Vec<(usize, usize)> = (0..tasks.len()).flat_map(|t| (0..trials).map(move |i| (t, i))).collect();
    let mut records = map_range(mode, jobs.len(), |j| {
        let (t, i) = jobs[j];
        run_trial(&shared, &tasks[t], i, seed)
    });
    records.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));

    let mut tally: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for r in &records {
        let e = tally.entry(r.family.as_str()).or_default();
        e.0 += 1;
        e.1 += usize::from(r.planning_success);
        e.2 += usize::from(r.execution_success);
    }
    let families = tally
        .into_iter()
        .map(|(family, (n, p, x))| FamilyReport {
            family: family.to_string(),
            trials: n,
            planning_success_rate: p as f64 / n as f64,
            execution_success_rate: x as f64 / n as f64,
        })
        .collect();
    Ok(BenchReport { suite_id: suite.suite_id.clone(), seed, trials_per_task: trials, families, records, entry_errors })
}
