//! Few-shot planning prompt: rendering, completion parsing and recovery of
//! the open query from a rendered prompt.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HUMAN: &str = "Human: ";
const AVAILABLE: &str = "Available objects are: ";
const EXPLANATION: &str = "Explanation: ";
const ROBOT: &str = "Robot: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningExample {
    pub instruction: String,
    pub available_objects: Vec<String>,
    pub explanation: String,
    /// The robot's numbered answer, verbatim.
    pub recorded_completion: String,
    /// Expected parse of `recorded_completion`.
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningPrompt {
    pub preamble: Vec<String>,
    pub examples: Vec<PlanningExample>,
}

static DEFAULT_PROMPT_V1: &str = include_str!("../../data/planning_prompt_v1.json");

impl PlanningPrompt {
    /// The shipped kitchen-robot prompt.
    pub fn default_v1() -> Self {
        serde_json::from_str(DEFAULT_PROMPT_V1).expect("bundled planning prompt parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn available_line(objects: &[String]) -> String {
    format!("{AVAILABLE}{}.", objects.join(", "))
}

/// Preamble, every exemplar block, then the open query with `history`
/// numbered from 1 and the next step number left open.
pub fn render_planning_prompt(
    instruction: &str,
    scene_objects: &[String],
    history: &[String],
    prompt: &PlanningPrompt,
) -> String {
    let mut out = String::new();
    for line in &prompt.preamble {
        out.push_str(line);
        out.push('\n');
    }
    for ex in &prompt.examples {
        out.push_str(&format!(
            "{HUMAN}{}\n{}\n{EXPLANATION}{}\n{ROBOT}{}\n",
            ex.instruction,
            available_line(&ex.available_objects),
            ex.explanation,
            ex.recorded_completion
        ));
    }
    out.push_str(&format!("{HUMAN}{}\n{}\n{ROBOT}", instruction.trim(), available_line(scene_objects)));
    for (i, step) in history.iter().enumerate() {
        out.push_str(&format!("{}. {step}\n", i + 1));
    }
    out.push_str(&format!("{}. ", history.len() + 1));
    out
}

fn numbered(line: &str) -> Option<(usize, &str)> {
    let (num, rest) = line.split_once('.')?;
    let n = num.trim().parse().ok()?;
    Some((n, rest.trim()))
}

/// Numbered steps of a robot answer, trailing periods removed. Stops at the
/// first unnumbered line or after "done".
pub fn parse_plan_completion(text: &str) -> Vec<String> {
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = if i == 0 { line.trim().strip_prefix(ROBOT.trim()).unwrap_or(line).trim() } else { line.trim() };
        let Some((_, step)) = numbered(line) else { break };
        let step = step.strip_suffix('.').unwrap_or(step).trim().to_string();
        let done = step == "done";
        steps.push(step);
        if done {
            break;
        }
    }
    steps
}

/// The open query at the end of a rendered planning prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct QueryContext {
    pub instruction: String,
    pub available_objects: Vec<String>,
    pub history: Vec<String>,
}

pub(crate) fn parse_query_context(prompt: &str) -> Option<QueryContext> {
    let start = if let Some(i) = prompt.rfind(&format!("\n{HUMAN}")) {
        i + 1
    } else if prompt.starts_with(HUMAN) {
        0
    } else {
        return None;
    };
    let block = &prompt[start + HUMAN.len()..];
    let mut lines = block.split('\n');
    let instruction = lines.next()?.trim().to_string();
    let objects = lines.next()?.strip_prefix(AVAILABLE)?.strip_suffix('.')?;
    let available_objects = objects.split(',').map(|o| o.trim().to_string()).filter(|o| !o.is_empty()).collect();
    let mut line = lines.next()?;
    while line.starts_with(EXPLANATION) {
        line = lines.next()?;
    }
    let first = line.strip_prefix(ROBOT)?;
    let mut history = Vec::new();
    let mut pending = Some(first);
    loop {
        let current = pending.take().or_else(|| lines.next())?;
        let (n, text) = numbered(current)?;
        if n != history.len() + 1 {
            return None;
        }
        if current.ends_with(". ") && text.is_empty() {
            return lines.next().is_none().then_some(QueryContext { instruction, available_objects, history });
        }
        history.push(text.to_string());
    }
}
