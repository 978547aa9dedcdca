use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scene::SyntheticScene;
use crate::planner::{Affordance, Executor, PlanOption, SkillKind};
use crate::types::Point3;

/// Affordance of an option that cannot run in the current state.
pub const BLOCKED_AFFORDANCE: f64 = 0.05;

pub const DEFAULT_REACH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub label: String,
    pub success: bool,
}

/// Robot, gripper and object positions. Held objects are not on the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot_position: Point3,
    pub gripper: Option<String>,
    pub objects: BTreeMap<String, Point3>,
    pub log: Vec<LogEntry>,
}

impl WorldState {
    pub fn from_scene(scene: &SyntheticScene, robot_position: Point3) -> Self {
        WorldState {
            robot_position,
            gripper: None,
            objects: scene.objects.iter().map(|o| (o.label.clone(), o.position)).collect(),
            log: Vec::new(),
        }
    }

    /// Floor objects plus the held one, sorted.
    pub fn inventory(&self) -> Vec<String> {
        let mut all: Vec<String> = self.objects.keys().cloned().chain(self.gripper.clone()).collect();
        all.sort();
        all
    }
}

/// Kinematic world: navigation teleports, picking needs reach and a free
/// gripper, placing drops the held object at the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub state: WorldState,
    pub reach: f64,
}

impl SimWorld {
    pub fn new(state: WorldState) -> Self {
        SimWorld { state, reach: DEFAULT_REACH }
    }

    fn can_pick(&self, option: &PlanOption) -> bool {
        self.state.gripper.is_none()
            && option
                .target_object
                .as_ref()
                .and_then(|t| self.state.objects.get(t))
                .is_some_and(|p| p.planar_distance(&self.state.robot_position) <= self.reach)
    }

    /// Apply `option`; failures leave the state unchanged apart from the log.
    pub fn execute_option(&mut self, option: &PlanOption) -> bool {
        let success = match option.kind {
            SkillKind::Navigate => match option.target_position {
                Some(p) => {
                    self.state.robot_position = p;
                    true
                }
                None => false,
            },
            SkillKind::Pick => {
                if self.can_pick(option) {
                    let label = option.target_object.clone().expect("checked by can_pick");
                    self.state.objects.remove(&label);
                    self.state.gripper = Some(label);
                    true
                } else {
                    false
                }
            }
            SkillKind::Place => match self.state.gripper.take() {
                Some(label) => {
                    self.state.objects.insert(label, self.state.robot_position);
                    true
                }
                None => false,
            },
            SkillKind::Terminal => true,
        };
        self.state.log.push(LogEntry { label: option.label.clone(), success });
        success
    }
}

impl Affordance for SimWorld {
    fn affordance(&self, option: &PlanOption) -> f64 {
        let ok = match option.kind {
            SkillKind::Navigate | SkillKind::Terminal => true,
            SkillKind::Pick => self.can_pick(option),
            SkillKind::Place => self.state.gripper.is_some(),
        };
        if ok {
            1.0
        } else {
            BLOCKED_AFFORDANCE
        }
    }
}

impl Executor for SimWorld {
    fn execute(&mut self, option: &PlanOption) -> bool {
        self.execute_option(option)
    }
}
