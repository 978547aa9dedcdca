//! Synthetic scenes, simulated exploration, a kinematic executor, and the
//! benchmark and ablation harnesses built on them.

mod ablation;
mod bench;
mod explore;
mod scene;
mod world;

pub use ablation::{run_ablation, AblationConfig, AblationReport, Variant, VariantResult};
pub use bench::{
    grade_plan, grade_world, run_benchmark, BenchReport, BenchSuite, BenchTask, EntryError, Expectation, FamilyReport,
    Goal, TrialRecord, WaypointLayout,
};
pub use explore::{is_visible, simulate_exploration, Exploration, NoiseSpec, RoiSource, SimProviders, Visibility};
pub use scene::{
    default_waypoints, dense_waypoints, generate_scene, ring_waypoints, Bounds, SceneObject, SceneSpec, SyntheticScene,
    DISTRACTOR_LABELS, KITCHEN_LABELS,
};
pub use world::{LogEntry, SimWorld, WorldState, BLOCKED_AFFORDANCE, DEFAULT_REACH};
