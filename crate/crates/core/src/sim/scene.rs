use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::seeds::derive_seed;
use crate::types::Point3;

/// Everyday kitchen objects placed in synthetic scenes.
pub const KITCHEN_LABELS: &[&str] = &[
    "apple",
    "banana",
    "orange",
    "lime",
    "grapefruit",
    "peanuts",
    "snickers",
    "twix",
    "trailmix",
    "chips",
    "candy",
    "cookie",
    "granola bar",
    "energy bar",
    "coke can",
    "pepsi",
    "sprite",
    "7up",
    "red bull",
    "water bottle",
    "milk",
    "juice",
    "tea",
    "coffee cup",
    "mug",
    "bowl",
    "plate",
    "sponge",
    "towel",
    "napkin",
    "knife",
    "fork",
    "spoon",
    "cutting board",
    "kettle",
    "toaster",
    "microwave",
    "blender",
    "salt",
    "pepper",
    "oatmeal",
    "cereal",
    "bread",
    "cheese",
    "yogurt",
    "egg carton",
    "paper cup",
    "plant",
    "lamp",
    "book",
    "keys",
    "wallet",
    "scissors",
    "tape",
    "stapler",
    "marker",
    "headphones",
    "charger",
    "soap",
    "first aid kit",
];

/// Labels never placed in scenes; spurious detections carry these.
pub const DISTRACTOR_LABELS: &[&str] = &[
    "teapot",
    "wine glass",
    "pizza",
    "donut",
    "croissant",
    "broccoli",
    "carrot",
    "umbrella",
    "backpack",
    "laptop",
    "keyboard",
    "mouse",
    "remote",
    "cell phone",
    "vase",
    "clock",
    "teddy bear",
    "hair drier",
    "toothbrush",
    "skateboard",
    "tennis racket",
    "frisbee",
    "baseball glove",
    "wine bottle",
    "hot dog",
    "sandwich",
    "cake",
    "suitcase",
    "tie",
    "handbag",
];

/// Axis-aligned planar extent in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn square(side: f64) -> Self {
        Bounds { min_x: -side / 2.0, min_y: -side / 2.0, max_x: side / 2.0, max_y: side / 2.0 }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (self.min_x..=self.max_x).contains(&p.x) && (self.min_y..=self.max_y).contains(&p.y)
    }

    pub fn center(&self) -> Point3 {
        Point3::new((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0, 0.0)
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.min_x, self.min_y, self.max_x, self.max_y].iter().all(|v| v.is_finite())
            && self.min_x < self.max_x
            && self.min_y < self.max_y;
        if !ok {
            return Err(Error::invalid("scene bounds must be finite with min < max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    /// Objects sampled from `label_pool` in addition to the fixed labels.
    pub object_count: usize,
    pub label_pool: Vec<String>,
    /// Always placed.
    pub required_labels: Vec<String>,
    /// Always placed and usable as put-down targets.
    pub receptacles: Vec<String>,
    /// Never placed.
    pub excluded_labels: Vec<String>,
    pub bounds: Bounds,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Height of every object center, meters.
    pub height: f64,
    /// Placement attempts per object before giving up.
    pub max_attempts: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            object_count: 20,
            label_pool: KITCHEN_LABELS.iter().map(|s| s.to_string()).collect(),
            required_labels: Vec::new(),
            receptacles: Vec::new(),
            excluded_labels: Vec::new(),
            bounds: Bounds::square(8.0),
            radius_min: 0.05,
            radius_max: 0.1,
            height: 0.0,
            max_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub label: String,
    pub position: Point3,
    /// Object width, meters.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
    pub receptacles: Vec<String>,
    pub bounds: Bounds,
    pub seed: u64,
}

impl SyntheticScene {
    pub fn object(&self, label: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.label == label)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.label.as_str()).collect()
    }
}

fn norm(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Place fixed labels, receptacles, then `object_count` distinct pool labels,
/// each uniformly in bounds at least `2 * radius_max` from every other.
pub fn generate_scene(scene_id: &str, spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.bounds.validate()?;
    if !(spec.radius_min > 0.0 && spec.radius_min <= spec.radius_max && spec.radius_max.is_finite()) {
        return Err(Error::invalid("scene radii must satisfy 0 < radius_min <= radius_max"));
    }
    let mut labels: Vec<String> = Vec::new();
    for l in spec.required_labels.iter().chain(&spec.receptacles) {
        let l = norm(l);
        if l.is_empty() {
            return Err(Error::invalid("scene labels must be non-empty"));
        }
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    let excluded: Vec<String> = spec.excluded_labels.iter().map(|l| norm(l)).collect();
    let mut pool: Vec<String> = Vec::new();
    for l in &spec.label_pool {
        let l = norm(l);
        if !l.is_empty() && !labels.contains(&l) && !excluded.contains(&l) && !pool.contains(&l) {
            pool.push(l);
        }
    }
    if spec.object_count > pool.len() {
        return Err(Error::Generation(format!(
            "scene needs {} pool labels but only {} are available",
            spec.object_count,
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["scene", scene_id]));
    pool.shuffle(&mut rng);
    labels.extend(pool.into_iter().take(spec.object_count));

    let spacing = 2.0 * spec.radius_max;
    let b = spec.bounds;
    let mut objects: Vec<SceneObject> = Vec::with_capacity(labels.len());
    for label in labels {
        let mut placed = None;
        for _ in 0..spec.max_attempts.max(1) {
            let p = Point3::new(rng.random_range(b.min_x..=b.max_x), rng.random_range(b.min_y..=b.max_y), spec.height);
            if objects.iter().all(|o| o.position.planar_distance(&p) >= spacing) {
                placed = Some(p);
                break;
            }
        }
        let Some(position) = placed else {
            return Err(Error::Generation(format!(
                "cannot place `{label}` at minimum spacing {spacing} m after {} attempts",
                spec.max_attempts
            )));
        };
        let radius = if spec.radius_min == spec.radius_max {
            spec.radius_min
        } else {
            rng.random_range(spec.radius_min..=spec.radius_max)
        };
        objects.push(SceneObject { label, position, radius });
    }
    Ok(SyntheticScene {
        scene_id: scene_id.to_string(),
        objects,
        receptacles: spec.receptacles.iter().map(|l| norm(l)).collect(),
        bounds: spec.bounds,
        seed,
    })
}

/// `n` level cameras evenly spaced on a circle of `radius` around the bounds
/// center, each turned `offset` radians from facing the center.
pub fn ring_waypoints(bounds: &Bounds, n: usize, radius: f64, offset: f64, height: f64) -> Vec<Pose> {
    let c = bounds.center();
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            let position = Point3::new(c.x + radius * a.cos(), c.y + radius * a.sin(), height);
            Pose::looking_along(position, a + std::f64::consts::PI + offset)
        })
        .collect()
}

/// Eight cameras on a 0.5 m ring at the bounds center, facing outward at
/// 45° steps, so neighbouring views overlap.
pub fn default_waypoints(bounds: &Bounds, height: f64) -> Vec<Pose> {
    ring_waypoints(bounds, 8, 0.5, std::f64::consts::PI, height)
}

/// The default eight plus eight cameras just outside the bounds looking 45°
/// off center, reaching the corners.
pub fn dense_waypoints(bounds: &Bounds, height: f64) -> Vec<Pose> {
    let half = (bounds.max_x - bounds.min_x).max(bounds.max_y - bounds.min_y) / 2.0;
    let mut poses = default_waypoints(bounds, height);
    poses.extend(ring_waypoints(bounds, 8, half * 1.0625, std::f64::consts::FRAC_PI_4, height));
    poses
}
