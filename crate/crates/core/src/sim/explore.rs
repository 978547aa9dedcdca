use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::scene::{SceneObject, SyntheticScene, DISTRACTOR_LABELS};
use crate::embedding::{ChannelRole, MockProvider, MockProviderSpec};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::map::{BBox, ChannelSchema, Frame, RegionProposal};
use crate::seeds::derive_seed;
use crate::types::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Per-observation planar position jitter, meters.
    pub position_sigma: f64,
    /// Per-observation width jitter, meters.
    pub radius_sigma: f64,
    /// Chance a visible object yields a proposal in a view.
    pub detect_prob: f64,
    /// Expected spurious proposals per frame.
    pub false_positive_rate: f64,
    /// Angular jitter of region embeddings, radians.
    pub embedding_noise: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            position_sigma: 0.05,
            radius_sigma: 0.01,
            detect_prob: 0.8,
            false_positive_rate: 0.5,
            embedding_noise: 0.1,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            position_sigma: 0.0,
            radius_sigma: 0.0,
            detect_prob: 1.0,
            false_positive_rate: 0.0,
            embedding_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.detect_prob) {
            return Err(Error::invalid("noise.detect_prob must lie in [0, 1]"));
        }
        for (name, v) in [
            ("position_sigma", self.position_sigma),
            ("radius_sigma", self.radius_sigma),
            ("false_positive_rate", self.false_positive_rate),
            ("embedding_noise", self.embedding_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("noise.{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Frustum visibility: in front of the camera, within range, and the whole
/// box inside the image. No occlusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Visibility {
    pub range: f64,
    pub min_depth: f64,
    pub image_size: u32,
}

impl Default for Visibility {
    fn default() -> Self {
        Visibility { range: 4.0, min_depth: 0.3, image_size: 640 }
    }
}

impl Visibility {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::square_fov90(self.image_size)
    }
}

/// Pixel box of an object of width `radius` at camera-frame point `c`.
fn bbox_for(c: [f64; 3], radius: f64, k: &Intrinsics) -> Option<BBox> {
    let (u, v) = k.project(c)?;
    let half = radius * k.fx / c[2] / 2.0;
    Some(BBox { x_min: u - half, y_min: v - half, x_max: u + half, y_max: v + half })
}

fn inside(b: &BBox, k: &Intrinsics) -> bool {
    b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= f64::from(k.width) && b.y_max <= f64::from(k.height)
}

/// Whether `object` is visible from `pose`.
pub fn is_visible(object: &SceneObject, pose: &Pose, vis: &Visibility) -> bool {
    let c = pose.inverse_apply(&object.position);
    if c[2] < vis.min_depth || object.position.distance(&pose.position()) > vis.range {
        return false;
    }
    let k = vis.intrinsics();
    bbox_for(c, object.radius, &k).is_some_and(|b| inside(&b, &k))
}

/// Mock text-region and region-only channels sharing one text space.
#[derive(Debug, Clone)]
pub struct SimProviders {
    pub clip: MockProvider,
    pub vild: MockProvider,
}

impl SimProviders {
    pub fn new(spec: MockProviderSpec) -> Result<Self> {
        Ok(SimProviders {
            clip: MockProvider::new("clip", ChannelRole::TextRegion, spec.clone())?,
            vild: MockProvider::new("vild", ChannelRole::RegionOnly, spec)?,
        })
    }

    /// Same providers with `embedding_noise` as the angular jitter.
    pub fn with_noise(spec: MockProviderSpec, embedding_noise: f64) -> Result<Self> {
        Self::new(MockProviderSpec { noise_sigma: embedding_noise, ..spec })
    }

    pub fn schema(&self) -> ChannelSchema {
        ChannelSchema::clip_vild(self.clip.spec().dimension)
    }

    fn channels(&self, label: &str, nonce: u64) -> BTreeMap<String, Vec<f32>> {
        [(&self.clip, "clip"), (&self.vild, "vild")]
            .into_iter()
            .map(|(p, id)| (id.to_string(), p.region_vector(label, nonce).into_iter().map(|x| x as f32).collect()))
            .collect()
    }
}

/// Ground truth behind one proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiSource {
    /// Index into the scene's objects.
    Object(usize),
    FalsePositive {
        label: String,
        position: Point3,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub frames: Vec<Frame>,
    /// Parallel to each frame's `rois`.
    pub sources: Vec<Vec<RoiSource>>,
}

impl Exploration {
    /// Proposals attributed to each scene object.
    pub fn support_counts(&self, object_count: usize) -> Vec<usize> {
        let mut counts = vec![0; object_count];
        for src in self.sources.iter().flatten() {
            if let RoiSource::Object(i) = src {
                counts[*i] += 1;
            }
        }
        counts
    }
}

fn roi(bbox: BBox, depth: f64, channels: BTreeMap<String, Vec<f32>>, objectness: f64) -> RegionProposal {
    RegionProposal { bbox, depth_patch: vec![depth], channels, objectness }
}

/// Clamp a box into the image, keeping it non-degenerate.
fn clamp(b: BBox, k: &Intrinsics) -> BBox {
    let (w, h) = (f64::from(k.width), f64::from(k.height));
    let x_min = b.x_min.clamp(0.0, w - 1.0);
    let y_min = b.y_min.clamp(0.0, h - 1.0);
    BBox { x_min, y_min, x_max: b.x_max.clamp(x_min + 1.0, w), y_max: b.y_max.clamp(y_min + 1.0, h) }
}

/// One frame per waypoint with noisy proposals for visible objects plus
/// Poisson-distributed spurious proposals labeled from the distractor pool.
pub fn simulate_exploration(
    scene: &SyntheticScene,
    waypoints: &[Pose],
    noise: &NoiseSpec,
    providers: &SimProviders,
    vis: &Visibility,
    seed: u64,
) -> Result<Exploration> {
    if waypoints.is_empty() {
        return Err(Error::invalid("exploration needs at least one waypoint"));
    }
    noise.validate()?;
    let k = vis.intrinsics();
    let jitter = |sigma: f64| Normal::new(0.0, sigma).expect("sigma validated");
    let mut frames = Vec::with_capacity(waypoints.len());
    let mut sources = Vec::with_capacity(waypoints.len());
    for (fi, pose) in waypoints.iter().enumerate() {
        let fi_s = fi.to_string();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["frame", &scene.scene_id, &fi_s]));
        let frame_id = format!("{}/f{fi:03}", scene.scene_id);
        let nonce = |r: usize| derive_seed(seed, &["roi", &scene.scene_id, &fi_s, &r.to_string()]);
        let mut rois = Vec::new();
        let mut srcs = Vec::new();
        for (oi, object) in scene.objects.iter().enumerate() {
            if !is_visible(object, pose, vis) || !rng.random_bool(noise.detect_prob) {
                continue;
            }
            let mut p = object.position;
            p.x += jitter(noise.position_sigma).sample(&mut rng);
            p.y += jitter(noise.position_sigma).sample(&mut rng);
            let radius = (object.radius + jitter(noise.radius_sigma).sample(&mut rng)).max(0.01);
            let c = pose.inverse_apply(&p);
            if c[2] < vis.min_depth / 2.0 {
                continue;
            }
            let Some(bbox) = bbox_for(c, radius, &k) else { continue };
            let bbox = if inside(&bbox, &k) { bbox } else { clamp(bbox, &k) };
            rois.push(roi(bbox, c[2], providers.channels(&object.label, nonce(rois.len())), 0.9));
            srcs.push(RoiSource::Object(oi));
        }
        let spurious = if noise.false_positive_rate > 0.0 {
            Poisson::new(noise.false_positive_rate).expect("rate validated").sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..spurious {
            let label = DISTRACTOR_LABELS[rng.random_range(0..DISTRACTOR_LABELS.len())];
            let radius = rng.random_range(0.05..=0.15);
            let depth = rng.random_range(vis.min_depth.max(0.5)..=vis.range * 0.9);
            let half = radius * k.fx / depth / 2.0;
            let u = rng.random_range(half..=f64::from(k.width) - half);
            let bbox = BBox { x_min: u - half, y_min: k.cy - half, x_max: u + half, y_max: k.cy + half };
            let position = pose.apply(k.back_project(u, k.cy, depth));
            rois.push(roi(bbox, depth, providers.channels(label, nonce(rois.len())), 0.6));
            srcs.push(RoiSource::FalsePositive { label: label.to_string(), position });
        }
        frames.push(Frame { frame_id, camera_pose: *pose, intrinsics: k, rois });
        sources.push(srcs);
    }
    Ok(Exploration { frames, sources })
}
