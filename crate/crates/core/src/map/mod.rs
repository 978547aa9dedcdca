//! Scene representation: building from frames, open-vocabulary queries with
//! multi-view fusion, persistence and heatmap export.

mod build;
mod frames;
mod fusion;
mod heatmap;
mod persist;
mod query;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::embedding::ChannelRole;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::types::{ContextElement, FusionParams, Point3};

pub use build::{build_map, extract_3d, BuildOutput};
pub use frames::{read_frames_jsonl, write_frames_jsonl};
pub use fusion::{group_candidates, multiview_fuse, Group};
pub use heatmap::{heatmap, GridSpec, Heatmap};
pub use persist::{load_map, read_map, save_map, write_map, FORMAT_VERSION, MAGIC};
pub use query::{query_object, query_objects, query_with_features, top_k, Scored};

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    fn within(&self, intrinsics: &Intrinsics) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= f64::from(intrinsics.width)
            && self.y_max <= f64::from(intrinsics.height)
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }
}

/// One class-agnostic region of interest with its embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionProposal {
    pub bbox: BBox,
    /// Depth samples from the center of the box, meters. Non-finite or
    /// non-positive samples are treated as missing.
    pub depth_patch: Vec<f64>,
    /// Raw embedding per channel, keyed by provider id.
    pub channels: std::collections::BTreeMap<String, Vec<f32>>,
    pub objectness: f64,
}

/// One observation: pose, intrinsics and proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: String,
    pub camera_pose: Pose,
    pub intrinsics: Intrinsics,
    pub rois: Vec<RegionProposal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub provider_id: String,
    pub dimension: usize,
    pub role: ChannelRole,
}

/// Declared embedding channels of a map. Exactly one channel encodes text;
/// every channel shares its dimension so all can be scored against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelSchema {
    channels: Vec<ChannelSpec>,
}

impl ChannelSchema {
    pub fn new(channels: Vec<ChannelSpec>) -> Result<Self> {
        let text: Vec<_> = channels.iter().filter(|c| c.role == ChannelRole::TextRegion).collect();
        if text.len() != 1 {
            return Err(Error::schema(format!(
                "channel schema needs exactly one text_region channel, found {}",
                text.len()
            )));
        }
        let dim = text[0].dimension;
        let mut seen = BTreeSet::new();
        for c in &channels {
            if c.dimension == 0 || c.dimension != dim {
                return Err(Error::schema(format!(
                    "channel `{}` has dimension {}, text channel has {dim}",
                    c.provider_id, c.dimension
                )));
            }
            if c.provider_id.is_empty() || !seen.insert(c.provider_id.as_str()) {
                return Err(Error::schema(format!("duplicate or empty channel id `{}`", c.provider_id)));
            }
        }
        Ok(ChannelSchema { channels })
    }

    /// The usual two-channel layout: `clip` (text + region) and `vild` (region only).
    pub fn clip_vild(dimension: usize) -> Self {
        ChannelSchema::new(vec![
            ChannelSpec { provider_id: "clip".into(), dimension, role: ChannelRole::TextRegion },
            ChannelSpec { provider_id: "vild".into(), dimension, role: ChannelRole::RegionOnly },
        ])
        .expect("static schema is valid")
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn text_channel(&self) -> &ChannelSpec {
        self.channels.iter().find(|c| c.role == ChannelRole::TextRegion).expect("validated at construction")
    }

    pub fn dimension(&self) -> usize {
        self.text_channel().dimension
    }

    pub fn provider_ids(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.provider_id.as_str())
    }

    fn check_element(&self, element: &ContextElement) -> Result<()> {
        if element.channels.len() != self.channels.len() {
            return Err(Error::schema(format!(
                "element {} has {} channels, schema declares {}",
                element.element_id,
                element.channels.len(),
                self.channels.len()
            )));
        }
        for spec in &self.channels {
            match element.channel(&spec.provider_id) {
                Some(v) if v.dimension() == spec.dimension => {}
                Some(v) => {
                    return Err(Error::schema(format!(
                        "element {} channel `{}` has dimension {}, expected {}",
                        element.element_id,
                        spec.provider_id,
                        v.dimension(),
                        spec.dimension
                    )))
                }
                None => {
                    return Err(Error::schema(format!(
                        "element {} is missing channel `{}`",
                        element.element_id, spec.provider_id
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Provenance recorded when a map is built.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildInfo {
    pub frame_count: usize,
    pub skipped_rois: usize,
    pub waypoints: Vec<Pose>,
    /// Wall-clock build time; left empty for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

/// The collection of context elements for one scene. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRepresentation {
    scene_id: String,
    channel_schema: ChannelSchema,
    build_info: BuildInfo,
    elements: Vec<ContextElement>,
}

impl SceneRepresentation {
    pub fn new(
        scene_id: impl Into<String>,
        channel_schema: ChannelSchema,
        build_info: BuildInfo,
        elements: Vec<ContextElement>,
    ) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for e in &elements {
            channel_schema.check_element(e)?;
            if !ids.insert(e.element_id) {
                return Err(Error::schema(format!("duplicate element id {}", e.element_id)));
            }
        }
        Ok(SceneRepresentation { scene_id: scene_id.into(), channel_schema, build_info, elements })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn channel_schema(&self) -> &ChannelSchema {
        &self.channel_schema
    }

    pub fn build_info(&self) -> &BuildInfo {
        &self.build_info
    }

    pub fn elements(&self) -> &[ContextElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn version(&self) -> u32 {
        FORMAT_VERSION
    }

    /// Replace the wall-clock stamp, keeping everything else.
    pub fn with_created_at(mut self, created_at: Option<String>) -> Self {
        self.build_info.created_at = created_at;
        self
    }
}

/// A fused object instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub position: Point3,
    pub score: f64,
    pub support: usize,
}

/// Answer to an object query. `found` iff `clusters` is non-empty; clusters
/// are sorted by descending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub name: String,
    pub found: bool,
    pub clusters: Vec<Cluster>,
    pub params_used: FusionParams,
}

impl QueryResult {
    pub fn best(&self) -> Option<&Cluster> {
        self.clusters.first()
    }
}
