use std::collections::BTreeMap;

use super::{BuildInfo, ChannelSchema, Frame, RegionProposal, SceneRepresentation};
use crate::error::{Error, Result};
use crate::types::{ContextElement, ElementId, EmbeddingVector, Point3};

const MIN_RADIUS: f64 = 0.01;

/// Back-project a proposal to a world position and a width estimate.
///
/// Uses the median of the valid central depth samples. Returns `None` when
/// the patch has no finite positive sample.
pub fn extract_3d(roi: &RegionProposal, frame: &Frame) -> Option<(Point3, f64)> {
    let mut depths: Vec<f64> = roi.depth_patch.iter().copied().filter(|d| d.is_finite() && *d > 0.0).collect();
    if depths.is_empty() {
        return None;
    }
    depths.sort_by(f64::total_cmp);
    let mid = depths.len() / 2;
    let depth = if depths.len() % 2 == 1 { depths[mid] } else { (depths[mid - 1] + depths[mid]) / 2.0 };
    let (u, v) = roi.bbox.center();
    let camera_point = frame.intrinsics.back_project(u, v, depth);
    let position = frame.camera_pose.apply(camera_point);
    let radius = (roi.bbox.width() * depth / frame.intrinsics.fx).max(MIN_RADIUS);
    Some((position, radius))
}

/// The built map plus per-build counters.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutput {
    pub map: SceneRepresentation,
    pub skipped: usize,
}

fn check_frame(index: usize, frame: &Frame, schema: &ChannelSchema) -> Result<()> {
    let name = |msg: String| Error::schema(format!("frame `{}` (#{index}): {msg}", frame.frame_id));
    frame.camera_pose.validate().map_err(|e| name(e.to_string()))?;
    frame.intrinsics.validate().map_err(|e| name(e.to_string()))?;
    for (r, roi) in frame.rois.iter().enumerate() {
        if !roi.bbox.within(&frame.intrinsics) {
            return Err(name(format!("roi {r} bbox lies outside the image")));
        }
        if !(0.0..=1.0).contains(&roi.objectness) {
            return Err(name(format!("roi {r} objectness {} outside [0, 1]", roi.objectness)));
        }
        if roi.channels.len() != schema.channels().len() {
            return Err(name(format!(
                "roi {r} has {} channels, schema declares {}",
                roi.channels.len(),
                schema.channels().len()
            )));
        }
        for spec in schema.channels() {
            match roi.channels.get(&spec.provider_id) {
                None => return Err(name(format!("roi {r} is missing channel `{}`", spec.provider_id))),
                Some(v) if v.len() != spec.dimension => {
                    return Err(name(format!(
                        "roi {r} channel `{}` has dimension {}, expected {}",
                        spec.provider_id,
                        v.len(),
                        spec.dimension
                    )))
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

/// One context element per ROI with usable depth, in frame order then ROI
/// order. ROIs without valid depth are skipped and counted.
pub fn build_map(scene_id: &str, frames: &[Frame], schema: &ChannelSchema) -> Result<BuildOutput> {
    for (i, frame) in frames.iter().enumerate() {
        check_frame(i, frame, schema)?;
    }
    let mut elements = Vec::new();
    let mut skipped = 0;
    for (i, frame) in frames.iter().enumerate() {
        for (r, roi) in frame.rois.iter().enumerate() {
            let Some((position, radius)) = extract_3d(roi, frame) else {
                log::warn!("frame `{}` roi {r}: no valid depth, skipped", frame.frame_id);
                skipped += 1;
                continue;
            };
            let mut channels = BTreeMap::new();
            for spec in schema.channels() {
                let raw = roi.channels[&spec.provider_id].clone();
                let v = EmbeddingVector::normalized(spec.provider_id.clone(), raw)
                    .map_err(|e| Error::schema(format!("frame `{}` (#{i}) roi {r}: {e}", frame.frame_id)))?;
                channels.insert(spec.provider_id.clone(), v);
            }
            let id = ElementId(elements.len() as u64);
            elements.push(ContextElement::new(id, frame.frame_id.clone(), position, radius, channels)?);
        }
    }
    let info = BuildInfo {
        frame_count: frames.len(),
        skipped_rois: skipped,
        waypoints: frames.iter().map(|f| f.camera_pose).collect(),
        created_at: None,
    };
    let map = SceneRepresentation::new(scene_id, schema.clone(), info, elements)?;
    Ok(BuildOutput { map, skipped })
}
