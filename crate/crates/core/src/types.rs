//! Shared domain types: embeddings, context elements, the isotropic ground-plane
//! Gaussian used by fusion, and fusion hyperparameters.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the L2 norm of a stored embedding.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// A point in world coordinates, meters. `z` is up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    pub fn planar_distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Unique identifier of a context element within a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub u64);

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// A unit-norm embedding produced by one provider channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    provider_id: String,
    values: Vec<f32>,
}

fn l2_norm(values: &[f32]) -> f64 {
    values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

impl EmbeddingVector {
    /// Wraps `values`, rejecting anything that is not already unit-norm.
    pub fn new(provider_id: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        let provider_id = provider_id.into();
        if values.is_empty() {
            return Err(Error::invalid(format!("empty embedding from `{provider_id}`")));
        }
        let norm = l2_norm(&values);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!("embedding from `{provider_id}` has norm {norm}, expected 1")));
        }
        Ok(EmbeddingVector { provider_id, values })
    }

    /// Scales `values` to unit norm. Vectors already within [`UNIT_TOLERANCE`]
    /// are kept as-is, which makes normalization idempotent.
    pub fn normalized(provider_id: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        let provider_id = provider_id.into();
        let norm = l2_norm(&values);
        if values.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid(format!("cannot normalize embedding from `{provider_id}` (norm {norm})")));
        }
        if (norm - 1.0).abs() <= UNIT_TOLERANCE {
            return Ok(EmbeddingVector { provider_id, values });
        }
        let values = values.into_iter().map(|v| (f64::from(v) / norm) as f32).collect();
        Ok(EmbeddingVector { provider_id, values })
    }

    /// Builds from f64 components, normalizing.
    pub fn from_f64(provider_id: impl Into<String>, values: &[f64]) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Self::normalized(provider_id, values.iter().map(|v| (v / norm) as f32).collect())
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// Inner product accumulated in f64. Panics on dimension mismatch.
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "embedding dimension mismatch");
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// One observed region: embedding channels, estimated position and width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextElement {
    pub element_id: ElementId,
    pub frame_id: String,
    pub position: Point3,
    pub radius: f64,
    pub channels: BTreeMap<String, EmbeddingVector>,
}

impl ContextElement {
    pub fn new(
        element_id: ElementId,
        frame_id: impl Into<String>,
        position: Point3,
        radius: f64,
        channels: BTreeMap<String, EmbeddingVector>,
    ) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("element {element_id}: radius must be > 0, got {radius}")));
        }
        if !position.is_finite() {
            return Err(Error::invalid(format!("element {element_id}: non-finite position")));
        }
        if channels.is_empty() {
            return Err(Error::invalid(format!("element {element_id}: no embedding channels")));
        }
        Ok(ContextElement { element_id, frame_id: frame_id.into(), position, radius, channels })
    }

    pub fn channel(&self, provider_id: &str) -> Option<&EmbeddingVector> {
        self.channels.get(provider_id)
    }
}

/// Isotropic Gaussian on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2D {
    mean: [f64; 2],
    sigma: f64,
}

impl Gaussian2D {
    pub fn new(mean: [f64; 2], sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("gaussian sigma must be > 0, got {sigma}")));
        }
        if !(mean[0].is_finite() && mean[1].is_finite()) {
            return Err(Error::invalid("gaussian mean must be finite"));
        }
        Ok(Gaussian2D { mean, sigma })
    }

    /// `N((x, y), alpha * radius)` for a context element.
    pub fn for_element(element: &ContextElement, alpha: f64) -> Result<Self> {
        Self::new([element.position.x, element.position.y], alpha * element.radius)
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// KL(a ‖ b) for isotropic 2D Gaussians, closed form.
pub fn kl_divergence(a: &Gaussian2D, b: &Gaussian2D) -> f64 {
    const D: f64 = 2.0;
    let dx = a.mean[0] - b.mean[0];
    let dy = a.mean[1] - b.mean[1];
    let sq = dx * dx + dy * dy;
    let sa2 = a.sigma * a.sigma;
    let sb2 = b.sigma * b.sigma;
    let kl = D * (b.sigma / a.sigma).ln() + (D * sa2 + sq) / (2.0 * sb2) - D / 2.0;
    kl.max(0.0)
}

/// Support bonus `1 + t - t / n`, evaluated as `1 + t (n - 1) / n` so that
/// `f(1)` is exactly 1.
pub fn bonus_f(group_size: usize, t: f64) -> Result<f64> {
    if group_size == 0 {
        return Err(Error::invalid("bonus_f requires group_size >= 1"));
    }
    let n = group_size as f64;
    Ok(1.0 + t * ((n - 1.0) / n))
}

/// Hyperparameters for top-k retrieval and multi-view fusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionParams {
    /// Number of nearest elements handed to fusion.
    pub k: usize,
    /// Radius to standard-deviation scale.
    pub alpha: f64,
    /// KL threshold below which a candidate joins a group.
    pub lambda: f64,
    /// Acceptance threshold on the bonused seed score.
    pub beta: f64,
    /// Bonus strength.
    pub t: f64,
    /// Per-element minimum score before fusion.
    pub score_floor: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams { k: 4, alpha: 0.5, lambda: 4.0, beta: 0.55, t: 0.2, score_floor: 0.2 }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("fusion.k must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("fusion.alpha must be > 0"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("fusion.lambda must be > 0"));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::invalid("fusion.t must be >= 0"));
        }
        if !self.beta.is_finite() || !self.score_floor.is_finite() {
            return Err(Error::invalid("fusion.beta and fusion.score_floor must be finite"));
        }
        Ok(())
    }
}
