//! Deterministic stand-in for vision-language encoders.
//!
//! Every label gets a text vector in a shared space that depends only on the
//! seed and the confusion pairs, so several mock channels built from the same
//! seed agree on text encodings. Region vectors are built by exact-angle
//! construction: prescribed cosines against the label's text vector (and
//! against confusion partners), filled with a seeded residual orthogonal to
//! all of them.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Capabilities, ChannelRole, EmbeddingProvider, RegionObservation};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::types::EmbeddingVector;

/// Two labels whose encodings share a prescribed cosine.
///
/// `text(second)` is built to have cosine `cosine` with `text(first)`, and
/// region vectors of either label have that cosine with the other label's
/// text vector (before observation noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub first: String,
    pub second: String,
    pub cosine: f64,
}

impl ConfusionPair {
    pub fn new(first: impl Into<String>, second: impl Into<String>, cosine: f64) -> Self {
        ConfusionPair { first: first.into(), second: second.into(), cosine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockProviderSpec {
    pub seed: u64,
    pub dimension: usize,
    /// Cosine between a label's text vector and a noiseless region of it.
    pub true_alignment: f64,
    /// Standard deviation of the per-observation jitter on each prescribed angle, radians.
    pub noise_sigma: f64,
    pub confusion_pairs: Vec<ConfusionPair>,
    /// Fraction of labels this channel recognizes poorly.
    pub weak_fraction: f64,
    /// Alignment used for poorly recognized labels.
    pub weak_alignment: f64,
}

impl Default for MockProviderSpec {
    fn default() -> Self {
        MockProviderSpec {
            seed: 0,
            dimension: 64,
            true_alignment: 0.9,
            noise_sigma: 0.0,
            confusion_pairs: Vec::new(),
            weak_fraction: 0.0,
            weak_alignment: 0.3,
        }
    }
}

impl MockProviderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 4 {
            return Err(Error::invalid("mock dimension must be >= 4"));
        }
        if !(self.true_alignment > 0.0 && self.true_alignment <= 1.0) {
            return Err(Error::invalid("mock true_alignment must be in (0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("mock noise_sigma must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.weak_fraction) {
            return Err(Error::invalid("mock weak_fraction must be in [0, 1]"));
        }
        if !(-1.0..=1.0).contains(&self.weak_alignment) {
            return Err(Error::invalid("mock weak_alignment must be in [-1, 1]"));
        }
        for pair in &self.confusion_pairs {
            if !(pair.cosine > -1.0 && pair.cosine < 1.0) {
                return Err(Error::invalid(format!(
                    "confusion pair ({}, {}) cosine must be in (-1, 1)",
                    pair.first, pair.second
                )));
            }
            if key(&pair.first) == key(&pair.second) || key(&pair.first).is_empty() {
                return Err(Error::invalid("confusion pair needs two distinct labels"));
            }
        }
        // `text(second)` depends on `text(first)`; the dependency graph must be acyclic.
        let mut anchors: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for pair in &self.confusion_pairs {
            anchors.entry(key(&pair.second)).or_default().push(key(&pair.first));
        }
        fn visit(
            label: &str,
            anchors: &BTreeMap<String, Vec<String>>,
            stack: &mut BTreeSet<String>,
            done: &mut BTreeSet<String>,
        ) -> Result<()> {
            if done.contains(label) {
                return Ok(());
            }
            if !stack.insert(label.to_string()) {
                return Err(Error::invalid(format!("confusion pairs form a cycle through `{label}`")));
            }
            for a in anchors.get(label).into_iter().flatten() {
                visit(a, anchors, stack, done)?;
            }
            stack.remove(label);
            done.insert(label.to_string());
            Ok(())
        }
        let mut done = BTreeSet::new();
        for label in anchors.keys() {
            visit(label, &anchors, &mut BTreeSet::new(), &mut done)?;
        }
        Ok(())
    }
}

fn key(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Seeded mock channel. Stateless after construction.
#[derive(Debug, Clone)]
pub struct MockProvider {
    provider_id: String,
    role: ChannelRole,
    spec: MockProviderSpec,
}

impl MockProvider {
    pub fn new(provider_id: impl Into<String>, role: ChannelRole, spec: MockProviderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(MockProvider { provider_id: provider_id.into(), role, spec })
    }

    pub fn spec(&self) -> &MockProviderSpec {
        &self.spec
    }

    pub fn role(&self) -> ChannelRole {
        self.role
    }

    fn gaussian_vector(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.spec.dimension).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Text vector for `label` in f64, unit norm.
    pub fn text_vector(&self, label: &str) -> Vec<f64> {
        let label = key(label);
        let base = self.gaussian_vector(derive_seed(self.spec.seed, &["text", &label]));
        let targets: Vec<(Vec<f64>, f64)> = self
            .spec
            .confusion_pairs
            .iter()
            .filter(|p| key(&p.second) == label)
            .map(|p| (self.text_vector(&p.first), p.cosine))
            .collect();
        if targets.is_empty() {
            normalize(base)
        } else {
            exact_angle(&targets, &base)
        }
    }

    fn alignment_for(&self, label: &str) -> f64 {
        if self.spec.weak_fraction > 0.0 {
            let seed = derive_seed(self.spec.seed, &["weak", &self.provider_id, label]);
            let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
            if u < self.spec.weak_fraction {
                return self.spec.weak_alignment;
            }
        }
        self.spec.true_alignment
    }

    /// Region vector for a labeled observation in f64, unit norm.
    pub fn region_vector(&self, label: &str, nonce: u64) -> Vec<f64> {
        let label = key(label);
        let nonce_str = nonce.to_string();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.spec.seed, &["region", &self.provider_id, &label, &nonce_str]));
        let mut targets = vec![(self.text_vector(&label), self.alignment_for(&label))];
        for pair in &self.spec.confusion_pairs {
            let other = if key(&pair.first) == label {
                key(&pair.second)
            } else if key(&pair.second) == label {
                key(&pair.first)
            } else {
                continue;
            };
            targets.push((self.text_vector(&other), pair.cosine));
        }
        if self.spec.noise_sigma > 0.0 {
            for target in &mut targets {
                let z: f64 = rng.sample(StandardNormal);
                let angle = (target.1.acos() + self.spec.noise_sigma * z).clamp(0.0, std::f64::consts::PI);
                target.1 = angle.cos();
            }
        }
        let fill: Vec<f64> = (0..self.spec.dimension).map(|_| rng.sample(StandardNormal)).collect();
        exact_angle(&targets, &fill)
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vector `r` with `⟨r, t_j⟩ = c_j` for each target (in order, as far as
/// the unit-norm budget allows), completed with the component of `fill`
/// orthogonal to every target.
fn exact_angle(targets: &[(Vec<f64>, f64)], fill: &[f64]) -> Vec<f64> {
    let dim = fill.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut coeffs: Vec<f64> = Vec::new();
    for (t, c) in targets {
        let mut residual = t.clone();
        let projections: Vec<f64> = basis.iter().map(|e| dot64(t, e)).collect();
        for (e, p) in basis.iter().zip(&projections) {
            residual.iter_mut().zip(e).for_each(|(r, x)| *r -= p * x);
        }
        let along = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
        if along < 1e-9 {
            continue;
        }
        let e: Vec<f64> = residual.iter().map(|x| x / along).collect();
        let known: f64 = coeffs.iter().zip(&projections).map(|(a, p)| a * p).sum();
        let mut coeff = (c - known) / along;
        let used: f64 = coeffs.iter().map(|a| a * a).sum();
        let budget = (1.0 - used).max(0.0).sqrt();
        coeff = coeff.clamp(-budget, budget);
        coeffs.push(coeff);
        basis.push(e);
    }
    let used: f64 = coeffs.iter().map(|a| a * a).sum();
    let remaining = (1.0 - used).max(0.0).sqrt();
    let mut residual = fill.to_vec();
    for e in &basis {
        let p = dot64(&residual, e);
        residual.iter_mut().zip(e).for_each(|(r, x)| *r -= p * x);
    }
    let rn = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = vec![0.0; dim];
    for (a, e) in coeffs.iter().zip(&basis) {
        out.iter_mut().zip(e).for_each(|(o, x)| *o += a * x);
    }
    if rn > 1e-12 {
        out.iter_mut().zip(&residual).for_each(|(o, x)| *o += remaining * x / rn);
    }
    normalize(out)
}

impl EmbeddingProvider for MockProvider {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dimension(&self) -> usize {
        self.spec.dimension
    }

    fn capabilities(&self) -> Capabilities {
        self.role.capabilities()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if !self.capabilities().text {
            return Err(Error::Capability { provider: self.provider_id.clone(), capability: "text encoding" });
        }
        texts.iter().map(|t| EmbeddingVector::from_f64(self.provider_id.clone(), &self.text_vector(t))).collect()
    }

    fn embed_regions(&self, observations: &[RegionObservation]) -> Result<Vec<EmbeddingVector>> {
        observations
            .iter()
            .map(|obs| {
                let label = obs.label.as_deref().ok_or_else(|| {
                    Error::invalid(format!("mock provider `{}` needs a labeled observation", self.provider_id))
                })?;
                EmbeddingVector::from_f64(self.provider_id.clone(), &self.region_vector(label, obs.nonce))
            })
            .collect()
    }
}
