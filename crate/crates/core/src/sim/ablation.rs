use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::explore::{simulate_exploration, NoiseSpec, SimProviders, Visibility};
use super::scene::{default_waypoints, generate_scene, SceneSpec, DISTRACTOR_LABELS};
use crate::embedding::{encode_text, MockProviderSpec};
use crate::error::Result;
use crate::exec::{map_range, ExecMode};
use crate::map::{build_map, query_with_features};
use crate::seeds::derive_seed;
use crate::types::FusionParams;

/// Scoring configuration compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Text-region channel only, top-1.
    ClipOnly,
    /// Region-only channel only, top-1.
    VildOnly,
    /// Max over channels, top-1.
    EnsembleTop1,
    /// Max over channels with multi-view fusion.
    EnsembleFused,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::ClipOnly, Variant::VildOnly, Variant::EnsembleTop1, Variant::EnsembleFused];

    fn channels(self) -> &'static [&'static str] {
        match self {
            Variant::ClipOnly => &["clip"],
            Variant::VildOnly => &["vild"],
            Variant::EnsembleTop1 | Variant::EnsembleFused => &["clip", "vild"],
        }
    }

    fn params(self, fused: &FusionParams) -> FusionParams {
        match self {
            Variant::EnsembleFused => *fused,
            _ => FusionParams { k: 1, ..*fused },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub scenes: usize,
    pub scene: SceneSpec,
    pub noise: NoiseSpec,
    pub embedding: MockProviderSpec,
    pub fusion: FusionParams,
    pub visibility: Visibility,
    /// Absent distractor labels queried per scene.
    pub negatives_per_scene: usize,
    /// Localization tolerance, meters.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            scenes: 100,
            scene: SceneSpec::default(),
            noise: NoiseSpec::default(),
            embedding: MockProviderSpec { seed: 7, true_alignment: 0.8, weak_fraction: 0.25, ..Default::default() },
            fusion: FusionParams { lambda: 16.0, beta: 0.85, t: 0.3, ..Default::default() },
            visibility: Visibility::default(),
            negatives_per_scene: 10,
            epsilon: 0.5,
            seed: 2022,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub queries: usize,
    pub successes: usize,
    pub positive_successes: usize,
    pub negative_successes: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub positives: usize,
    pub negatives: usize,
    pub variants: Vec<VariantResult>,
}

impl AblationReport {
    pub fn rate(&self, variant: Variant) -> f64 {
        self.variants.iter().find(|v| v.variant == variant).map_or(0.0, |v| v.success_rate)
    }
}

/// Per scene: (positives, negatives, per-variant (pos ok, neg ok)).
type SceneTally = (usize, usize, Vec<(usize, usize)>);

fn run_scene(config: &AblationConfig, providers: &SimProviders, i: usize) -> Result<SceneTally> {
    let id = format!("ablation-{i:03}");
    let seed = derive_seed(config.seed, &["ablation", &id]);
    let scene = generate_scene(&id, &config.scene, seed)?;
    let poses = default_waypoints(&scene.bounds, config.scene.height);
    let ex = simulate_exploration(&scene, &poses, &config.noise, providers, &config.visibility, seed)?;
    let map = build_map(&id, &ex.frames, &providers.schema())?.map;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["negatives"]));
    let negatives: Vec<&str> = DISTRACTOR_LABELS
        .choose_multiple(&mut rng, config.negatives_per_scene.min(DISTRACTOR_LABELS.len()))
        .copied()
        .collect();
    let mut tally = vec![(0, 0); Variant::ALL.len()];
    for object in &scene.objects {
        let text = encode_text(&providers.clip, &object.label)?;
        for (v, variant) in Variant::ALL.iter().enumerate() {
            let q = text.clone().scored_against(variant.channels().iter().copied());
            let r = query_with_features(&map, &q, &variant.params(&config.fusion), ExecMode::Sequential)?;
            if r.best().is_some_and(|c| c.position.distance(&object.position) <= config.epsilon) {
                tally[v].0 += 1;
            }
        }
    }
    for label in &negatives {
        let text = encode_text(&providers.clip, label)?;
        for (v, variant) in Variant::ALL.iter().enumerate() {
            let q = text.clone().scored_against(variant.channels().iter().copied());
            if !query_with_features(&map, &q, &variant.params(&config.fusion), ExecMode::Sequential)?.found {
                tally[v].1 += 1;
            }
        }
    }
    Ok((scene.objects.len(), negatives.len(), tally))
}

/// Query every scene object (present) and sampled distractor labels (absent)
/// under each variant. Success is a correct presence verdict and, when
/// present, a best cluster within `epsilon` of the object.
pub fn run_ablation(config: &AblationConfig, mode: ExecMode) -> Result<AblationReport> {
    config.noise.validate()?;
    config.fusion.validate()?;
    let providers = SimProviders::with_noise(config.embedding.clone(), config.noise.embedding_noise)?;
    let scenes: Vec<SceneTally> =
        map_range(mode, config.scenes, |i| run_scene(config, &providers, i)).into_iter().collect::<Result<_>>()?;
    let positives: usize = scenes.iter().map(|s| s.0).sum();
    let negatives: usize = scenes.iter().map(|s| s.1).sum();
    let variants = Variant::ALL
        .iter()
        .enumerate()
        .map(|(v, &variant)| {
            let pos: usize = scenes.iter().map(|s| s.2[v].0).sum();
            let neg: usize = scenes.iter().map(|s| s.2[v].1).sum();
            let queries = positives + negatives;
            VariantResult {
                variant,
                queries,
                successes: pos + neg,
                positive_successes: pos,
                negative_successes: neg,
                success_rate: if queries == 0 { 0.0 } else { (pos + neg) as f64 / queries as f64 },
            }
        })
        .collect();
    Ok(AblationReport { positives, negatives, variants })
}
