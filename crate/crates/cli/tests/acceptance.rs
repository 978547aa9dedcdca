//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use nlmap::embedding::{encode_text, ChannelRole, ConfusionPair, MockProvider, MockProviderSpec, QueryFeatures};
use nlmap::llm::{PlanScript, ScriptedLlm};
use nlmap::map::{
    build_map, group_candidates, multiview_fuse, query_object, query_with_features, read_map, top_k, write_map,
    BuildInfo, ChannelSchema, SceneRepresentation, Scored,
};
use nlmap::planner::{
    bind_options, bind_policy, generate_options, generate_plan, DetectedObject, OpenLoop, Outcome, Planner,
    PlannerConfig, PlanningPrompt, Skill, SkillKind, SkillLibrary, TemplateSet, DONE,
};
use nlmap::proposal::{propose_objects, ProposalPrompt};
use nlmap::sim::{
    dense_waypoints, generate_scene, run_ablation, simulate_exploration, AblationConfig, Bounds, NoiseSpec, SceneSpec,
    SimProviders, Variant, Visibility, DISTRACTOR_LABELS, KITCHEN_LABELS,
};
use nlmap::types::{
    bonus_f, kl_divergence, ContextElement, ElementId, EmbeddingVector, FusionParams, Gaussian2D, Point3,
};
use nlmap::{Error, ExecMode};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

fn random_map(rng: &mut impl Rng, n: usize, dim: usize) -> SceneRepresentation {
    let elements = (0..n)
        .map(|i| {
            let mut ch = BTreeMap::new();
            for id in ["clip", "vild"] {
                ch.insert(id.to_string(), EmbeddingVector::normalized(id, unit(rng, dim)).unwrap());
            }
            let p = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..1.0));
            ContextElement::new(ElementId(i as u64), format!("f{}", i / 8), p, rng.random_range(0.02..0.3), ch).unwrap()
        })
        .collect();
    SceneRepresentation::new("random", ChannelSchema::clip_vild(dim), BuildInfo::default(), elements).unwrap()
}

fn random_query(rng: &mut impl Rng, dim: usize) -> QueryFeatures {
    QueryFeatures {
        name: "q".into(),
        text_vector: EmbeddingVector::normalized("clip", unit(rng, dim)).unwrap(),
        channels: vec!["clip".into(), "vild".into()],
    }
}

// 1 -------------------------------------------------------------------------

fn fusion_ablation() -> Verdict {
    let cfg = AblationConfig::default();
    ensure!(cfg.scenes == 100 && cfg.scene.object_count == 20, "ablation setup drifted from 100 scenes x 20 objects");
    ensure!(
        cfg.noise.position_sigma == 0.05 && cfg.noise.detect_prob == 0.8 && cfg.noise.false_positive_rate == 0.5,
        "ablation noise drifted"
    );
    ensure!(cfg.embedding.true_alignment == 0.8 && cfg.epsilon == 0.5, "ablation embedding/epsilon drifted");
    let start = Instant::now();
    let report = run_ablation(&cfg, ExecMode::Sequential).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let [clip, vild, top1, fused] = Variant::ALL.map(|v| report.rate(v));
    let detail = format!(
        "clip {clip:.3}, vild {vild:.3}, ensemble {top1:.3}, ensemble+fusion {fused:.3}; {} pos / {} neg; {:.2}s",
        report.positives,
        report.negatives,
        elapsed.as_secs_f64()
    );
    ensure!(fused - clip >= 0.05 && fused - vild >= 0.05, "fusion beats single channels by < 5pp: {detail}");
    ensure!(fused - top1 >= 0.05, "fusion beats unfused ensemble by < 5pp: {detail}");
    ensure!(top1 >= clip && top1 >= vild, "ensemble row below a single-channel row: {detail}");
    ensure!(elapsed <= Duration::from_secs(60), "too slow: {detail}");
    Ok(detail)
}

// 2 -------------------------------------------------------------------------

#[derive(Deserialize)]
struct PlanningCase {
    instruction: String,
    required_objects: Vec<String>,
    steps: Vec<String>,
    positive_objects: Vec<String>,
    negative_objects: Vec<String>,
}

#[derive(Deserialize)]
struct PlanningSuite {
    instructions: Vec<PlanningCase>,
}

fn detected(names: &[String]) -> Vec<DetectedObject> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| DetectedObject { name: n.clone(), position: Point3::new(i as f64, 1.0, 0.0), score: 0.9 })
        .collect()
}

fn planning_protocol() -> Verdict {
    let text = std::fs::read_to_string(fixtures().join("planning_suite.json")).map_err(|e| e.to_string())?;
    let suite: PlanningSuite = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure!(suite.instructions.len() == 40, "fixture has {} instructions", suite.instructions.len());
    let provider = MockProvider::new("clip", ChannelRole::TextRegion, MockProviderSpec::default()).unwrap();
    let mut vocab: Vec<String> = KITCHEN_LABELS.iter().chain(DISTRACTOR_LABELS).map(|s| s.to_string()).collect();
    let mut llm = ScriptedLlm::new();
    for case in &suite.instructions {
        vocab.extend(case.positive_objects.iter().chain(&case.negative_objects).cloned());
        let script = PlanScript { required_objects: case.required_objects.clone(), steps: case.steps.clone() };
        llm = llm.with_plan(&case.instruction, script);
    }
    vocab.sort();
    vocab.dedup();
    let library = SkillLibrary::for_objects(&vocab, &provider).unwrap();
    let (templates, proposal_prompt, planning_prompt) =
        (TemplateSet::default(), ProposalPrompt::default_v1(), PlanningPrompt::default_v1());
    let planner = Planner {
        llm: &llm,
        text_provider: &provider,
        library: &library,
        templates: &templates,
        proposal_prompt: &proposal_prompt,
        planning_prompt: &planning_prompt,
        fusion: FusionParams::default(),
        config: PlannerConfig::default(),
        mode: ExecMode::Sequential,
    };
    let (mut pos_ok, mut neg_ok) = (0, 0);
    let mut failures = Vec::new();
    for case in &suite.instructions {
        let plan = planner
            .plan_with_objects(&case.instruction, &detected(&case.positive_objects), &mut OpenLoop)
            .map_err(|e| e.to_string())?;
        let mut want: Vec<&str> = case.steps.iter().map(String::as_str).collect();
        want.push(DONE);
        if plan.labels() == want && plan.outcome == Outcome::Completed {
            pos_ok += 1;
        } else {
            failures.push(format!("+ {}: {:?}", case.instruction, plan.labels()));
        }
        let plan = planner
            .plan_with_objects(&case.instruction, &detected(&case.negative_objects), &mut OpenLoop)
            .map_err(|e| e.to_string())?;
        if plan.labels() == [DONE] && plan.outcome == Outcome::Infeasible {
            neg_ok += 1;
        } else {
            failures.push(format!("- {}: {:?}", case.instruction, plan.labels()));
        }
    }
    let n = suite.instructions.len();
    let detail = format!("positive {pos_ok}/{n}, negative {neg_ok}/{n}");
    ensure!(failures.is_empty(), "{detail}; first failures: {:?}", &failures[..failures.len().min(3)]);
    Ok(detail)
}

// 3 -------------------------------------------------------------------------

/// KL(a || b) for N(m, s^2 I) in the plane: half of (trace + Mahalanobis - d + log-det ratio).
fn kl_reference(ma: [f64; 2], sa: f64, mb: [f64; 2], sb: f64) -> f64 {
    let trace = 2.0 * sa * sa / (sb * sb);
    let maha = ((ma[0] - mb[0]).powi(2) + (ma[1] - mb[1]).powi(2)) / (sb * sb);
    let logdet = ((sb * sb) / (sa * sa)).powi(2).ln();
    0.5 * (trace + maha - 2.0 + logdet)
}

struct RefCluster {
    members: Vec<usize>,
    position: [f64; 3],
    score: f64,
}

fn fusion_reference(
    elements: &[ContextElement],
    scores: &[f64],
    p: &FusionParams,
) -> (Vec<Vec<usize>>, Vec<RefCluster>) {
    let n = elements.len();
    let sigma: Vec<f64> = elements.iter().map(|e| p.alpha * e.radius).collect();
    let mean: Vec<[f64; 2]> = elements.iter().map(|e| [e.position.x, e.position.y]).collect();
    let kl: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| kl_reference(mean[i], sigma[i], mean[j], sigma[j])).collect()).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    'next: for i in 0..n {
        for g in groups.iter_mut() {
            if kl[i][g[0]] < p.lambda {
                g.push(i);
                continue 'next;
            }
        }
        groups.push(vec![i]);
    }
    let mut clusters = Vec::new();
    for g in &groups {
        let seed = scores[g[0]];
        let len = g.len() as f64;
        let score = seed * (1.0 + p.t * (len - 1.0) / len);
        if score <= p.beta {
            continue;
        }
        let w: Vec<f64> = g.iter().map(|&m| (scores[m] - seed).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut pos = [0.0; 3];
        for (&m, wi) in g.iter().zip(&w) {
            let q = elements[m].position;
            pos[0] += wi * q.x / total;
            pos[1] += wi * q.y / total;
            pos[2] += wi * q.z / total;
        }
        clusters.push(RefCluster { members: g.clone(), position: pos, score });
    }
    clusters.sort_by(|a, b| b.score.total_cmp(&a.score));
    (groups, clusters)
}

fn fusion_oracle() -> Verdict {
    let mut r = rng(3);
    let (mut total_groups, mut total_clusters) = (0, 0);
    for case in 0..1000 {
        let n = r.random_range(1..=50);
        let centers: Vec<[f64; 2]> =
            (0..r.random_range(1..=6)).map(|_| [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)]).collect();
        let spread = r.random_range(0.01..0.5);
        let elements: Vec<ContextElement> = (0..n)
            .map(|i| {
                let c = centers[r.random_range(0..centers.len())];
                let dx: f64 = r.sample::<f64, _>(StandardNormal) * spread;
                let dy: f64 = r.sample::<f64, _>(StandardNormal) * spread;
                let mut ch = BTreeMap::new();
                ch.insert("clip".into(), EmbeddingVector::normalized("clip", vec![1.0]).unwrap());
                let p = Point3::new(c[0] + dx, c[1] + dy, r.random_range(0.0..1.0));
                ContextElement::new(ElementId(i as u64), "f", p, r.random_range(0.02..0.4), ch).unwrap()
            })
            .collect();
        let mut scores: Vec<f64> = (0..n).map(|_| r.random_range(0.2..1.0)).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        let params = FusionParams {
            k: 50,
            alpha: r.random_range(0.2..1.5),
            lambda: r.random_range(0.1..20.0),
            beta: r.random_range(0.2..1.1),
            t: r.random_range(0.0..1.0),
            score_floor: 0.0,
        };
        let candidates: Vec<Scored<'_>> =
            elements.iter().zip(&scores).map(|(element, &score)| Scored { element, score }).collect();
        let groups = group_candidates(&candidates, &params).map_err(|e| e.to_string())?;
        let clusters = multiview_fuse(&candidates, &params).map_err(|e| e.to_string())?;
        let (ref_groups, ref_clusters) = fusion_reference(&elements, &scores, &params);
        let got: Vec<Vec<usize>> = groups.into_iter().map(|g| g.members).collect();
        ensure!(got == ref_groups, "case {case}: groups differ");
        ensure!(clusters.len() == ref_clusters.len(), "case {case}: cluster count differs");
        for (c, rc) in clusters.iter().zip(&ref_clusters) {
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
            ensure!(c.support == rc.members.len(), "case {case}: support differs");
            ensure!(close(c.score, rc.score), "case {case}: score {} vs {}", c.score, rc.score);
            ensure!(
                close(c.position.x, rc.position[0])
                    && close(c.position.y, rc.position[1])
                    && close(c.position.z, rc.position[2]),
                "case {case}: position differs"
            );
        }
        total_groups += ref_groups.len();
        total_clusters += ref_clusters.len();
    }
    Ok(format!("1000 sets, {total_groups} groups, {total_clusters} surviving clusters identical"))
}

// 4 -------------------------------------------------------------------------

fn top_k_oracle() -> Verdict {
    let mut r = rng(4);
    let dim = 16;
    let mut compared = 0usize;
    for case in 0..1000 {
        let n = if case < 10 { 10_000 } else { r.random_range(1..=10_000) };
        let map = random_map(&mut r, n, dim);
        let query = random_query(&mut r, dim);
        let k = r.random_range(1..=25);
        let floor = r.random_range(-0.2..0.5);
        let got = top_k(&map, &query, k, floor, ExecMode::Sequential).map_err(|e| e.to_string())?;
        let mut oracle: Vec<(f64, u64)> = map
            .elements()
            .iter()
            .map(|e| {
                let q = query.text_vector.values();
                let s = ["clip", "vild"]
                    .iter()
                    .map(|c| {
                        e.channel(c)
                            .unwrap()
                            .values()
                            .iter()
                            .zip(q)
                            .map(|(&a, &b)| f64::from(a) * f64::from(b))
                            .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                (s, e.element_id.0)
            })
            .filter(|(s, _)| *s >= floor)
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        oracle.truncate(k);
        let got: Vec<(f64, u64)> = got.iter().map(|s| (s.score, s.element.element_id.0)).collect();
        ensure!(got == oracle, "case {case} (n={n}, k={k}): top-k differs from full sort");
        compared += n;
    }
    let map = random_map(&mut r, 10_000, 64);
    let query = random_query(&mut r, 64);
    let mut worst = Duration::ZERO;
    for _ in 0..5 {
        let start = Instant::now();
        let hits = top_k(&map, &query, 4, 0.0, ExecMode::Sequential).map_err(|e| e.to_string())?;
        worst = worst.max(start.elapsed());
        std::hint::black_box(hits);
    }
    ensure!(worst < Duration::from_millis(50), "10k-element query took {worst:?}");
    Ok(format!("1000 maps ({compared} elements) identical; 10k x 64d query worst {:.2} ms", worst.as_secs_f64() * 1e3))
}

// 5 -------------------------------------------------------------------------

/// Means within half a meter and sigmas within a factor of two keep the
/// standard error of a 1e6-sample estimate near 5e-3 or below.
fn kl_monte_carlo() -> Verdict {
    let mut r = rng(5);
    let (mut worst, mut worst_z): (f64, f64) = (0.0, 0.0);
    for pair in 0..50 {
        let ma = [r.random_range(-0.25..0.25), r.random_range(-0.25..0.25)];
        let mb = [r.random_range(-0.25..0.25), r.random_range(-0.25..0.25)];
        let (sa, sb): (f64, f64) = (r.random_range(0.5..1.0), r.random_range(0.5..1.0));
        let a = Gaussian2D::new(ma, sa).unwrap();
        let b = Gaussian2D::new(mb, sb).unwrap();
        let closed = kl_divergence(&a, &b);
        let log_pdf = |x: [f64; 2], m: [f64; 2], s: f64| {
            -(2.0 * std::f64::consts::PI * s * s).ln() - ((x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2)) / (2.0 * s * s)
        };
        let samples = 1_000_000;
        let (mut acc, mut acc2) = (0.0, 0.0);
        for _ in 0..samples {
            let zx: f64 = r.sample(StandardNormal);
            let zy: f64 = r.sample(StandardNormal);
            let x = [ma[0] + sa * zx, ma[1] + sa * zy];
            let v = log_pdf(x, ma, sa) - log_pdf(x, mb, sb);
            acc += v;
            acc2 += v * v;
        }
        let n = samples as f64;
        let mc = acc / n;
        let stderr = ((acc2 / n - mc * mc) / n).sqrt();
        let err = (closed - mc).abs();
        ensure!(err < 1e-2, "pair {pair}: closed {closed} vs MC {mc} (stderr {stderr:.1e})");
        worst = worst.max(err);
        worst_z = worst_z.max(err / stderr);
    }
    Ok(format!("50 pairs x 1e6 samples, worst |closed - MC| = {worst:.2e} ({worst_z:.1} stderr)"))
}

// 6 -------------------------------------------------------------------------

fn bonus_exactness() -> Verdict {
    for i in 0..=1000 {
        let t = i as f64 / 100.0;
        ensure!(bonus_f(1, t).unwrap() == 1.0, "f(1) != 1 at t={t}");
    }
    for t in [0.01, 0.2, 1.0] {
        let mut prev = bonus_f(1, t).unwrap();
        for n in 2..=100 {
            let f = bonus_f(n, t).unwrap();
            ensure!(f > prev, "f not increasing at n={n}, t={t}");
            ensure!(f < 1.0 + t, "f({n}) exceeds its supremum at t={t}");
            prev = f;
        }
    }
    ensure!(bonus_f(0, 0.2).is_err(), "f(0) accepted");
    Ok("f(1)=1 for 1001 t values; strictly increasing on n=1..100 for t in {0.01, 0.2, 1.0}".into())
}

// 7 -------------------------------------------------------------------------

fn noiseless_identity() -> Verdict {
    let mut objects = 0;
    for s in 0..10u64 {
        let spec = SceneSpec { bounds: Bounds::square(6.0), ..Default::default() };
        let scene = generate_scene(&format!("noiseless-{s}"), &spec, 100 + s).map_err(|e| e.to_string())?;
        let providers = SimProviders::new(MockProviderSpec { seed: s, ..Default::default() }).unwrap();
        let poses = dense_waypoints(&scene.bounds, 0.0);
        let ex = simulate_exploration(&scene, &poses, &NoiseSpec::none(), &providers, &Visibility::default(), s)
            .map_err(|e| e.to_string())?;
        let map = build_map(&scene.scene_id, &ex.frames, &providers.schema()).map_err(|e| e.to_string())?.map;
        for obj in &scene.objects {
            let res = query_object(&map, &obj.label, &providers.clip, &FusionParams::default(), ExecMode::Sequential)
                .map_err(|e| e.to_string())?;
            ensure!(res.clusters.len() == 1, "scene {s} `{}`: {} clusters", obj.label, res.clusters.len());
            let d = res.clusters[0].position.distance(&obj.position);
            ensure!(d <= 1e-6, "scene {s} `{}`: off by {d} m", obj.label);
            objects += 1;
        }
    }
    Ok(format!("{objects} objects over 10 scenes, each one cluster within 1e-6 m"))
}

// 8 -------------------------------------------------------------------------

fn persistence() -> Verdict {
    let mut r = rng(8);
    let map = random_map(&mut r, 10_000, 64);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.nlm");
    nlmap::map::save_map(&map, &path).map_err(|e| e.to_string())?;
    let loaded = nlmap::map::load_map(&path).map_err(|e| e.to_string())?;
    ensure!(loaded == map, "loaded map differs structurally");
    ensure!(write_map(&loaded) == write_map(&map), "re-encoding differs");
    ensure!(read_map(&write_map(&map)).map_err(|e| e.to_string())? == map, "in-memory round trip differs");
    let provider =
        MockProvider::new("clip", ChannelRole::TextRegion, MockProviderSpec { seed: 8, ..Default::default() }).unwrap();
    for i in 0..100 {
        let name = if i % 2 == 0 {
            KITCHEN_LABELS[r.random_range(0..KITCHEN_LABELS.len())].to_string()
        } else {
            format!("thing {i}")
        };
        let q = encode_text(&provider, &name).unwrap().scored_against(["clip", "vild"]);
        let params =
            FusionParams { k: r.random_range(1..=50), score_floor: r.random_range(-0.2..0.3), ..Default::default() };
        let a = top_k(&map, &q, params.k, params.score_floor, ExecMode::Sequential).unwrap();
        let b = top_k(&loaded, &q, params.k, params.score_floor, ExecMode::Sequential).unwrap();
        let bits = |v: &[Scored<'_>]| v.iter().map(|s| (s.element.element_id, s.score.to_bits())).collect::<Vec<_>>();
        ensure!(bits(&a) == bits(&b), "query {i} `{name}`: top-k differs after reload");
        let ja = serde_json::to_string(&query_with_features(&map, &q, &params, ExecMode::Sequential).unwrap()).unwrap();
        let jb =
            serde_json::to_string(&query_with_features(&loaded, &q, &params, ExecMode::Sequential).unwrap()).unwrap();
        ensure!(ja == jb, "query {i}: serialized result differs");
    }
    Ok(format!("10000 elements, {} bytes, 100 queries identical", write_map(&map).len()))
}

// 9 -------------------------------------------------------------------------

fn prompt_fidelity() -> Verdict {
    let proposal = ProposalPrompt::default_v1();
    ensure!(proposal.examples.len() == 25, "{} proposal examples", proposal.examples.len());
    let llm = ScriptedLlm::new().with_proposal_examples(&proposal);
    for ex in &proposal.examples {
        let got = propose_objects(&llm, &ex.instruction, &proposal).map_err(|e| e.to_string())?;
        ensure!(got.names() == ex.expected_objects.as_slice(), "`{}`: {:?}", ex.instruction, got.names());
    }
    let planning = PlanningPrompt::default_v1();
    let llm = ScriptedLlm::new().with_planning_examples(&planning);
    for ex in &planning.examples {
        let steps =
            generate_plan(&llm, &ex.instruction, &ex.available_objects, &planning).map_err(|e| e.to_string())?;
        ensure!(steps == ex.steps, "`{}`: {:?}", ex.instruction, steps);
    }
    Ok(format!(
        "{} proposal examples and {} planning exemplars reproduced",
        proposal.examples.len(),
        planning.examples.len()
    ))
}

// 10 ------------------------------------------------------------------------

fn oracle_bind(label: &str, library: &SkillLibrary, provider: &MockProvider, tau: f64) -> Option<(String, f64)> {
    let q = encode_text(provider, label).unwrap().text_vector;
    let mut best: Option<(&str, f64)> = None;
    for skill in library.skills() {
        let v = encode_text(provider, &skill.description).unwrap().text_vector;
        let sim: f64 = q.values().iter().zip(v.values()).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
        best = match best {
            Some((id, s)) if s > sim || (s == sim && id < skill.policy_id.as_str()) => Some((id, s)),
            _ => Some((&skill.policy_id, sim)),
        };
    }
    let (id, sim) = best?;
    (sim >= tau).then(|| (id.to_string(), sim))
}

fn policy_binding() -> Verdict {
    let spec = MockProviderSpec {
        confusion_pairs: vec![
            ConfusionPair::new("pick up the coke can", "pick up the tin of coke", 0.92),
            ConfusionPair::new("put down the coke can", "put down the tin of coke", 0.92),
        ],
        ..Default::default()
    };
    let provider = MockProvider::new("clip", ChannelRole::TextRegion, spec).unwrap();
    let vocab: Vec<&str> = KITCHEN_LABELS.iter().chain(DISTRACTOR_LABELS).copied().collect();
    let library = SkillLibrary::for_objects(&vocab, &provider).unwrap();
    let det = [DetectedObject { name: "tin of coke".into(), position: Point3::new(1.0, 0.0, 0.0), score: 0.9 }];
    let options = generate_options(&det, &TemplateSet::default());
    let (bound, unbound) = bind_options(options, &library, &provider, 0.5).map_err(|e| e.to_string())?;
    let pick = bound.iter().find(|o| o.label == "pick up the tin of coke").ok_or("no pick option generated")?;
    ensure!(unbound.is_empty(), "unbound options: {unbound:?}");
    ensure!(pick.bound_policy.as_deref() == Some("pick:coke can"), "tin of coke bound to {:?}", pick.bound_policy);
    let (_, sim) = bind_policy("pick up the tin of coke", &library, &provider, 0.5).unwrap();

    let mut r = rng(10);
    let pool: Vec<String> = KITCHEN_LABELS.iter().map(|l| format!("pick up the {l}")).collect();
    let pairs: Vec<ConfusionPair> =
        (0..20).map(|i| ConfusionPair::new(pool[i].clone(), pool[i + 20].clone(), r.random_range(0.2..0.95))).collect();
    let provider = MockProvider::new(
        "clip",
        ChannelRole::TextRegion,
        MockProviderSpec { seed: 10, confusion_pairs: pairs, ..Default::default() },
    )
    .unwrap();
    let (mut bound_n, mut unbound_n) = (0, 0);
    for case in 0..1000 {
        let mut descriptions = pool.clone();
        descriptions.shuffle(&mut r);
        descriptions.truncate(r.random_range(1..=30));
        let mut skills = vec![Skill { policy_id: DONE.into(), description: DONE.into(), kind: SkillKind::Terminal }];
        skills.extend(descriptions.iter().enumerate().map(|(i, d)| Skill {
            policy_id: format!("s{:02}", r.random_range(0..100) * 100 + i),
            description: d.clone(),
            kind: SkillKind::Pick,
        }));
        let library = SkillLibrary::new(skills, &provider).map_err(|e| e.to_string())?;
        let label = &pool[r.random_range(0..pool.len())];
        let tau = r.random_range(0.0..1.0);
        let want = oracle_bind(label, &library, &provider, tau);
        match (bind_policy(label, &library, &provider, tau), want) {
            (Ok((id, s)), Some((wid, ws))) => {
                ensure!(id == wid && s == ws, "case {case}: bound {id} ({s}) vs oracle {wid} ({ws})");
                bound_n += 1;
            }
            (Err(Error::UnboundOption { .. }), None) => unbound_n += 1,
            (got, want) => return Err(format!("case {case}: {got:?} vs oracle {want:?}")),
        }
    }
    Ok(format!(
        "tin of coke -> pick:coke can (cos {sim:.3}); 1000 cases match oracle ({bound_n} bound, {unbound_n} unbound)"
    ))
}

// 11 ------------------------------------------------------------------------

fn cli_determinism() -> Verdict {
    let run = |workers: &str| -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_nlmap"))
            .args(["simulate", "--seed", "2022", "--suite"])
            .arg(fixtures().join("benchmark_suite.json"))
            .arg("--config")
            .arg(fixtures().join("nlmap.toml"))
            .env("NLMAP_SIM__WORKERS", workers)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("simulate exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
        Ok(out.stdout)
    };
    let a = run("4")?;
    let b = run("4")?;
    let c = run("1")?;
    ensure!(a == b, "two runs differ");
    ensure!(a == c, "parallel and sequential runs differ");
    let report: serde_json::Value = serde_json::from_slice(&a).map_err(|e| e.to_string())?;
    let families: Vec<String> = report["families"]
        .as_array()
        .map(|f| {
            f.iter()
                .map(|x| {
                    format!(
                        "{} {}/{}",
                        x["family"].as_str().unwrap_or("?"),
                        x["planning_success_rate"],
                        x["execution_success_rate"]
                    )
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(format!("{} bytes identical across runs and worker counts; {}", a.len(), families.join(", ")))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 11] = [
        ("fusion ablation trend", fusion_ablation),
        ("positive/negative planning protocol", planning_protocol),
        ("fusion matches brute-force reference", fusion_oracle),
        ("top-k matches full sort", top_k_oracle),
        ("KL closed form vs Monte Carlo", kl_monte_carlo),
        ("support bonus exactness", bonus_exactness),
        ("noiseless identity", noiseless_identity),
        ("persistence round trip", persistence),
        ("prompt fidelity", prompt_fidelity),
        ("policy binding", policy_binding),
        ("end-to-end determinism", cli_determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
