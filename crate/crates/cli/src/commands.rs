use std::path::Path;

use serde::Serialize;
use serde_json::json;

use nlmap::embedding::encode_text;
use nlmap::geometry::Pose;
use nlmap::map::{
    build_map, heatmap, load_map, query_object, read_frames_jsonl, save_map, write_frames_jsonl, GridSpec,
};
use nlmap::planner::{OpenLoop, Planner, TemplateSet};
use nlmap::sim::{
    default_waypoints, dense_waypoints, run_ablation, run_benchmark, simulate_exploration, AblationConfig, BenchSuite,
    NoiseSpec, SimWorld, SyntheticScene, WorldState,
};
use nlmap::ExecMode;

use crate::config::Config;
use crate::{CliError, Global};

fn emit<T: Serialize>(g: &Global, value: &T) -> Result<(), CliError> {
    let text = if g.pretty { serde_json::to_string_pretty(value) } else { serde_json::to_string(value) };
    println!("{}", text.map_err(nlmap::Error::from)?);
    Ok(())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn unix_now() -> String {
    let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("unix:{secs}")
}

pub fn build(config: &Config, g: &Global, frames: &Path, out: &Path, scene_id: Option<String>) -> Result<u8, CliError> {
    let schema = config.channel_schema()?;
    let frames_v = read_frames_jsonl(frames)?;
    let scene_id = scene_id.unwrap_or_else(|| {
        frames.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scene".into())
    });
    let built = build_map(&scene_id, &frames_v, &schema)?;
    let map = if g.stable { built.map } else { built.map.with_created_at(Some(unix_now())) };
    save_map(&map, out)?;
    eprintln!("elements: {}", map.len());
    eprintln!("skipped: {}", built.skipped);
    emit(
        g,
        &json!({
            "scene_id": scene_id,
            "frames": frames_v.len(),
            "elements": map.len(),
            "skipped": built.skipped,
            "map": out,
        }),
    )?;
    Ok(0)
}

/// Element extent padded by half a meter.
fn grid_for(map: &nlmap::map::SceneRepresentation, cell: f64) -> GridSpec {
    let pad = 0.5;
    let mut it = map.elements().iter().map(|e| (e.position.x, e.position.y));
    let Some((x0, y0)) = it.next() else {
        return GridSpec { min_x: -1.0, min_y: -1.0, max_x: 1.0, max_y: 1.0, cell };
    };
    let (min_x, min_y, max_x, max_y) =
        it.fold((x0, y0, x0, y0), |(a, b, c, d), (x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)));
    GridSpec { min_x: min_x - pad, min_y: min_y - pad, max_x: max_x + pad, max_y: max_y + pad, cell }
}

pub fn query(
    config: &Config,
    g: &Global,
    map: &Path,
    name: &str,
    pgm: Option<&Path>,
    cell: f64,
) -> Result<u8, CliError> {
    let map = load_map(map)?;
    let provider = config.text_provider()?;
    let result = query_object(&map, name, provider.as_ref(), &config.fusion, ExecMode::Parallel)?;
    if let Some(pgm) = pgm {
        let features = encode_text(provider.as_ref(), name)?.scored_against(map.channel_schema().provider_ids());
        let hm = heatmap(&map, &features, grid_for(&map, cell), ExecMode::Parallel)?;
        write_file(pgm, hm.to_pgm())?;
        write_file(&pgm.with_extension("csv"), hm.to_csv())?;
    }
    emit(g, &result)?;
    Ok(if result.found { 0 } else { 2 })
}

pub fn plan(config: &Config, g: &Global, map: &Path, instruction: &str, scene: Option<&Path>) -> Result<u8, CliError> {
    let map = load_map(map)?;
    let scene: Option<SyntheticScene> = scene.map(read_json).transpose()?;
    let provider = config.text_provider()?;
    let proposal_prompt = config.proposal_prompt()?;
    let planning_prompt = config.planning_prompt()?;
    let llm = config.llm(&proposal_prompt, &planning_prompt)?;
    let extra: Vec<String> = scene.iter().flat_map(|s| s.labels()).map(str::to_string).collect();
    let library = config.skill_library(provider.as_ref(), &extra)?;
    let templates = TemplateSet::default();
    let planner = Planner {
        llm: llm.as_ref(),
        text_provider: provider.as_ref(),
        library: &library,
        templates: &templates,
        proposal_prompt: &proposal_prompt,
        planning_prompt: &planning_prompt,
        fusion: config.fusion,
        config: config.planner,
        mode: ExecMode::Parallel,
    };
    match scene {
        Some(scene) => {
            let mut world =
                SimWorld { state: WorldState::from_scene(&scene, scene.bounds.center()), reach: config.sim.reach };
            let plan = planner.run(instruction, &map, &mut world)?;
            emit(g, &json!({ "plan": plan, "world": world.state }))?;
        }
        None => {
            let plan = planner.run(instruction, &map, &mut OpenLoop)?;
            emit(g, &plan)?;
        }
    }
    Ok(0)
}

#[cfg(feature = "parallel")]
fn with_workers<T: Send>(workers: usize, f: impl FnOnce(ExecMode) -> T + Send) -> Result<T, CliError> {
    match workers {
        0 => Ok(f(ExecMode::Parallel)),
        1 => Ok(f(ExecMode::Sequential)),
        n => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(|| f(ExecMode::Parallel)))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T: Send>(_workers: usize, f: impl FnOnce(ExecMode) -> T + Send) -> Result<T, CliError> {
    Ok(f(ExecMode::Sequential))
}

pub fn simulate(
    config: &Config,
    g: &Global,
    suite: &Path,
    seed: u64,
    trials: usize,
    csv: Option<&Path>,
) -> Result<u8, CliError> {
    let suite = BenchSuite::load(suite)?;
    let report = with_workers(config.sim.workers, |mode| run_benchmark(&suite, trials, seed, mode))??;
    if let Some(csv) = csv {
        write_file(csv, report.to_csv())?;
    }
    emit(g, &report)?;
    Ok(0)
}

pub fn explore(
    config: &Config,
    g: &Global,
    scene: &Path,
    out: &Path,
    waypoints: &str,
    seed: u64,
    noiseless: bool,
) -> Result<u8, CliError> {
    let scene: SyntheticScene = read_json(scene)?;
    let poses: Vec<Pose> = match waypoints {
        "ring8" => default_waypoints(&scene.bounds, 0.0),
        "ring16" => dense_waypoints(&scene.bounds, 0.0),
        path => read_json(Path::new(path))?,
    };
    let noise = if noiseless { NoiseSpec::none() } else { config.sim.noise };
    let providers = config.sim_providers(!noiseless)?;
    let ex = simulate_exploration(&scene, &poses, &noise, &providers, &config.sim.visibility, seed)?;
    write_frames_jsonl(out, &ex.frames)?;
    let rois: usize = ex.frames.iter().map(|f| f.rois.len()).sum();
    emit(g, &json!({ "scene_id": scene.scene_id, "frames": ex.frames.len(), "rois": rois, "out": out }))?;
    Ok(0)
}

pub fn ablation(g: &Global, scenes: Option<usize>, seed: Option<u64>) -> Result<u8, CliError> {
    let mut cfg = AblationConfig::default();
    if let Some(n) = scenes {
        cfg.scenes = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_ablation(&cfg, ExecMode::Parallel)?;
    emit(g, &report)?;
    Ok(0)
}
