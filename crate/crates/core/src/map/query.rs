use std::cmp::Ordering;

use super::{multiview_fuse, QueryResult, SceneRepresentation};
use crate::embedding::{encode_text, ensemble_score, EmbeddingProvider, QueryFeatures};
use crate::error::{Error, Result};
use crate::exec::{map_slice, ExecMode};
use crate::types::{ContextElement, FusionParams};

/// An element with its ensemble score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored<'a> {
    pub element: &'a ContextElement,
    pub score: f64,
}

fn rank(a: &Scored<'_>, b: &Scored<'_>) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.element.element_id.cmp(&b.element.element_id))
}

/// At most `k` elements scoring at least `score_floor`, by descending score
/// then ascending element id. Exhaustive linear scan.
pub fn top_k<'a>(
    map: &'a SceneRepresentation,
    query: &QueryFeatures,
    k: usize,
    score_floor: f64,
    mode: ExecMode,
) -> Result<Vec<Scored<'a>>> {
    if k == 0 {
        return Err(Error::invalid("top_k requires k >= 1"));
    }
    for channel in &query.channels {
        if !map.channel_schema().provider_ids().any(|id| id == channel) {
            return Err(Error::schema(format!("map has no `{channel}` channel")));
        }
    }
    let scores = map_slice(mode, map.elements(), |e| ensemble_score(e, query));
    let mut kept = Vec::new();
    for (element, score) in map.elements().iter().zip(scores) {
        let score = score?;
        if score >= score_floor {
            kept.push(Scored { element, score });
        }
    }
    if kept.len() > k {
        kept.select_nth_unstable_by(k - 1, rank);
        kept.truncate(k);
    }
    kept.sort_unstable_by(rank);
    Ok(kept)
}

/// Top-k retrieval followed by multi-view fusion for prepared query features.
pub fn query_with_features(
    map: &SceneRepresentation,
    query: &QueryFeatures,
    params: &FusionParams,
    mode: ExecMode,
) -> Result<QueryResult> {
    params.validate()?;
    let candidates = top_k(map, query, params.k, params.score_floor, mode)?;
    let clusters = multiview_fuse(&candidates, params)?;
    Ok(QueryResult { name: query.name.clone(), found: !clusters.is_empty(), clusters, params_used: *params })
}

/// Encode `name` with the text provider and query every channel of the map.
pub fn query_object(
    map: &SceneRepresentation,
    name: &str,
    provider: &dyn EmbeddingProvider,
    params: &FusionParams,
    mode: ExecMode,
) -> Result<QueryResult> {
    if provider.dimension() != map.channel_schema().dimension() {
        return Err(Error::schema(format!(
            "text provider `{}` has dimension {}, map uses {}",
            provider.provider_id(),
            provider.dimension(),
            map.channel_schema().dimension()
        )));
    }
    let features = encode_text(provider, name)?.scored_against(map.channel_schema().provider_ids());
    query_with_features(map, &features, params, mode)
}

/// Query several names. Each query scans sequentially; the names fan out.
pub fn query_objects(
    map: &SceneRepresentation,
    names: &[String],
    provider: &dyn EmbeddingProvider,
    params: &FusionParams,
    mode: ExecMode,
) -> Result<Vec<QueryResult>> {
    map_slice(mode, names, |name| query_object(map, name, provider, params, ExecMode::Sequential)).into_iter().collect()
}
