//! Text and region embedding providers and the max-ensemble similarity.
//!
//! A map carries one text-capable channel plus any number of region-only
//! channels. All channels are scored against the text channel's encoding of
//! the query, and an element's score is the maximum over channels.

mod mock;
mod remote;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ContextElement, EmbeddingVector};

pub use mock::{ConfusionPair, MockProvider, MockProviderSpec};
pub use remote::{RemoteProvider, RemoteProviderConfig};

/// What a channel can encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub text: bool,
    pub region: bool,
}

/// Role of an embedding channel within a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    /// Encodes both query text and regions.
    TextRegion,
    /// Encodes regions only; scored against the text channel's query vector.
    RegionOnly,
}

impl ChannelRole {
    pub fn capabilities(self) -> Capabilities {
        match self {
            ChannelRole::TextRegion => Capabilities { text: true, region: true },
            ChannelRole::RegionOnly => Capabilities { text: false, region: true },
        }
    }
}

/// Input to region encoding. Simulated observations carry a ground-truth
/// label handle; real pipelines carry encoded image bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionObservation {
    pub label: Option<String>,
    pub nonce: u64,
    pub image: Option<Vec<u8>>,
}

impl RegionObservation {
    pub fn labeled(label: impl Into<String>, nonce: u64) -> Self {
        RegionObservation { label: Some(label.into()), nonce, image: None }
    }

    pub fn image(bytes: Vec<u8>) -> Self {
        RegionObservation { label: None, nonce: 0, image: Some(bytes) }
    }
}

/// An embedding channel. Implementations must be callable from many threads.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn capabilities(&self) -> Capabilities;
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
    fn embed_regions(&self, observations: &[RegionObservation]) -> Result<Vec<EmbeddingVector>>;
}

/// Text-channel encoding of an object name plus the channels it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryFeatures {
    pub name: String,
    pub text_vector: EmbeddingVector,
    pub channels: Vec<String>,
}

impl QueryFeatures {
    /// Restrict or extend the scored channels.
    pub fn scored_against<I, S>(mut self, channels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.channels = channels.into_iter().map(Into::into).collect();
        self
    }
}

fn clean_name(name: &str) -> Result<&str> {
    let trimmed = name.trim();
    if trimmed.is_empty() {
        return Err(Error::invalid("object name is empty"));
    }
    Ok(trimmed)
}

/// Encode an object name with a text-capable provider. The result is scored
/// against the provider's own channel until [`QueryFeatures::scored_against`]
/// widens it.
pub fn encode_text(provider: &dyn EmbeddingProvider, name: &str) -> Result<QueryFeatures> {
    let name = clean_name(name)?;
    if !provider.capabilities().text {
        return Err(Error::Capability { provider: provider.provider_id().to_string(), capability: "text encoding" });
    }
    let mut vectors = provider.embed_texts(&[name.to_string()])?;
    let text_vector = vectors
        .pop()
        .ok_or_else(|| Error::schema(format!("provider `{}` returned no vector", provider.provider_id())))?;
    Ok(QueryFeatures { name: name.to_string(), text_vector, channels: vec![provider.provider_id().to_string()] })
}

/// Encode one region observation.
pub fn encode_region(provider: &dyn EmbeddingProvider, observation: &RegionObservation) -> Result<EmbeddingVector> {
    if !provider.capabilities().region {
        return Err(Error::Capability { provider: provider.provider_id().to_string(), capability: "region encoding" });
    }
    provider
        .embed_regions(std::slice::from_ref(observation))?
        .pop()
        .ok_or_else(|| Error::schema(format!("provider `{}` returned no vector", provider.provider_id())))
}

/// Max over the query's channels of ⟨channel vector, query text vector⟩.
pub fn ensemble_score(element: &ContextElement, query: &QueryFeatures) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for channel in &query.channels {
        let vector = element
            .channel(channel)
            .ok_or_else(|| Error::schema(format!("element {} has no `{channel}` channel", element.element_id)))?;
        if vector.dimension() != query.text_vector.dimension() {
            return Err(Error::schema(format!(
                "channel `{channel}` has dimension {} but the query has {}",
                vector.dimension(),
                query.text_vector.dimension()
            )));
        }
        best = best.max(vector.dot(&query.text_vector));
    }
    if query.channels.is_empty() {
        return Err(Error::schema("query has no channels to score"));
    }
    Ok(best)
}
