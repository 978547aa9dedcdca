//! Client for embedding servers speaking the `/encode_text` and
//! `/encode_region` JSON contract.

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Capabilities, EmbeddingProvider, RegionObservation};
use crate::error::{Error, Result};
use crate::http::JsonClient;
use crate::types::EmbeddingVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteProviderConfig {
    pub base_url: String,
    pub provider_id: String,
    pub dimension: usize,
    pub capabilities: Capabilities,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_in_flight() -> usize {
    4
}

#[derive(Serialize)]
struct TextRequest<'a> {
    provider_id: &'a str,
    texts: &'a [String],
}

#[derive(Serialize)]
struct RegionRequest<'a> {
    provider_id: &'a str,
    images: Vec<String>,
}

#[derive(Deserialize)]
struct VectorsResponse {
    vectors: Vec<Vec<f32>>,
    dimension: usize,
}

#[derive(Debug)]
pub struct RemoteProvider {
    config: RemoteProviderConfig,
    client: JsonClient,
}

impl RemoteProvider {
    pub fn new(config: RemoteProviderConfig) -> Result<Self> {
        if config.dimension == 0 {
            return Err(Error::invalid("remote provider dimension must be > 0"));
        }
        let client = JsonClient::new(&config.base_url, config.timeout_ms, config.max_in_flight, config.retries);
        Ok(RemoteProvider { config, client })
    }

    fn ingest(&self, response: VectorsResponse, expected: usize) -> Result<Vec<EmbeddingVector>> {
        if response.dimension != self.config.dimension || response.vectors.len() != expected {
            return Err(Error::schema(format!(
                "provider `{}` returned {} vectors of dimension {} (expected {} of {})",
                self.config.provider_id,
                response.vectors.len(),
                response.dimension,
                expected,
                self.config.dimension
            )));
        }
        response
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.config.dimension {
                    return Err(Error::schema(format!(
                        "provider `{}` returned a vector of length {}",
                        self.config.provider_id,
                        v.len()
                    )));
                }
                let normalized = EmbeddingVector::normalized(self.config.provider_id.clone(), v.clone())?;
                if normalized.values() != v.as_slice() {
                    log::warn!("provider `{}` returned a non-unit vector; normalized", self.config.provider_id);
                }
                Ok(normalized)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn provider_id(&self) -> &str {
        &self.config.provider_id
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn capabilities(&self) -> Capabilities {
        self.config.capabilities
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if !self.config.capabilities.text {
            return Err(Error::Capability { provider: self.config.provider_id.clone(), capability: "text encoding" });
        }
        let response: VectorsResponse =
            self.client.post("/encode_text", &TextRequest { provider_id: &self.config.provider_id, texts })?;
        self.ingest(response, texts.len())
    }

    fn embed_regions(&self, observations: &[RegionObservation]) -> Result<Vec<EmbeddingVector>> {
        if !self.config.capabilities.region {
            return Err(Error::Capability { provider: self.config.provider_id.clone(), capability: "region encoding" });
        }
        let images = observations
            .iter()
            .map(|obs| {
                obs.image
                    .as_ref()
                    .map(|bytes| base64::engine::general_purpose::STANDARD.encode(bytes))
                    .ok_or_else(|| Error::invalid("remote region encoding needs image bytes"))
            })
            .collect::<Result<Vec<_>>>()?;
        let response: VectorsResponse =
            self.client.post("/encode_region", &RegionRequest { provider_id: &self.config.provider_id, images })?;
        self.ingest(response, observations.len())
    }
}
