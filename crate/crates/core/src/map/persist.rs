//! Binary map file.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `NLM1` |
//! | 4 | format version, `u32` |
//! | 4 | manifest length `m`, `u32` |
//! | m | UTF-8 JSON manifest |
//! | rest | payload |
//!
//! The payload holds one fixed-width record per element, in element order:
//! `x, y, z, radius` as `f64`, then each schema channel in schema order as
//! `dimension` × `f32`. The manifest records the scene id, channel schema,
//! build info, element and frame ids, payload length and its SHA-256.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BuildInfo, ChannelSchema, SceneRepresentation};
use crate::error::{Error, Result};
use crate::types::{ContextElement, ElementId, EmbeddingVector, Point3};

pub const MAGIC: [u8; 4] = *b"NLM1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    scene_id: String,
    channel_schema: ChannelSchema,
    build_info: BuildInfo,
    element_count: usize,
    element_ids: Vec<ElementId>,
    frame_ids: Vec<String>,
    element_frames: Vec<u32>,
    record_bytes: usize,
    payload_bytes: usize,
    payload_sha256: String,
}

fn record_bytes(schema: &ChannelSchema) -> usize {
    4 * 8 + schema.channels().len() * schema.dimension() * 4
}

/// Serialize a map to bytes.
pub fn write_map(map: &SceneRepresentation) -> Vec<u8> {
    let schema = map.channel_schema();
    let rec = record_bytes(schema);
    let mut payload = Vec::with_capacity(rec * map.len());
    let mut frame_ids: Vec<String> = Vec::new();
    let mut frame_index: BTreeMap<&str, u32> = BTreeMap::new();
    let mut element_frames = Vec::with_capacity(map.len());
    for e in map.elements() {
        for v in [e.position.x, e.position.y, e.position.z, e.radius] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for spec in schema.channels() {
            for v in e.channels[&spec.provider_id].values() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let idx = *frame_index.entry(e.frame_id.as_str()).or_insert_with(|| {
            frame_ids.push(e.frame_id.clone());
            (frame_ids.len() - 1) as u32
        });
        element_frames.push(idx);
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        scene_id: map.scene_id().to_string(),
        channel_schema: schema.clone(),
        build_info: map.build_info().clone(),
        element_count: map.len(),
        element_ids: map.elements().iter().map(|e| e.element_id).collect(),
        frame_ids,
        element_frames,
        record_bytes: rec,
        payload_bytes: payload.len(),
        payload_sha256: hex::encode(Sha256::digest(&payload)),
    };
    let manifest = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(12 + manifest.len() + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&payload);
    out
}

fn integrity(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

fn le_u32(bytes: &[u8]) -> u32 {
    u32::from_le_bytes(bytes.try_into().expect("4 bytes"))
}

/// Parse a map from bytes. Nothing is returned unless every check passes.
pub fn read_map(bytes: &[u8]) -> Result<SceneRepresentation> {
    if bytes.len() < 12 {
        return Err(integrity("file shorter than the header"));
    }
    if bytes[..4] != MAGIC {
        return Err(integrity("not a map file (bad magic)"));
    }
    let version = le_u32(&bytes[4..8]);
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    let manifest_len = le_u32(&bytes[8..12]) as usize;
    let manifest_end = 12usize
        .checked_add(manifest_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| integrity("manifest truncated"))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[12..manifest_end]).map_err(|e| integrity(format!("manifest unreadable: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Version { found: manifest.version, expected: FORMAT_VERSION });
    }
    let payload = &bytes[manifest_end..];
    if payload.len() != manifest.payload_bytes {
        return Err(integrity(format!("payload is {} bytes, manifest says {}", payload.len(), manifest.payload_bytes)));
    }
    if hex::encode(Sha256::digest(payload)) != manifest.payload_sha256 {
        return Err(integrity("payload checksum mismatch"));
    }
    let schema = ChannelSchema::new(manifest.channel_schema.channels().to_vec())?;
    let rec = record_bytes(&schema);
    let n = manifest.element_count;
    if manifest.record_bytes != rec
        || rec.checked_mul(n) != Some(payload.len())
        || manifest.element_ids.len() != n
        || manifest.element_frames.len() != n
    {
        return Err(integrity("manifest counts disagree with the payload"));
    }
    let dim = schema.dimension();
    let mut elements = Vec::with_capacity(n);
    for (i, record) in payload.chunks_exact(rec).enumerate() {
        let f = |k: usize| f64::from_le_bytes(record[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        let position = Point3::new(f(0), f(1), f(2));
        let radius = f(3);
        let mut channels = BTreeMap::new();
        let mut offset = 32;
        for spec in schema.channels() {
            let values: Vec<f32> = record[offset..offset + 4 * dim]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            offset += 4 * dim;
            let v = EmbeddingVector::new(spec.provider_id.clone(), values)
                .map_err(|e| integrity(format!("element {i}: {e}")))?;
            channels.insert(spec.provider_id.clone(), v);
        }
        let frame_id = manifest
            .frame_ids
            .get(manifest.element_frames[i] as usize)
            .ok_or_else(|| integrity(format!("element {i} references a missing frame")))?
            .clone();
        elements.push(
            ContextElement::new(manifest.element_ids[i], frame_id, position, radius, channels)
                .map_err(|e| integrity(e.to_string()))?,
        );
    }
    SceneRepresentation::new(manifest.scene_id, schema, manifest.build_info, elements)
}

pub fn save_map(map: &SceneRepresentation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_map(map)).map_err(|e| Error::io(path, e))
}

pub fn load_map(path: impl AsRef<Path>) -> Result<SceneRepresentation> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_map(&bytes)
}
