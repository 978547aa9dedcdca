use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};

/// Read one JSON frame per non-blank line. Errors name the 1-based line.
pub fn read_frames_jsonl(path: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: Frame = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_frames_jsonl(path: impl AsRef<Path>, frames: &[Frame]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for frame in frames {
        serde_json::to_writer(&mut out, frame)?;
        out.push(b'\n');
    }
    std::fs::File::create(path).and_then(|mut f| f.write_all(&out)).map_err(|e| Error::io(path, e))
}
