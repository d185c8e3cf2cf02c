//! `.fpm` probability-map files.
//!
//! Layout: `FPM1`, then little-endian u32 height, width and label count, the
//! label names as u16-length-prefixed UTF-8, then `height * width * labels`
//! little-endian f32 values in channel-innermost order.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::probmap::{LabelSet, ProbMap};

pub const MAGIC: &[u8; 4] = b"FPM1";

pub fn encode(map: &ProbMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + map.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.num_labels() as u32).to_le_bytes());
    for name in map.labels().names() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let have = self.bytes.len() - self.pos;
        if have < n {
            return Err(Error::parse(
                self.pos,
                format!("truncated {what}: expected {n} bytes, found {have}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ProbMap> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse(0, "bad magic, expected FPM1"));
    }
    let height = r.u32("height")? as usize;
    let width = r.u32("width")? as usize;
    let count = r.u32("label count")? as usize;
    let mut names = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2, "label length")?.try_into().unwrap()) as usize;
        let at = r.pos;
        let raw = r.take(len, "label name")?;
        let name = std::str::from_utf8(raw).map_err(|_| Error::parse(at, "label name is not UTF-8"))?;
        names.push(name.to_string());
    }
    let labels = LabelSet::new(&names).map_err(|e| Error::parse(16, e.to_string()))?;
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(count))
        .ok_or_else(|| Error::parse(4, "dimensions overflow"))?;
    let data_at = r.pos;
    let raw = r.take(n * 4, "probability data")?;
    if r.pos != bytes.len() {
        return Err(Error::parse(
            r.pos,
            format!("{} trailing bytes after probability data", bytes.len() - r.pos),
        ));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ProbMap::new(width, height, Arc::new(labels), data).map_err(|e| match e {
        Error::NotNormalized { .. } => Error::parse(data_at, e.to_string()),
        other => other,
    })
}

/// File name for a map keyed by image id and optional window.
pub fn file_name(image_id: &str, window: Option<&BBox>) -> String {
    match window {
        None => format!("{image_id}__full.fpm"),
        Some(b) => format!("{image_id}__{}_{}_{}_{}.fpm", b.x0, b.y0, b.x1, b.y1),
    }
}

pub fn path_for(dir: &Path, image_id: &str, window: Option<&BBox>) -> PathBuf {
    dir.join(file_name(image_id, window))
}

pub fn read(path: &Path) -> Result<ProbMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: &Path, map: &ProbMap) -> Result<()> {
    super::write_atomic(path, &encode(map))
}
