//! The `.fasf` on-disk feature container.
//!
//! Layout, all little-endian: magic "FASF" (4 bytes), format version u16,
//! stream tag u8 (0=acoustic, 1=semantic), frame count u32, dim u32, then
//! frame_count * dim f32 values row-major. Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use fas_core::features::{FeatureSequence, StreamKind};

use crate::error::{io_err, CliError, Result};

pub const MAGIC: [u8; 4] = *b"FASF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub kind: StreamKind,
    pub frames: u32,
    pub dim: u32,
}

pub fn write_feature_file(path: &Path, seq: &FeatureSequence) -> Result<()> {
    if seq.data.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numeric(format!(
            "refusing to write non-finite features to {}",
            path.display()
        )));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + seq.data.len() * 4);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(seq.kind.tag());
    buf.extend_from_slice(&(seq.frames as u32).to_le_bytes());
    buf.extend_from_slice(&(seq.dim as u32).to_le_bytes());
    for v in &seq.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<FeatureHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(CliError::Data(format!(
            "{}: truncated header, {} bytes (need {HEADER_LEN})",
            path.display(),
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(CliError::Data(format!(
            "{}: bad magic {:?}, expected \"FASF\"",
            path.display(),
            &bytes[..4]
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(CliError::Data(format!(
            "{}: unsupported format version {version}, expected {VERSION}",
            path.display()
        )));
    }
    let kind = StreamKind::from_tag(bytes[6])
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let frames = u32::from_le_bytes(bytes[7..11].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[11..15].try_into().unwrap());
    Ok(FeatureHeader { kind, frames, dim })
}

/// Header only, for cheap validation; checks the payload length against the
/// file size without reading it.
pub fn read_feature_header(path: &Path) -> Result<FeatureHeader> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let h = parse_header(path, &bytes)?;
    check_payload(path, &h, bytes.len())?;
    Ok(h)
}

fn check_payload(path: &Path, h: &FeatureHeader, file_len: usize) -> Result<()> {
    let expected = HEADER_LEN + h.frames as usize * h.dim as usize * 4;
    if file_len != expected {
        return Err(CliError::Data(format!(
            "{}: payload length mismatch, file is {file_len} bytes but {} frames x {} dims \
             requires exactly {expected}",
            path.display(),
            h.frames,
            h.dim
        )));
    }
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let h = parse_header(path, &bytes)?;
    check_payload(path, &h, bytes.len())?;
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureSequence::new(h.kind, h.frames as usize, h.dim as usize, data)
        .map_err(CliError::from)
}
