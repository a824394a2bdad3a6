//! BSF band-stack files.
//!
//! Layout: ASCII `BSF1`, a little-endian `u32` header length `L`, `L` bytes of
//! UTF-8 JSON header, then `height·width·bands` little-endian `f32` values in
//! `[band][row][col]` order.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::datastore::sensor::{Satellite, BAND_TOKENS};
use crate::datastore::stack::BandStack;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BSF1";

#[derive(Serialize, Deserialize)]
struct Header {
    parcel_id: String,
    satellite: Satellite,
    date: NaiveDate,
    season_id: String,
    height: usize,
    width: usize,
    bands: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

pub fn encode(stack: &BandStack) -> Result<Vec<u8>> {
    stack.validate()?;
    let header = Header {
        parcel_id: stack.parcel_id.clone(),
        satellite: stack.satellite,
        date: stack.date,
        season_id: stack.season_id.clone(),
        height: stack.height,
        width: stack.width,
        bands: stack.bands.clone(),
        label: stack.label.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len() + stack.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &stack.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<BandStack> {
    let format = |msg: &str| Error::Format { path: path.to_path_buf(), msg: msg.to_string() };
    if bytes.len() < 8 {
        return Err(format("file shorter than the 8-byte preamble"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format(&format!("bad magic {:?}, expected \"BSF1\"", String::from_utf8_lossy(&bytes[..4]))));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| format(&format!("header length {header_len} exceeds file size {}", bytes.len())))?;
    let header: Header = serde_json::from_slice(&bytes[8..header_end]).map_err(|e| Error::json(path, e))?;
    if let Some(bad) = header.bands.iter().find(|b| !BAND_TOKENS.contains(&b.as_str())) {
        return Err(Error::Schema(format!("{}: unknown band token {bad:?}", path.display())));
    }
    let payload = &bytes[header_end..];
    let expected = header.height * header.width * header.bands.len() * 4;
    if payload.len() != expected {
        return Err(Error::Truncated { path: path.to_path_buf(), expected, actual: payload.len() });
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let stack = BandStack {
        parcel_id: header.parcel_id,
        satellite: header.satellite,
        date: header.date,
        season_id: header.season_id,
        height: header.height,
        width: header.width,
        bands: header.bands,
        label: header.label,
        data,
    };
    stack.validate().map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })?;
    Ok(stack)
}

/// Writes atomically (temporary file + rename).
pub fn write_bandstack(stack: &BandStack, path: &Path) -> Result<()> {
    let bytes = encode(stack)?;
    crate::fsutil::write_atomic(path, &bytes)
}

pub fn read_bandstack(path: &Path) -> Result<BandStack> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::stack::fixtures::stack;

    #[test]
    fn single_value_payload_is_four_le_bytes() {
        let s = stack(Satellite::PS, &["NIR"], 1, 1, vec![0.5]);
        let bytes = encode(&s).unwrap();
        // 0.5f32 = 0x3F000000
        assert_eq!(&bytes[bytes.len() - 4..], &[0x00, 0x00, 0x00, 0x3F]);
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 8 + header_len + 4);
    }

    #[test]
    fn nan_is_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.bsf");
        let s = stack(Satellite::PS, &["B"], 1, 2, vec![0.1, f32::NAN]);
        assert!(write_bandstack(&s, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut bytes = encode(&stack(Satellite::PS, &["B"], 1, 1, vec![0.2])).unwrap();
        bytes[..4].copy_from_slice(b"XSF1");
        assert!(matches!(decode(&bytes, Path::new("x.bsf")), Err(Error::Format { .. })));
    }

    #[test]
    fn short_payload_names_both_byte_counts() {
        let mut bytes = encode(&stack(Satellite::PS, &["B", "G"], 2, 2, vec![0.2; 8])).unwrap();
        bytes.truncate(bytes.len() - 4);
        match decode(&bytes, Path::new("t.bsf")) {
            Err(e @ Error::Truncated { expected: 32, actual: 28, .. }) => {
                let msg = e.to_string();
                assert!(msg.contains("32") && msg.contains("28"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_token_is_a_schema_error() {
        let good = encode(&stack(Satellite::PS, &["B"], 1, 1, vec![0.2])).unwrap();
        let text = String::from_utf8_lossy(&good).replace("[\"B\"]", "[\"Q\"]");
        assert!(matches!(decode(text.as_bytes(), Path::new("u.bsf")), Err(Error::Schema(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a").join("s.bsf");
        let mut s = stack(Satellite::L8, &["NIR", "SWIR1"], 2, 3, (0..12).map(|i| i as f32 * 0.1).collect());
        s.label = None;
        write_bandstack(&s, &path).unwrap();
        assert_eq!(read_bandstack(&path).unwrap(), s);
    }
}
