// Volume file pair: `<stem>.json` header and `<stem>.raw` payload.
//
// The payload holds X·Y·Z little-endian f64 image values in row-major order
// (z fastest), followed by the same number of label values when has_label.

use super::Volume;
use crate::error::{Error, Result};
use crate::fsutil::{f64s_to_le, le_to_f64s, write_atomic, write_json};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub id: String,
    pub dims: [usize; 3],
    pub dtype: String,
    pub spacing: [f64; 3],
    pub has_label: bool,
}

fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

/// Writes `path` (header) and its sibling `.raw` payload, each atomically.
pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    let header = VolumeHeader {
        id: v.id.clone(),
        dims: v.dims(),
        dtype: "f64le".into(),
        spacing: v.spacing,
        has_label: v.label.is_some(),
    };
    let values = v
        .image
        .data()
        .iter()
        .chain(v.label.iter().flat_map(|l| l.data()))
        .copied();
    write_atomic(&payload_path(path), &f64s_to_le(values))?;
    write_json(path, &header)
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: VolumeHeader = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if header.dtype != "f64le" {
        return Err(Error::UnknownDtype {
            path: path.to_path_buf(),
            dtype: header.dtype,
        });
    }
    if header.dims.contains(&0) {
        return Err(malformed(format!("zero extent in dims {:?}", header.dims)));
    }
    if header.spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(malformed(format!("non-positive spacing {:?}", header.spacing)));
    }
    let payload = payload_path(path);
    let bytes = std::fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let n: usize = header.dims.iter().product();
    let expected = n * 8 * if header.has_label { 2 } else { 1 };
    if bytes.len() != expected {
        return Err(Error::PayloadLength {
            path: payload,
            expected,
            found: bytes.len(),
        });
    }
    let mut values = le_to_f64s(&bytes);
    let label = if header.has_label {
        let l = values.split_off(n);
        if l.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(malformed("label payload contains values other than 0 and 1".into()));
        }
        Some(Tensor::new(&header.dims, l)?)
    } else {
        None
    };
    Volume::new(header.id, Tensor::new(&header.dims, values)?, label, header.spacing)
}
