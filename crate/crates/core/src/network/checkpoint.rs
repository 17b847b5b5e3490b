// Checkpoint = JSON manifest + raw little-endian f64 payload, the same
// payload convention as volume files.

use super::{DualNet, NetConfig, Network};
use crate::error::{Error, Result};
use crate::fsutil::{f64s_to_le, le_to_f64s, read_json, write_atomic, write_json};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const FORMAT: &str = "duoseg-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in values.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub dtype: String,
    pub payload: String,
    pub student: NetConfig,
    pub teacher: NetConfig,
    pub tensors: Vec<TensorEntry>,
}

fn payload_path(manifest: &Path, file: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(file)
}

/// Writes `<stem>.json` and `<stem>.bin`; returns the manifest path.
pub fn save_checkpoint(dual: &DualNet, stem: &Path) -> Result<PathBuf> {
    let manifest_path = stem.with_extension("json");
    let payload_name = stem
        .with_extension("bin")
        .file_name()
        .ok_or_else(|| Error::invalid(format!("bad checkpoint path {}", stem.display())))?
        .to_string_lossy()
        .into_owned();
    let mut tensors = Vec::new();
    let mut values = Vec::new();
    for (prefix, net) in [("student", &dual.student), ("teacher", &dual.teacher)] {
        for (name, p) in net.param_names().iter().zip(net.params()) {
            tensors.push(TensorEntry {
                name: format!("{prefix}.{name}"),
                shape: p.shape().to_vec(),
                offset: values.len(),
            });
            values.extend_from_slice(p.data());
        }
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        dtype: "f64le".into(),
        payload: payload_name.clone(),
        student: dual.student.config().clone(),
        teacher: dual.teacher.config().clone(),
        tensors,
    };
    write_atomic(&payload_path(&manifest_path, &payload_name), &f64s_to_le(values))?;
    write_json(&manifest_path, &manifest)?;
    Ok(manifest_path)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<DualNet> {
    let m: CheckpointManifest = read_json(manifest_path)?;
    let bad = |reason: String| Error::MalformedHeader {
        path: manifest_path.to_path_buf(),
        reason,
    };
    if m.format != FORMAT {
        return Err(bad(format!("unknown checkpoint format {:?}", m.format)));
    }
    if m.dtype != "f64le" {
        return Err(Error::UnknownDtype {
            path: manifest_path.to_path_buf(),
            dtype: m.dtype,
        });
    }
    let payload = payload_path(manifest_path, &m.payload);
    let bytes = std::fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let expected: usize = m.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum::<usize>() * 8;
    if bytes.len() != expected {
        return Err(Error::PayloadLength {
            path: payload,
            expected,
            found: bytes.len(),
        });
    }
    let values = le_to_f64s(&bytes);
    let mut student = Vec::new();
    let mut teacher = Vec::new();
    for t in &m.tensors {
        let n: usize = t.shape.iter().product();
        let end = t.offset + n;
        if end > values.len() {
            return Err(bad(format!("tensor {} overruns the payload", t.name)));
        }
        let tensor = Tensor::new(&t.shape, values[t.offset..end].to_vec())?;
        if t.name.starts_with("student.") {
            student.push(tensor);
        } else if t.name.starts_with("teacher.") {
            teacher.push(tensor);
        } else {
            return Err(bad(format!("tensor {} belongs to neither network", t.name)));
        }
    }
    Ok(DualNet {
        student: Network::from_parts(m.student, 0, student)?,
        teacher: Network::from_parts(m.teacher, 0, teacher)?,
    })
}
