use super::{generate_phantom, read_volume, write_volume, PhantomSpec, Volume};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_json};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Header path relative to the manifest's directory.
    pub path: String,
    /// Whether a reference label is stored with the volume.
    pub labeled: bool,
}

/// Index of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub volumes: Vec<ManifestEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: DatasetManifest = read_json(path)?;
        m.root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn ids(&self) -> Vec<String> {
        self.volumes.iter().map(|v| v.id.clone()).collect()
    }

    pub fn read(&self, id: &str) -> Result<Volume> {
        let e = self
            .volumes
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| Error::invalid(format!("volume {id} not in manifest")))?;
        read_volume(&self.root.join(&e.path))
    }
}

/// Writes `count` phantoms (seeds `base.seed..base.seed+count`) under
/// `dir/volumes/` together with `dir/manifest.json`.
pub fn generate_dataset(dir: &Path, base: &PhantomSpec, count: usize) -> Result<DatasetManifest> {
    let mut volumes = Vec::with_capacity(count);
    for i in 0..count {
        let spec = PhantomSpec {
            seed: base.seed + i as u64,
            ..base.clone()
        };
        let v = generate_phantom(&spec)?;
        let rel = format!("volumes/{}.json", v.id);
        write_volume(&v, &dir.join(&rel))?;
        volumes.push(ManifestEntry {
            id: v.id.clone(),
            path: rel,
            labeled: v.label.is_some(),
        });
    }
    let m = DatasetManifest {
        volumes,
        root: dir.to_path_buf(),
    };
    m.save(&dir.join("manifest.json"))?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PhantomSpec { extent: 16, ..PhantomSpec::default() };
        let m = generate_dataset(dir.path(), &spec, 3).unwrap();
        let loaded = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(loaded.volumes, m.volumes);
        let v = loaded.read(&loaded.ids()[1]).unwrap();
        assert_eq!(v, generate_phantom(&PhantomSpec { seed: 1, ..spec }).unwrap());
    }
}
