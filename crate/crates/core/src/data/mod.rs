//! Synthetic phantoms, the on-disk volume format, preprocessing, and
//! cross-validation splits.

mod kfold;
mod manifest;
mod phantom;
mod preprocess;
mod volume_io;

pub use kfold::{kfold_split, Fold};
pub use manifest::{generate_dataset, DatasetManifest, ManifestEntry};
pub use phantom::{generate_phantom, PhantomSpec};
pub use preprocess::{normalize, random_crop};
pub use volume_io::{read_volume, write_volume, VolumeHeader};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A scalar 3-D image with an optional binary label.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub id: String,
    /// `[X, Y, Z]` intensities.
    pub image: Tensor,
    /// `[X, Y, Z]` zeros and ones.
    pub label: Option<Tensor>,
    /// Voxel size in millimetres.
    pub spacing: [f64; 3],
}

impl Volume {
    pub fn new(id: impl Into<String>, image: Tensor, label: Option<Tensor>, spacing: [f64; 3]) -> Result<Self> {
        if image.shape().len() != 3 {
            return Err(Error::invalid(format!("volume image must be 3-D, got {:?}", image.shape())));
        }
        if let Some(l) = &label {
            if l.shape() != image.shape() {
                return Err(Error::ShapeMismatch {
                    op: "volume label",
                    left: image.shape().to_vec(),
                    right: l.shape().to_vec(),
                });
            }
            if l.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::invalid("volume label must contain only 0 and 1"));
            }
        }
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid(format!("spacing must be positive, got {spacing:?}")));
        }
        Ok(Self {
            id: id.into(),
            image,
            label,
            spacing,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        let s = self.image.shape();
        [s[0], s[1], s[2]]
    }

    /// The image as a one-channel network input `[1, X, Y, Z]`.
    pub fn as_input(&self) -> Tensor {
        let [x, y, z] = self.dims();
        self.image.clone().reshape(&[1, x, y, z]).expect("same element count")
    }
}
