//! Overlap and surface-distance metrics for binary segmentations.

mod evaluate;
mod overlap;
mod surface;

pub use evaluate::{evaluate_case, summarize_fold, FoldSummary, MetricStat};
pub use overlap::overlap_metrics;
pub use surface::{directed_distances, extract_surface, surface_distances, SurfaceDistances};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// A boolean voxel grid, row-major with z fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub dims: [usize; 3],
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch {
                op: "binary mask",
                left: dims.to_vec(),
                right: vec![data.len()],
            });
        }
        Ok(Self { dims, data })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![false; dims.iter().product()],
        }
    }

    /// From a `[X, Y, Z]` tensor of zeros and ones.
    pub fn from_label(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 {
            return Err(Error::invalid(format!("label must be 3-D, got {s:?}")));
        }
        if t.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("label must contain only 0 and 1"));
        }
        Self::new([s[0], s[1], s[2]], t.data().iter().map(|&v| v == 1.0).collect())
    }

    /// Foreground where the channel-1 probability of `probs [2, X, Y, Z]`
    /// reaches `threshold`.
    pub fn from_probs(probs: &Tensor, threshold: f64) -> Result<Self> {
        let s = probs.shape();
        if s.len() != 4 || s[0] != 2 {
            return Err(Error::invalid(format!("expected [2, X, Y, Z] probabilities, got {s:?}")));
        }
        let n = s[1] * s[2] * s[3];
        Self::new([s[1], s[2], s[3]], probs.data()[n..].iter().map(|&p| p >= threshold).collect())
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[(x * self.dims[1] + y) * self.dims[2] + z]
    }

    pub fn coords(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [_, ny, nz] = self.dims;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| [i / (ny * nz), (i / nz) % ny, i % nz])
    }
}

/// Metrics for one predicted/reference pair. Surface distances are `None`
/// when either mask is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    /// Percent.
    pub dice: f64,
    /// Percent.
    pub jaccard: f64,
    /// Voxel units.
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    /// Millimetres, using the volume spacing.
    pub hd95_mm: Option<f64>,
    pub asd_mm: Option<f64>,
    pub pred_voxels: usize,
    pub ref_voxels: usize,
}

impl CaseMetrics {
    pub fn surface_sentinel(&self) -> bool {
        self.hd95.is_none()
    }
}
