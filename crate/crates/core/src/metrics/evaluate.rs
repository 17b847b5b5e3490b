use super::{overlap_metrics, surface_distances, BinaryMask, CaseMetrics};
use crate::data::Volume;
use crate::error::{Error, Result};
use crate::stats::mean_std;
use crate::trainer::{sliding_window_predict, Segmenter};
use serde::{Deserialize, Serialize};

fn case_from_masks(pred: &BinaryMask, reference: &BinaryMask, spacing: [f64; 3]) -> Result<CaseMetrics> {
    let (dice, jaccard) = overlap_metrics(pred, reference)?;
    let (pred_voxels, ref_voxels) = (pred.count(), reference.count());
    let (vox, mm) = if pred_voxels == 0 || ref_voxels == 0 {
        (None, None)
    } else {
        (
            Some(surface_distances(pred, reference, [1.0; 3])?),
            Some(surface_distances(pred, reference, spacing)?),
        )
    };
    Ok(CaseMetrics {
        dice,
        jaccard,
        hd95: vox.as_ref().map(|d| d.hd95),
        asd: vox.as_ref().map(|d| d.asd),
        hd95_mm: mm.as_ref().map(|d| d.hd95),
        asd_mm: mm.as_ref().map(|d| d.asd),
        pred_voxels,
        ref_voxels,
    })
}

/// Sliding-window prediction, binarised at `threshold`, scored against the
/// volume's label.
pub fn evaluate_case(
    seg: &impl Segmenter,
    v: &Volume,
    window: [usize; 3],
    stride: [usize; 3],
    threshold: f64,
) -> Result<CaseMetrics> {
    let label = v
        .label
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("volume {} has no label to evaluate against", v.id)))?;
    let reference = BinaryMask::from_label(label)?;
    let probs = sliding_window_predict(seg, v, window, stride)?;
    let pred = BinaryMask::from_probs(&probs, threshold)?;
    case_from_masks(&pred, &reference, v.spacing)
}

impl CaseMetrics {
    /// Scores a precomputed prediction mask.
    pub fn from_masks(pred: &BinaryMask, reference: &BinaryMask, spacing: [f64; 3]) -> Result<Self> {
        case_from_masks(pred, reference, spacing)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricStat {
    fn of(values: &[f64]) -> Option<Self> {
        mean_std(values).map(|(mean, std)| Self { mean, std })
    }
}

/// Mean ± std over the test cases of one fold. Surface statistics skip
/// sentinel cases and are `None` when every case is a sentinel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub cases: usize,
    pub dice: MetricStat,
    pub jaccard: MetricStat,
    pub hd95: Option<MetricStat>,
    pub asd: Option<MetricStat>,
    pub hd95_mm: Option<MetricStat>,
    pub asd_mm: Option<MetricStat>,
    /// Cases left out of the surface statistics.
    pub surface_excluded: usize,
}

pub fn summarize_fold(cases: &[CaseMetrics]) -> Result<FoldSummary> {
    if cases.is_empty() {
        return Err(Error::invalid("cannot summarise an empty list of cases"));
    }
    let col = |f: fn(&CaseMetrics) -> f64| -> Vec<f64> { cases.iter().map(f).collect() };
    let opt = |f: fn(&CaseMetrics) -> Option<f64>| -> Option<MetricStat> {
        MetricStat::of(&cases.iter().filter_map(f).collect::<Vec<_>>())
    };
    Ok(FoldSummary {
        cases: cases.len(),
        dice: MetricStat::of(&col(|c| c.dice)).expect("nonempty"),
        jaccard: MetricStat::of(&col(|c| c.jaccard)).expect("nonempty"),
        hd95: opt(|c| c.hd95),
        asd: opt(|c| c.asd),
        hd95_mm: opt(|c| c.hd95_mm),
        asd_mm: opt(|c| c.asd_mm),
        surface_excluded: cases.iter().filter(|c| c.surface_sentinel()).count(),
    })
}
