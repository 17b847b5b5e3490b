use super::CaseRow;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::metrics::{FoldSummary, MetricStat};
use crate::trainer::Ablation;
use std::fmt::Write as _;
use std::path::Path;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stat(s: Option<MetricStat>) -> [String; 2] {
    match s {
        Some(s) => [s.mean.to_string(), s.std.to_string()],
        None => [String::new(), String::new()],
    }
}

fn write_records(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| err(e.into_error().into()))?;
    write_atomic(path, &bytes)
}

/// One row per (case, model). Surface columns are blank for sentinel cases.
pub fn write_metrics_csv(path: &Path, rows: &[CaseRow]) -> Result<()> {
    write_records(
        path,
        &[
            "fold", "case_id", "model", "dice", "jaccard", "hd95", "asd", "hd95_mm", "asd_mm", "pred_voxels",
            "ref_voxels", "surface_sentinel",
        ],
        rows.iter().map(|r| {
            let m = &r.metrics;
            vec![
                r.fold.to_string(),
                r.case_id.clone(),
                r.model.to_string(),
                m.dice.to_string(),
                m.jaccard.to_string(),
                opt(m.hd95),
                opt(m.asd),
                opt(m.hd95_mm),
                opt(m.asd_mm),
                m.pred_voxels.to_string(),
                m.ref_voxels.to_string(),
                m.surface_sentinel().to_string(),
            ]
        }),
    )
}

const SUMMARY_COLUMNS: [&str; 14] = [
    "cases",
    "dice_mean",
    "dice_std",
    "jaccard_mean",
    "jaccard_std",
    "hd95_mean",
    "hd95_std",
    "asd_mean",
    "asd_std",
    "hd95_mm_mean",
    "hd95_mm_std",
    "asd_mm_mean",
    "asd_mm_std",
    "surface_excluded",
];

fn summary_cells(s: &FoldSummary) -> Vec<String> {
    let mut v = vec![s.cases.to_string()];
    v.extend(stat(Some(s.dice)));
    v.extend(stat(Some(s.jaccard)));
    v.extend(stat(s.hd95));
    v.extend(stat(s.asd));
    v.extend(stat(s.hd95_mm));
    v.extend(stat(s.asd_mm));
    v.push(s.surface_excluded.to_string());
    v
}

/// Mean and std per metric, one row per model.
pub fn write_summary_csv(path: &Path, summaries: &[(String, FoldSummary)]) -> Result<()> {
    let mut header = vec!["model"];
    header.extend(SUMMARY_COLUMNS);
    write_records(
        path,
        &header,
        summaries.iter().map(|(name, s)| {
            let mut row = vec![name.clone()];
            row.extend(summary_cells(s));
            row
        }),
    )
}

/// Gnuplot-friendly bar data: index, model, dice, jaccard, hd95, asd.
pub fn write_metric_plot(path: &Path, summaries: &[(String, FoldSummary)]) -> Result<()> {
    let mut s = String::from("# idx model dice dice_std jaccard jaccard_std hd95 asd\n");
    for (i, (name, f)) in summaries.iter().enumerate() {
        let nan = |m: Option<MetricStat>| m.map_or(f64::NAN, |m| m.mean);
        let _ = writeln!(
            s,
            "{i} {name} {} {} {} {} {} {}",
            f.dice.mean,
            f.dice.std,
            f.jaccard.mean,
            f.jaccard.std,
            nan(f.hd95),
            nan(f.asd)
        );
    }
    write_atomic(path, s.as_bytes())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub summary: FoldSummary,
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut header = vec!["use_une", "use_reg"];
    header.extend(SUMMARY_COLUMNS);
    write_records(
        path,
        &header,
        rows.iter().map(|r| {
            let mut row = vec![r.ablation.use_une.to_string(), r.ablation.use_reg.to_string()];
            row.extend(summary_cells(&r.summary));
            row
        }),
    )
}
