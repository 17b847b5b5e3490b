//! Fold-level orchestration: train, evaluate, summarise, and the ablation
//! and semi-supervised-vs-baseline comparisons built on top.

mod tables;

pub use tables::{write_ablation_csv, write_metric_plot, write_metrics_csv, write_summary_csv, AblationRow};

use crate::config::{EvalOptions, RunConfig};
use crate::data::{generate_dataset, kfold_split, normalize, DatasetManifest, Fold, Volume};
use crate::error::{Error, Result};
use crate::fsutil::write_json;
use crate::metrics::{evaluate_case, summarize_fold, CaseMetrics, FoldSummary};
use crate::network::DualNet;
use crate::trainer::{run_training, Ablation, Ensemble, HistoryRow, Objective, Segmenter, TrainingData};
use std::path::Path;
use std::time::Instant;

/// Names of the evaluated predictors, primary first.
pub const MODELS: [&str; 3] = ["ensemble", "student", "teacher"];

/// The four loss-ablation settings in reporting order:
/// `(L_une only, L_reg only, both, neither)`.
pub const ABLATION_GRID: [Ablation; 4] = [
    Ablation { use_une: true, use_reg: false },
    Ablation { use_une: false, use_reg: true },
    Ablation { use_une: true, use_reg: true },
    Ablation { use_une: false, use_reg: false },
];

/// A fold together with its index, as written to `fold.json`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FoldRecord {
    pub index: usize,
    #[serde(flatten)]
    pub fold: Fold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseRow {
    pub fold: usize,
    pub case_id: String,
    pub model: &'static str,
    pub metrics: CaseMetrics,
}

/// Loads the dataset under `dir`, generating it from `cfg` first if absent.
pub fn ensure_dataset(cfg: &RunConfig, dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    if path.exists() {
        DatasetManifest::load(&path)
    } else {
        generate_dataset(dir, &cfg.phantom, cfg.dataset_size)
    }
}

/// Folds for `cfg`; the split is shuffled with the training seed.
pub fn folds_for(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Vec<Fold>> {
    kfold_split(&manifest.ids(), cfg.folds, cfg.train.seed, cfg.labeled_fraction)
}

pub fn load_test_volumes(manifest: &DatasetManifest, fold: &Fold) -> Result<Vec<Volume>> {
    fold.test.iter().map(|id| normalize(&manifest.read(id)?)).collect()
}

fn eval_one(seg: &impl Segmenter, v: &Volume, o: &EvalOptions) -> Result<CaseMetrics> {
    evaluate_case(seg, v, o.window, o.stride, o.threshold)
}

/// Scores the ensemble, the student, and the teacher on every test volume.
pub fn evaluate_dual(dual: &DualNet, tests: &[Volume], opts: &EvalOptions, fold: usize) -> Result<Vec<CaseRow>> {
    let mut rows = Vec::with_capacity(3 * tests.len());
    for v in tests {
        let ms = [
            eval_one(&Ensemble::from(dual), v, opts)?,
            eval_one(&dual.student, v, opts)?,
            eval_one(&dual.teacher, v, opts)?,
        ];
        for (model, metrics) in MODELS.into_iter().zip(ms) {
            rows.push(CaseRow {
                fold,
                case_id: v.id.clone(),
                model,
                metrics,
            });
        }
    }
    Ok(rows)
}

/// Per-model summaries in [`MODELS`] order.
pub fn summarize_rows(rows: &[CaseRow]) -> Result<Vec<(String, FoldSummary)>> {
    MODELS
        .iter()
        .map(|&m| {
            let cases: Vec<CaseMetrics> = rows.iter().filter(|r| r.model == m).map(|r| r.metrics.clone()).collect();
            Ok((m.to_string(), summarize_fold(&cases)?))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    pub history: Vec<HistoryRow>,
    pub cases: Vec<CaseRow>,
    pub train_seconds: f64,
    pub dual: DualNet,
}

impl FoldResult {
    pub fn mean_dice(&self, model: &str) -> f64 {
        let d: Vec<f64> = self.cases.iter().filter(|r| r.model == model).map(|r| r.metrics.dice).collect();
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// Trains and evaluates fold `index`. With `out_dir`, writes the training
/// artifacts, `metrics.csv`, `summary.csv`, `plots/metrics.dat`, `fold.json`,
/// and `run.json` there.
pub fn run_fold(
    manifest: &DatasetManifest,
    folds: &[Fold],
    index: usize,
    cfg: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<FoldResult> {
    cfg.validate()?;
    let fold = folds
        .get(index)
        .ok_or_else(|| Error::invalid(format!("fold {index} out of range for {} folds", folds.len())))?;
    let data = TrainingData::load(manifest, fold)?;
    let start = Instant::now();
    let out = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, out_dir)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let tests = load_test_volumes(manifest, fold)?;
    let cases = evaluate_dual(&out.dual, &tests, &cfg.eval, index)?;
    if let Some(dir) = out_dir {
        cfg.persist(dir)?;
        write_json(&dir.join("fold.json"), &FoldRecord { index, fold: fold.clone() })?;
        write_metrics_csv(&dir.join("metrics.csv"), &cases)?;
        let summaries = summarize_rows(&cases)?;
        write_summary_csv(&dir.join("summary.csv"), &summaries)?;
        write_metric_plot(&dir.join("plots").join("metrics.dat"), &summaries)?;
    }
    Ok(FoldResult {
        fold: index,
        history: out.history,
        cases,
        train_seconds,
        dual: out.dual,
    })
}

/// Runs every fold with `cfg`.
pub fn run_cross_validation(manifest: &DatasetManifest, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<Vec<FoldResult>> {
    let folds = folds_for(manifest, cfg)?;
    (0..folds.len())
        .map(|i| {
            let sub = out_dir.map(|d| d.join(format!("fold_{i}")));
            run_fold(manifest, &folds, i, cfg, sub.as_deref())
        })
        .collect()
}

/// Trains the four [`ABLATION_GRID`] settings on the given folds and
/// summarises the ensemble predictions of each.
pub fn run_ablation(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    fold_indices: &[usize],
    out_dir: Option<&Path>,
) -> Result<Vec<AblationRow>> {
    let folds = folds_for(manifest, cfg)?;
    let mut rows = Vec::with_capacity(4);
    for ab in ABLATION_GRID {
        let mut c = cfg.clone();
        c.train.ablation = ab;
        c.train.objective = Objective::Full;
        let mut cases = Vec::new();
        for &i in fold_indices {
            let sub = out_dir.map(|d| d.join(format!("une{}_reg{}", ab.use_une as u8, ab.use_reg as u8)).join(format!("fold_{i}")));
            let r = run_fold(manifest, &folds, i, &c, sub.as_deref())?;
            cases.extend(r.cases.into_iter().filter(|c| c.model == MODELS[0]).map(|c| c.metrics));
        }
        rows.push(AblationRow {
            ablation: ab,
            summary: summarize_fold(&cases)?,
        });
    }
    if let Some(dir) = out_dir {
        cfg.persist(dir)?;
        write_ablation_csv(&dir.join("ablation.csv"), &rows)?;
    }
    Ok(rows)
}

/// Cross-validated ensemble Dice of the full objective and the
/// supervised-only baseline for one seed.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub full_dice: f64,
    pub supervised_dice: f64,
    /// Wall-clock training time of the full objective over all folds.
    pub full_seconds: f64,
    pub supervised_seconds: f64,
}

impl SeedComparison {
    pub fn gain(&self) -> f64 {
        self.full_dice - self.supervised_dice
    }
}

fn pooled_dice(results: &[FoldResult]) -> f64 {
    let d: Vec<f64> = results
        .iter()
        .flat_map(|r| r.cases.iter().filter(|c| c.model == MODELS[0]).map(|c| c.metrics.dice))
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Runs the full cross-validation for both objectives under every seed.
/// `progress` is called once per finished (seed, objective) pair.
pub fn compare_objectives(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&str),
) -> Result<Vec<SeedComparison>> {
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut res = [(0.0, 0.0); 2];
        for (slot, obj) in [Objective::Full, Objective::Supervised].into_iter().enumerate() {
            let mut c = cfg.clone();
            c.train.seed = seed;
            c.train.objective = obj;
            let name = if obj == Objective::Full { "full" } else { "supervised" };
            let sub = out_dir.map(|d| d.join(format!("seed_{seed}")).join(name));
            let folds = run_cross_validation(manifest, &c, sub.as_deref())?;
            let secs = folds.iter().map(|f| f.train_seconds).sum();
            res[slot] = (pooled_dice(&folds), secs);
            progress(&format!("seed {seed} {name}: dice {:.2}, train {secs:.1} s", res[slot].0));
        }
        out.push(SeedComparison {
            seed,
            full_dice: res[0].0,
            supervised_dice: res[1].0,
            full_seconds: res[0].1,
            supervised_seconds: res[1].1,
        });
    }
    if let Some(dir) = out_dir {
        cfg.persist(dir)?;
        write_json(&dir.join("comparison.json"), &out)?;
    }
    Ok(out)
}
