use super::{iteration::TrainState, learning_rate_at, train_iteration, TrainConfig};
use crate::data::{normalize, random_crop, DatasetManifest, Fold, Volume};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::losses::LossReport;
use crate::network::{build_dual, save_checkpoint, DualNet, NetConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// One line of `history.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub lr: f64,
    pub lambda_c: f64,
    pub sup_s: f64,
    pub sup_t: f64,
    pub unsup_s: f64,
    pub unsup_t: f64,
    pub reg: f64,
    pub une: f64,
    pub contrastive: f64,
    pub total: f64,
    pub valid_frac_s: f64,
    pub valid_frac_t: f64,
}

impl HistoryRow {
    pub fn new(iter: usize, lr: f64, r: &LossReport) -> Self {
        let t = &r.terms;
        Self {
            iter,
            lr,
            lambda_c: r.lambda_c,
            sup_s: t.sup_student,
            sup_t: t.sup_teacher,
            unsup_s: t.unsup_student,
            unsup_t: t.unsup_teacher,
            reg: t.consistency,
            une: t.uncertainty,
            contrastive: t.contrastive,
            total: r.total,
            valid_frac_s: r.valid_fractions[0],
            valid_frac_t: r.valid_fractions[1],
        }
    }
}

/// Normalised training volumes of one fold. Unlabeled volumes have their
/// labels stripped on load.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub labeled: Vec<Volume>,
    pub unlabeled: Vec<Volume>,
}

impl TrainingData {
    pub fn load(manifest: &DatasetManifest, fold: &Fold) -> Result<Self> {
        let labeled: Vec<Volume> = fold
            .labeled
            .iter()
            .map(|id| normalize(&manifest.read(id)?))
            .collect::<Result<_>>()?;
        if let Some(v) = labeled.iter().find(|v| v.label.is_none()) {
            return Err(Error::invalid(format!("labeled volume {} has no label on disk", v.id)));
        }
        let unlabeled = fold
            .unlabeled
            .iter()
            .map(|id| {
                let mut v = normalize(&manifest.read(id)?)?;
                v.label = None;
                Ok(v)
            })
            .collect::<Result<_>>()?;
        Ok(Self { labeled, unlabeled })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dual: DualNet,
    pub history: Vec<HistoryRow>,
}

fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    write_atomic(path, &bytes)
}

fn write_loss_plot(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut s = String::from("# iter total sup_s sup_t unsup_s unsup_t reg une contrastive\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            r.iter, r.total, r.sup_s, r.sup_t, r.unsup_s, r.unsup_t, r.reg, r.une, r.contrastive
        );
    }
    write_atomic(path, s.as_bytes())
}

/// Trains a freshly initialised pair for `cfg.total_iters` iterations.
///
/// With `out_dir` set, writes `history.csv`, `plots/loss.dat`, and a
/// checkpoint under `checkpoints/` at every decay boundary and at the end.
pub fn run_training(
    data: &TrainingData,
    nets: (&NetConfig, &NetConfig),
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.labeled.is_empty() {
        return Err(Error::invalid("fold has no labeled training volume"));
    }
    if data.unlabeled.is_empty() && cfg.objective == super::Objective::Full {
        return Err(Error::invalid("fold has no unlabeled training volume"));
    }
    let mut dual = build_dual(nets.0.clone(), nets.1.clone(), cfg.seed)?;
    let mut state = TrainState::new(&dual, cfg.seed);
    let mut history = Vec::with_capacity(cfg.total_iters);
    for t in 0..cfg.total_iters {
        let li = state.rng.gen_range(0..data.labeled.len());
        let lab = random_crop(&data.labeled[li], cfg.crop, &mut state.rng)?;
        let unl = if data.unlabeled.is_empty() {
            lab.clone()
        } else {
            let ui = state.rng.gen_range(0..data.unlabeled.len());
            random_crop(&data.unlabeled[ui], cfg.crop, &mut state.rng)?
        };
        let report = train_iteration(&mut dual, &lab, &unl, cfg, &mut state)?;
        history.push(HistoryRow::new(t, learning_rate_at(t, cfg), &report));
        let done = t + 1;
        if let Some(dir) = out_dir {
            if done % cfg.decay_every == 0 && done < cfg.total_iters {
                save_checkpoint(&dual, &dir.join("checkpoints").join(format!("iter_{done:05}")))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        save_checkpoint(&dual, &dir.join("checkpoints").join("final"))?;
        write_history(&dir.join("history.csv"), &history)?;
        write_loss_plot(&dir.join("plots").join("loss.dat"), &history)?;
    }
    Ok(TrainOutcome { dual, history })
}
