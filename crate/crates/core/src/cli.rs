//! The `duoseg` command line: dataset generation, training, evaluation,
//! ablation, the objective comparison, and the self-check suites.

use crate::config::RunConfig;
use crate::data::{generate_dataset, DatasetManifest, Fold};
use crate::error::{Error, Result};
use crate::experiment::{
    compare_objectives, ensure_dataset, FoldRecord, evaluate_dual, folds_for, load_test_volumes, run_ablation, summarize_rows,
    write_metric_plot, write_metrics_csv, write_summary_csv,
};
use crate::fsutil::{read_json, write_json};
use crate::losses::ContrastiveMode;
use crate::network::load_checkpoint;
use crate::trainer::{run_training, Objective, TrainingData};
use crate::verify::{all_passed, gradient_suite, oracle_suite, CheckResult};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "duoseg", version, about = "Dual-network semi-supervised 3-D segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training seed (overrides `train.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration count (overrides `train.total_iters`).
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct TrainFlags {
    /// `full` or `supervised`.
    #[arg(long, value_parser = parse_objective)]
    objective: Option<Objective>,
    /// `additive` or `margin`.
    #[arg(long, value_parser = parse_mode)]
    contrastive_mode: Option<ContrastiveMode>,
    /// Drop the uncertainty-weighted distillation term.
    #[arg(long)]
    no_une: bool,
    /// Drop the consistency term.
    #[arg(long)]
    no_reg: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a phantom dataset and its manifest.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Number of volumes (overrides `dataset_size`).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train one fold; writes history.csv, checkpoints/, plots/.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        /// Dataset directory; generated from the config if it has no manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Evaluate a checkpoint on a fold's test volumes.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint manifest (`.json`).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the fold recorded next to the checkpoint, else 0.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Train the four (±L_une, ±L_reg) settings and tabulate them.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Folds to include (repeatable); default fold 0.
        #[arg(long)]
        fold: Vec<usize>,
        /// Use every fold.
        #[arg(long)]
        all_folds: bool,
    },
    /// Cross-validated full objective vs supervised-only baseline per seed.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2])]
        seeds: Vec<u64>,
    },
    /// Finite-difference checks of every objective term.
    Gradcheck,
    /// Brute-force equivalence checks for masks, metrics, and tiling.
    Oracle,
}

fn parse_quoted<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_objective(s: &str) -> std::result::Result<Objective, String> {
    parse_quoted(s)
}

fn parse_mode(s: &str) -> std::result::Result<ContrastiveMode, String> {
    parse_quoted(s)
}

fn resolve(common: &Common, flags: Option<&TrainFlags>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = common.iters {
        cfg.train.total_iters = n;
    }
    if let Some(f) = flags {
        if let Some(o) = f.objective {
            cfg.train.objective = o;
        }
        if let Some(m) = f.contrastive_mode {
            cfg.train.contrastive_mode = m;
        }
        cfg.train.ablation.use_une &= !f.no_une;
        cfg.train.ablation.use_reg &= !f.no_reg;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_checks(results: &[CheckResult], started: Instant) -> i32 {
    for r in results {
        println!("{r}");
    }
    let ok = all_passed(results);
    println!(
        "{} of {} checks passed in {:.1} s",
        results.iter().filter(|r| r.passed).count(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if ok {
        0
    } else {
        1
    }
}

fn pick_fold(folds: &[Fold], i: usize) -> Result<&Fold> {
    folds
        .get(i)
        .ok_or_else(|| Error::invalid(format!("fold {i} out of range for {} folds", folds.len())))
}

fn train(cfg: &RunConfig, manifest: &DatasetManifest, fold: usize) -> Result<()> {
    let folds = folds_for(manifest, cfg)?;
    let f = pick_fold(&folds, fold)?;
    let out = &cfg.out_dir;
    cfg.persist(out)?;
    write_json(&out.join("fold.json"), &FoldRecord { index: fold, fold: f.clone() })?;
    let data = TrainingData::load(manifest, f)?;
    let start = Instant::now();
    let res = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, Some(out))?;
    let (first, last) = (res.history.first().unwrap(), res.history.last().unwrap());
    println!(
        "trained fold {fold} for {} iterations in {:.1} s; supervised loss {:.4} -> {:.4}",
        res.history.len(),
        start.elapsed().as_secs_f64(),
        first.sup_s + first.sup_t,
        last.sup_s + last.sup_t
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

fn eval(cfg: &RunConfig, checkpoint: &Path, manifest: &DatasetManifest, fold: Option<usize>) -> Result<()> {
    let dual = load_checkpoint(checkpoint)?;
    let recorded = checkpoint.parent().and_then(Path::parent).map(|d| d.join("fold.json"));
    let (index, f) = match (fold, recorded.filter(|p| p.exists())) {
        (None, Some(p)) => {
            let r: FoldRecord = read_json(&p)?;
            (r.index, r.fold)
        }
        (i, _) => {
            let i = i.unwrap_or(0);
            (i, pick_fold(&folds_for(manifest, cfg)?, i)?.clone())
        }
    };
    let tests = load_test_volumes(manifest, &f)?;
    let rows = evaluate_dual(&dual, &tests, &cfg.eval, index)?;
    let out = &cfg.out_dir;
    cfg.persist(out)?;
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    let summaries = summarize_rows(&rows)?;
    write_summary_csv(&out.join("summary.csv"), &summaries)?;
    write_metric_plot(&out.join("plots").join("metrics.dat"), &summaries)?;
    for (name, s) in &summaries {
        println!(
            "{name:<9} dice {:6.2} ± {:5.2}  jaccard {:6.2} ± {:5.2}  hd95 {}  asd {}  (surface excluded {})",
            s.dice.mean,
            s.dice.std,
            s.jaccard.mean,
            s.jaccard.std,
            s.hd95.map_or("n/a".into(), |m| format!("{:.2}", m.mean)),
            s.asd.map_or("n/a".into(), |m| format!("{:.2}", m.mean)),
            s.surface_excluded
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData { common, count } => {
            let mut cfg = resolve(&common, None)?;
            if let Some(n) = count {
                cfg.dataset_size = n;
            }
            let m = generate_dataset(&cfg.out_dir, &cfg.phantom, cfg.dataset_size)?;
            cfg.persist(&cfg.out_dir)?;
            println!("wrote {} volumes to {}", m.volumes.len(), cfg.out_dir.display());
        }
        Command::Train { common, flags, data, fold } => {
            let cfg = resolve(&common, Some(&flags))?;
            let manifest = ensure_dataset(&cfg, &data)?;
            train(&cfg, &manifest, fold)?;
        }
        Command::Eval { common, checkpoint, data, fold } => {
            let cfg = resolve(&common, None)?;
            let manifest = DatasetManifest::load(&data.join("manifest.json"))?;
            eval(&cfg, &checkpoint, &manifest, fold)?;
        }
        Command::Ablate { common, data, fold, all_folds } => {
            let cfg = resolve(&common, None)?;
            let manifest = ensure_dataset(&cfg, &data)?;
            let folds: Vec<usize> = if all_folds {
                (0..cfg.folds).collect()
            } else if fold.is_empty() {
                vec![0]
            } else {
                fold
            };
            let rows = run_ablation(&manifest, &cfg, &folds, Some(&cfg.out_dir))?;
            println!("L_une  L_reg  dice            jaccard         hd95    asd");
            for r in &rows {
                let s = &r.summary;
                let mark = |b: bool| if b { "yes" } else { "-" };
                println!(
                    "{:<6} {:<6} {:6.2} ± {:5.2}  {:6.2} ± {:5.2}  {:>6}  {:>6}",
                    mark(r.ablation.use_une),
                    mark(r.ablation.use_reg),
                    s.dice.mean,
                    s.dice.std,
                    s.jaccard.mean,
                    s.jaccard.std,
                    s.hd95.map_or("n/a".into(), |m| format!("{:.2}", m.mean)),
                    s.asd.map_or("n/a".into(), |m| format!("{:.2}", m.mean)),
                );
            }
            println!("table written to {}", cfg.out_dir.join("ablation.csv").display());
        }
        Command::Compare { common, flags, data, seeds } => {
            let cfg = resolve(&common, Some(&flags))?;
            let manifest = ensure_dataset(&cfg, &data)?;
            let rows = compare_objectives(&manifest, &cfg, &seeds, Some(&cfg.out_dir), |line| println!("{line}"))?;
            for r in &rows {
                println!(
                    "seed {}: full {:.2}  supervised {:.2}  gain {:+.2}  (full training {:.0} s)",
                    r.seed,
                    r.full_dice,
                    r.supervised_dice,
                    r.gain(),
                    r.full_seconds
                );
            }
        }
        Command::Gradcheck => {
            let t = Instant::now();
            return Ok(print_checks(&gradient_suite(), t));
        }
        Command::Oracle => {
            let t = Instant::now();
            return Ok(print_checks(&oracle_suite(), t));
        }
    }
    Ok(0)
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 on success, 1 on a failed command or
/// check, 2 on a usage error.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
