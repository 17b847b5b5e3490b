//! Train both networks on one fold and print the loss curve.
//!
//!     cargo run --release --example train_fold -- [iters] [fold]
//!
//! Artifacts (history.csv, checkpoints/, plots/) land in runs/example_train.

use duoseg::config::RunConfig;
use duoseg::experiment::{ensure_dataset, folds_for};
use duoseg::trainer::{run_training, TrainingData};

fn main() -> duoseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters = args.next().map_or(120, |s| s.parse().expect("iters"));
    let fold = args.next().map_or(0, |s| s.parse().expect("fold"));

    let mut cfg = RunConfig::default();
    cfg.train.total_iters = iters;
    cfg.train.decay_every = (iters / 2).max(1);
    let manifest = ensure_dataset(&cfg, "runs/example_data".as_ref())?;
    let folds = folds_for(&manifest, &cfg)?;
    let data = TrainingData::load(&manifest, &folds[fold])?;
    println!("fold {fold}: {} labeled, {} unlabeled", data.labeled.len(), data.unlabeled.len());

    let out = std::path::Path::new("runs/example_train");
    let started = std::time::Instant::now();
    let res = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, Some(out))?;
    for r in res.history.iter().step_by((iters / 10).max(1)) {
        println!(
            "iter {:>4}  lr {:.4}  lambda {:.3}  sup {:.4}/{:.4}  unsup {:.4}/{:.4}  total {:.4}",
            r.iter, r.lr, r.lambda_c, r.sup_s, r.sup_t, r.unsup_s, r.unsup_t, r.total
        );
    }
    println!("{iters} iterations in {:.1} s", started.elapsed().as_secs_f64());
    cfg.persist(out)?;
    Ok(())
}
