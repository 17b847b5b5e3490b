//! Train briefly, then segment the fold's test volumes with overlapping
//! windows and score student, teacher, and their ensemble.
//!
//!     cargo run --release --example sliding_window -- [iters]

use duoseg::config::{EvalOptions, RunConfig};
use duoseg::experiment::{ensure_dataset, evaluate_dual, folds_for, load_test_volumes, summarize_rows};
use duoseg::trainer::{run_training, sliding_window_logits, TrainingData};

fn main() -> duoseg::Result<()> {
    let iters = std::env::args().nth(1).map_or(150, |s| s.parse().expect("iters"));
    let mut cfg = RunConfig::default();
    cfg.train.total_iters = iters;
    let manifest = ensure_dataset(&cfg, "runs/example_data".as_ref())?;
    let fold = &folds_for(&manifest, &cfg)?[0];
    let data = TrainingData::load(&manifest, fold)?;
    let dual = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, None)?.dual;

    let tests = load_test_volumes(&manifest, fold)?;
    let opts = EvalOptions::default();
    let w = sliding_window_logits(&dual.student, &tests[0], opts.window, opts.stride)?;
    let max_cover = w.coverage.iter().max().unwrap();
    println!("window {:?} stride {:?}: each voxel covered 1..={max_cover} times", opts.window, opts.stride);

    let rows = evaluate_dual(&dual, &tests, &opts, 0)?;
    for r in rows.iter().filter(|r| r.model == "ensemble") {
        println!("{}  dice {:.2}  hd95 {:?}", r.case_id, r.metrics.dice, r.metrics.hd95);
    }
    for (name, s) in summarize_rows(&rows)? {
        println!("{name:<9} dice {:.2} ± {:.2}", s.dice.mean, s.dice.std);
    }
    Ok(())
}
