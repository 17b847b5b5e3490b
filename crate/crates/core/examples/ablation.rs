//! The four-row loss ablation (±uncertainty term, ±consistency term) on
//! one fold at reduced length.
//!
//!     cargo run --release --example ablation -- [iters]

use duoseg::config::RunConfig;
use duoseg::experiment::{ensure_dataset, run_ablation};

fn main() -> duoseg::Result<()> {
    let iters = std::env::args().nth(1).map_or(100, |s| s.parse().expect("iters"));
    let mut cfg = RunConfig::default();
    cfg.train.total_iters = iters;
    let manifest = ensure_dataset(&cfg, "runs/example_data".as_ref())?;
    let rows = run_ablation(&manifest, &cfg, &[0], Some("runs/example_ablation".as_ref()))?;
    println!("une  reg  dice");
    for r in rows {
        println!(
            "{:<4} {:<4} {:.2} ± {:.2}",
            r.ablation.use_une as u8, r.ablation.use_reg as u8, r.summary.dice.mean, r.summary.dice.std
        );
    }
    Ok(())
}
