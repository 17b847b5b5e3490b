//! Full objective against the supervised-only baseline, cross-validated
//! over every fold for each seed. The defaults run the desk-scale
//! benchmark (5 folds x 600 iterations x 3 seeds, roughly a quarter hour on
//! one core).
//!
//!     cargo run --release --example compare_objectives -- [iters] [seeds...]

use duoseg::config::RunConfig;
use duoseg::experiment::{compare_objectives, ensure_dataset};

fn main() -> duoseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    if let Some(n) = args.next() {
        cfg.train.total_iters = n.parse().expect("iters");
    }
    let seeds: Vec<u64> = args.map(|s| s.parse().expect("seed")).collect();
    let seeds = if seeds.is_empty() { vec![0, 1, 2] } else { seeds };
    let manifest = ensure_dataset(&cfg, "runs/example_data".as_ref())?;
    let rows = compare_objectives(&manifest, &cfg, &seeds, Some("runs/example_compare".as_ref()), |l| println!("{l}"))?;
    let n = rows.len() as f64;
    let full = rows.iter().map(|r| r.full_dice).sum::<f64>() / n;
    let sup = rows.iter().map(|r| r.supervised_dice).sum::<f64>() / n;
    println!("mean over seeds: full {full:.2}, supervised {sup:.2}, gain {:+.2}", full - sup);
    Ok(())
}
