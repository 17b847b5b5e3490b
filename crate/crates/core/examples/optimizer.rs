//! The step-decay learning rate and a hand-checkable momentum trace.

use duoseg::tensor::Tensor;
use duoseg::trainer::{learning_rate_at, sgd_update, TrainConfig};

fn main() -> duoseg::Result<()> {
    let long = TrainConfig {
        total_iters: 6000,
        decay_every: 2500,
        ..TrainConfig::default()
    };
    for t in [0, 2499, 2500, 4999, 5000, 5999] {
        println!("lr({t}) = {}", learning_rate_at(t, &long));
    }

    let mut p = vec![Tensor::from_vec(vec![1.0])];
    let mut v = vec![vec![0.0]];
    for step in 1..=3 {
        sgd_update(&mut p, &[vec![1.0]], &mut v, 0.1, 0.9, 0.0)?;
        println!("step {step}: v = {:.4}, p = {:.4}", v[0][0], p[0].data()[0]);
    }
    Ok(())
}
