//! Build the student/teacher pair, run a forward pass, and round-trip a
//! checkpoint.

use duoseg::network::{build_dual, load_checkpoint, save_checkpoint, NetConfig};
use duoseg::tensor::Tensor;

fn main() -> duoseg::Result<()> {
    let dual = build_dual(NetConfig::student(), NetConfig::teacher(), 0)?;
    println!("student: {} parameters in {} tensors", dual.student.param_count(), dual.student.params().len());
    println!("teacher: {} parameters (residual blocks)", dual.teacher.param_count());

    let input = Tensor::new(&[1, 16, 16, 16], (0..4096).map(|i| ((i % 7) as f64 - 3.0) / 3.0).collect())?;
    let (logits, features) = dual.teacher.predict(&input)?;
    println!("logits {:?}, features {:?}", logits.shape(), features.shape());
    // the classifier starts at zero, so both classes are tied
    assert!(logits.data().iter().all(|&l| l == 0.0));

    // extents must be divisible by 2^(levels-1)
    println!("{}", dual.student.predict(&Tensor::zeros(&[1, 6, 8, 8])).unwrap_err());

    let dir = std::env::temp_dir().join("duoseg_networks_example");
    let path = save_checkpoint(&dual, &dir.join("init"))?;
    assert_eq!(load_checkpoint(&path)?, dual);
    println!("checkpoint round trip ok: {}", path.display());
    Ok(())
}
