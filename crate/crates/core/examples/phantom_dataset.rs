//! Generate a phantom dataset, read a volume back bit-exactly, and split
//! the ids into cross-validation folds.
//!
//!     cargo run --release --example phantom_dataset -- [out_dir]

use duoseg::data::{generate_dataset, generate_phantom, kfold_split, normalize, random_crop, DatasetManifest, PhantomSpec};
use rand::SeedableRng;

fn main() -> duoseg::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/example_data".into());
    let dir = std::path::Path::new(&out);
    let spec = PhantomSpec::default();
    let m = generate_dataset(dir, &spec, 20)?;
    println!("wrote {} volumes under {}", m.volumes.len(), dir.display());

    let loaded = DatasetManifest::load(&dir.join("manifest.json"))?;
    let v = loaded.read("phantom-0003")?;
    assert_eq!(v, generate_phantom(&PhantomSpec { seed: 3, ..spec })?);
    let fg = v.label.as_ref().unwrap().data().iter().sum::<f64>() / v.image.numel() as f64;
    println!("phantom-0003: dims {:?}, foreground fraction {fg:.3}", v.dims());

    let n = normalize(&v)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let crop = random_crop(&n, [16, 16, 16], &mut rng)?;
    println!("normalised and cropped to {:?}", crop.dims());

    for (i, f) in kfold_split(&loaded.ids(), 5, 0, 0.1)?.iter().enumerate() {
        println!("fold {i}: labeled {:?}, {} unlabeled, test {:?}", f.labeled, f.unlabeled.len(), f.test);
    }
    Ok(())
}
