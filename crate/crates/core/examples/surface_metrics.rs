//! Overlap and surface-distance metrics on two offset spheres.

use duoseg::metrics::{extract_surface, overlap_metrics, surface_distances, BinaryMask};

fn sphere(dims: [usize; 3], c: [f64; 3], r: f64) -> BinaryMask {
    let mut data = Vec::with_capacity(dims.iter().product());
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let d = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
                data.push(d.iter().map(|v| v * v).sum::<f64>() <= r * r);
            }
        }
    }
    BinaryMask::new(dims, data).unwrap()
}

fn main() -> duoseg::Result<()> {
    let dims = [24, 24, 24];
    let a = sphere(dims, [12.0, 12.0, 12.0], 6.0);
    let b = sphere(dims, [14.0, 12.0, 11.0], 5.5);
    let (dice, jaccard) = overlap_metrics(&a, &b)?;
    println!("|A| = {}, |B| = {}, surface |dA| = {}", a.count(), b.count(), extract_surface(&a).len());
    println!("dice {dice:.2}%  jaccard {jaccard:.2}%");
    let d = surface_distances(&a, &b, [1.0; 3])?;
    println!("hd95 {:.3}  asd {:.3}  hausdorff {:.3} (voxels)", d.hd95, d.asd, d.hausdorff);
    let mm = surface_distances(&a, &b, [0.625, 0.625, 1.25])?;
    println!("hd95 {:.3}  asd {:.3} (mm at 0.625 x 0.625 x 1.25)", mm.hd95, mm.asd);

    // An empty prediction has no surface: callers record a sentinel.
    println!("{}", surface_distances(&BinaryMask::empty(dims), &b, [1.0; 3]).unwrap_err());
    Ok(())
}
