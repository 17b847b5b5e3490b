use super::Volume;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Standardises the image to zero mean and unit (population) variance.
pub fn normalize(v: &Volume) -> Result<Volume> {
    let d = v.image.data();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::invalid(format!("cannot normalize constant volume {}", v.id)));
    }
    let sd = var.sqrt();
    let image = Tensor::new(v.image.shape(), d.iter().map(|x| (x - mean) / sd).collect())?;
    Ok(Volume {
        image,
        ..v.clone()
    })
}

fn crop_tensor(t: &Tensor, dims: [usize; 3], off: [usize; 3], c: [usize; 3]) -> Tensor {
    let src = t.data();
    let mut out = Vec::with_capacity(c[0] * c[1] * c[2]);
    for x in 0..c[0] {
        for y in 0..c[1] {
            let row = ((x + off[0]) * dims[1] + y + off[1]) * dims[2] + off[2];
            out.extend_from_slice(&src[row..row + c[2]]);
        }
    }
    Tensor::new(&c, out).expect("crop extents")
}

/// Crops image and label with one uniformly drawn offset.
pub fn random_crop(v: &Volume, crop: [usize; 3], rng: &mut impl Rng) -> Result<Volume> {
    let dims = v.dims();
    if crop.iter().zip(&dims).any(|(c, d)| c > d) {
        return Err(Error::invalid(format!("crop {crop:?} larger than volume {dims:?}")));
    }
    if crop.iter().any(|&c| c == 0 || c % 4 != 0) {
        return Err(Error::invalid(format!("crop extents {crop:?} must be positive multiples of 4")));
    }
    let off = [0, 1, 2].map(|a| rng.gen_range(0..=dims[a] - crop[a]));
    Ok(Volume {
        id: v.id.clone(),
        image: crop_tensor(&v.image, dims, off, crop),
        label: v.label.as_ref().map(|l| crop_tensor(l, dims, off, crop)),
        spacing: v.spacing,
    })
}
