use super::BinaryMask;
use crate::error::{Error, Result};

/// Dice `2|P∩R|/(|P|+|R|)` and Jaccard `|P∩R|/|P∪R|`, in percent.
///
/// Two empty masks agree perfectly (100, 100).
pub fn overlap_metrics(pred: &BinaryMask, reference: &BinaryMask) -> Result<(f64, f64)> {
    if pred.dims != reference.dims {
        return Err(Error::ShapeMismatch {
            op: "overlap_metrics",
            left: pred.dims.to_vec(),
            right: reference.dims.to_vec(),
        });
    }
    let (mut inter, mut p, mut r) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data.iter().zip(&reference.data) {
        inter += (a && b) as usize;
        p += a as usize;
        r += b as usize;
    }
    if p + r == 0 {
        return Ok((100.0, 100.0));
    }
    let union = p + r - inter;
    Ok((
        100.0 * 2.0 * inter as f64 / (p + r) as f64,
        100.0 * inter as f64 / union as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask::new([bits.len(), 1, 1], bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn closed_form_cases() {
        assert_eq!(overlap_metrics(&mask(&[1, 1, 0]), &mask(&[1, 1, 0])).unwrap(), (100.0, 100.0));
        assert_eq!(overlap_metrics(&mask(&[1, 0, 0]), &mask(&[0, 1, 0])).unwrap(), (0.0, 0.0));
        let (d, j) = overlap_metrics(&mask(&[1, 1, 0]), &mask(&[0, 1, 1])).unwrap();
        assert_eq!(d, 50.0);
        assert!((j - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(overlap_metrics(&mask(&[0, 0]), &mask(&[0, 0])).unwrap(), (100.0, 100.0));
        assert_eq!(overlap_metrics(&mask(&[0, 0]), &mask(&[0, 1])).unwrap(), (0.0, 0.0));
        assert!(overlap_metrics(&mask(&[0, 0]), &mask(&[0, 1, 1])).is_err());
    }
}
