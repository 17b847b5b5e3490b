use crate::data::Volume;
use crate::error::{Error, Result};
use crate::network::{DualNet, Network};
use crate::tensor::{Graph, Tensor};

/// Anything that maps a `[1, x, y, z]` input to `[C, x, y, z]` logits.
pub trait Segmenter {
    fn logits(&self, input: &Tensor) -> Result<Tensor>;
}

impl Segmenter for Network {
    fn logits(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.predict(input)?.0)
    }
}

/// Averages the logits of two networks.
#[derive(Clone, Copy)]
pub struct Ensemble<'a>(pub &'a Network, pub &'a Network);

impl<'a> From<&'a DualNet> for Ensemble<'a> {
    fn from(d: &'a DualNet) -> Self {
        Ensemble(&d.student, &d.teacher)
    }
}

impl Segmenter for Ensemble<'_> {
    fn logits(&self, input: &Tensor) -> Result<Tensor> {
        let a = self.0.logits(input)?;
        let b = self.1.logits(input)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| 0.5 * (x + y)).collect();
        Tensor::new(a.shape(), data)
    }
}

impl<F: Fn(&Tensor) -> Result<Tensor>> Segmenter for F {
    fn logits(&self, input: &Tensor) -> Result<Tensor> {
        self(input)
    }
}

/// Window origins along one axis: every `stride` from 0, plus a final
/// window flush with the end when the stride does not land there.
pub fn window_starts(extent: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    if window == 0 || window > extent {
        return Err(Error::invalid(format!("window {window} does not fit extent {extent}")));
    }
    if stride == 0 || stride > window {
        return Err(Error::invalid(format!("window stride {stride} must be in 1..={window} or voxels are skipped")));
    }
    let mut s: Vec<usize> = (0..=extent - window).step_by(stride).collect();
    if *s.last().unwrap() + window < extent {
        s.push(extent - window);
    }
    Ok(s)
}

/// Averaged logits and how many windows covered each voxel.
#[derive(Clone, Debug)]
pub struct WindowedLogits {
    /// `[C, X, Y, Z]`.
    pub logits: Tensor,
    /// `[X, Y, Z]`, every entry ≥ 1.
    pub coverage: Vec<u32>,
}

pub fn sliding_window_logits(
    seg: &impl Segmenter,
    v: &Volume,
    window: [usize; 3],
    stride: [usize; 3],
) -> Result<WindowedLogits> {
    let dims = v.dims();
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    let starts: Vec<Vec<usize>> = (0..3)
        .map(|a| window_starts(dims[a], window[a], stride[a]))
        .collect::<Result<_>>()?;
    let [wx, wy, wz] = window;
    let img = v.image.data();
    let mut sum: Vec<f64> = Vec::new();
    let mut classes = 0;
    let mut coverage = vec![0u32; n];
    for &ox in &starts[0] {
        for &oy in &starts[1] {
            for &oz in &starts[2] {
                let mut crop = Vec::with_capacity(wx * wy * wz);
                for x in 0..wx {
                    for y in 0..wy {
                        let row = ((ox + x) * ny + oy + y) * nz + oz;
                        crop.extend_from_slice(&img[row..row + wz]);
                    }
                }
                let out = seg.logits(&Tensor::new(&[1, wx, wy, wz], crop)?)?;
                let s = out.shape();
                if s.len() != 4 || s[1..] != window[..] {
                    return Err(Error::invalid(format!("segmenter returned {s:?} for window {window:?}")));
                }
                if sum.is_empty() {
                    classes = s[0];
                    sum = vec![0.0; classes * n];
                }
                let od = out.data();
                for c in 0..classes {
                    for x in 0..wx {
                        for y in 0..wy {
                            let src = ((c * wx + x) * wy + y) * wz;
                            let dst = ((c * nx + ox + x) * ny + oy + y) * nz + oz;
                            for (d, &l) in sum[dst..dst + wz].iter_mut().zip(&od[src..src + wz]) {
                                *d += l;
                            }
                        }
                    }
                }
                for x in 0..wx {
                    for y in 0..wy {
                        let dst = ((ox + x) * ny + oy + y) * nz + oz;
                        coverage[dst..dst + wz].iter_mut().for_each(|c| *c += 1);
                    }
                }
            }
        }
    }
    for c in 0..classes {
        for (s, &k) in sum[c * n..(c + 1) * n].iter_mut().zip(&coverage) {
            *s /= k as f64;
        }
    }
    Ok(WindowedLogits {
        logits: Tensor::new(&[classes, nx, ny, nz], sum)?,
        coverage,
    })
}

/// Sliding-window class probabilities `[C, X, Y, Z]`: logits averaged over
/// overlapping windows, then a softmax over classes.
pub fn sliding_window_predict(
    seg: &impl Segmenter,
    v: &Volume,
    window: [usize; 3],
    stride: [usize; 3],
) -> Result<Tensor> {
    let w = sliding_window_logits(seg, v, window, stride)?;
    let mut g = Graph::new();
    let l = g.constant(w.logits);
    let p = g.softmax(l, 0)?;
    Ok(g.value(p))
}
