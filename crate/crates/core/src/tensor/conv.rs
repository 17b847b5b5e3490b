// Direct 3-D convolution kernels over channel-major buffers.
//
// Layouts: input [ci, x, y, z], kernel [co, ci, k, k, k], output
// [co, ox, oy, oz], all row-major with z fastest. Both passes unfold the
// input into columns and hand the contraction to a GEMM.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub ci: usize,
    pub co: usize,
    pub inp: [usize; 3],
    pub out: [usize; 3],
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Output extent along one axis: `floor((ext + 2·pad − k)/stride) + 1`, or
/// `None` when no kernel placement fits.
pub fn conv_output_extent(ext: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || ext + 2 * pad < k {
        return None;
    }
    Some((ext + 2 * pad - k) / stride + 1)
}

impl ConvGeom {
    /// Output positions `p` in `[lo, hi)` along an axis for which
    /// `p·stride + offset − pad` lands inside `[0, ext)`.
    #[inline]
    fn valid_range(&self, offset: usize, ext: usize, out_ext: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let shift = offset as isize - self.pad as isize;
        // smallest p with p*s + shift >= 0
        let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
        // largest p with p*s + shift <= ext-1
        let top = ext as isize - 1 - shift;
        let hi = if top < 0 { 0 } else { top / s + 1 };
        let lo = lo.max(0) as usize;
        let hi = (hi as usize).min(out_ext);
        (lo, hi.max(lo))
    }

    fn ranges(&self) -> Vec<[(usize, usize); 3]> {
        let k = self.k;
        let mut v = Vec::with_capacity(k * k * k);
        for kx in 0..k {
            for ky in 0..k {
                for kz in 0..k {
                    v.push([
                        self.valid_range(kx, self.inp[0], self.out[0]),
                        self.valid_range(ky, self.inp[1], self.out[1]),
                        self.valid_range(kz, self.inp[2], self.out[2]),
                    ]);
                }
            }
        }
        v
    }
}

// Unfolds the input into a `[ci·k³, on]` column matrix; out-of-range taps
// stay zero.
fn im2col(g: &ConvGeom, input: &[f64], ranges: &[[(usize, usize); 3]]) -> Vec<f64> {
    let [_, y, z] = g.inp;
    let [_, oy, oz] = g.out;
    let k = g.k;
    let k3 = k * k * k;
    let on = g.out.iter().product::<usize>();
    let s = g.stride;
    let mut col = vec![0.0; g.ci * k3 * on];
    for c in 0..g.ci {
        let in_c = &input[c * g.inp.iter().product::<usize>()..];
        for (ki, r) in ranges.iter().enumerate() {
            let (kx, ky, kz) = (ki / (k * k), (ki / k) % k, ki % k);
            let dst = &mut col[(c * k3 + ki) * on..(c * k3 + ki + 1) * on];
            let (lo, hi) = r[2];
            for px in r[0].0..r[0].1 {
                let ix = px * s + kx - g.pad;
                for py in r[1].0..r[1].1 {
                    let iy = py * s + ky - g.pad;
                    let row = (ix * y + iy) * z;
                    let out_row = &mut dst[(px * oy + py) * oz..(px * oy + py + 1) * oz];
                    for pz in lo..hi {
                        out_row[pz] = in_c[row + pz * s + kz - g.pad];
                    }
                }
            }
        }
    }
    col
}

// Inverse scatter of `im2col`: accumulates column gradients into `gin`.
fn col2im(g: &ConvGeom, col: &[f64], gin: &mut [f64], ranges: &[[(usize, usize); 3]]) {
    let [_, y, z] = g.inp;
    let [_, oy, oz] = g.out;
    let k = g.k;
    let k3 = k * k * k;
    let on = g.out.iter().product::<usize>();
    let n_in = g.inp.iter().product::<usize>();
    let s = g.stride;
    for c in 0..g.ci {
        let gin_c = &mut gin[c * n_in..(c + 1) * n_in];
        for (ki, r) in ranges.iter().enumerate() {
            let (kx, ky, kz) = (ki / (k * k), (ki / k) % k, ki % k);
            let src = &col[(c * k3 + ki) * on..(c * k3 + ki + 1) * on];
            let (lo, hi) = r[2];
            for px in r[0].0..r[0].1 {
                let ix = px * s + kx - g.pad;
                for py in r[1].0..r[1].1 {
                    let iy = py * s + ky - g.pad;
                    let row = (ix * y + iy) * z;
                    let src_row = &src[(px * oy + py) * oz..(px * oy + py + 1) * oz];
                    for pz in lo..hi {
                        gin_c[row + pz * s + kz - g.pad] += src_row[pz];
                    }
                }
            }
        }
    }
}

/// `c[m×n] = beta·c + a[m×k]·b[k×n]` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, kk: usize, n: usize, a: &[f64], ars: isize, acs: isize, b: &[f64], brs: isize, bcs: isize, beta: f64, c: &mut [f64]) {
    // SAFETY: every operand slice covers the extent implied by its shape and
    // strides; callers build them from the same geometry.
    unsafe {
        matrixmultiply::dgemm(
            m,
            kk,
            n,
            1.0,
            a.as_ptr(),
            ars,
            acs,
            b.as_ptr(),
            brs,
            bcs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn forward(g: &ConvGeom, input: &[f64], kernel: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let ranges = g.ranges();
    let col = im2col(g, input, &ranges);
    let on = g.out.iter().product::<usize>();
    let kk = g.ci * g.k * g.k * g.k;
    let mut out = vec![0.0; g.co * on];
    if let Some(b) = bias {
        for (o, chunk) in out.chunks_mut(on).enumerate() {
            chunk.iter_mut().for_each(|v| *v = b[o]);
        }
    }
    gemm(g.co, kk, on, kernel, kk as isize, 1, &col, on as isize, 1, 1.0, &mut out);
    out
}

/// Accumulates input, kernel, and bias gradients for upstream `gout`.
pub(crate) fn backward(
    g: &ConvGeom,
    input: &[f64],
    kernel: &[f64],
    gout: &[f64],
    gin: Option<&mut [f64]>,
    gker: Option<&mut [f64]>,
    gbias: Option<&mut [f64]>,
) {
    let ranges = g.ranges();
    let on = g.out.iter().product::<usize>();
    let kk = g.ci * g.k * g.k * g.k;
    if let Some(gb) = gbias {
        for (o, chunk) in gout.chunks(on).enumerate() {
            gb[o] += chunk.iter().sum::<f64>();
        }
    }
    if let Some(gk) = gker {
        let col = im2col(g, input, &ranges);
        // gker[co×kk] += gout[co×on] · colᵀ
        gemm(g.co, on, kk, gout, on as isize, 1, &col, 1, on as isize, 1.0, gk);
    }
    if let Some(gi) = gin {
        let mut gcol = vec![0.0; kk * on];
        // gcol[kk×on] = kernelᵀ · gout
        gemm(kk, g.co, on, kernel, 1, kk as isize, gout, on as isize, 1, 0.0, &mut gcol);
        col2im(g, &gcol, gi, &ranges);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(g: &ConvGeom, input: &[f64], kernel: &[f64]) -> Vec<f64> {
        let [x, y, z] = g.inp;
        let [ox, oy, oz] = g.out;
        let k = g.k;
        let mut out = vec![0.0; g.co * ox * oy * oz];
        for o in 0..g.co {
            for px in 0..ox {
                for py in 0..oy {
                    for pz in 0..oz {
                        let mut acc = 0.0;
                        for c in 0..g.ci {
                            for kx in 0..k {
                                for ky in 0..k {
                                    for kz in 0..k {
                                        let ix = (px * g.stride + kx) as isize - g.pad as isize;
                                        let iy = (py * g.stride + ky) as isize - g.pad as isize;
                                        let iz = (pz * g.stride + kz) as isize - g.pad as isize;
                                        if ix < 0 || iy < 0 || iz < 0 {
                                            continue;
                                        }
                                        let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
                                        if ix >= x || iy >= y || iz >= z {
                                            continue;
                                        }
                                        acc += input[((c * x + ix) * y + iy) * z + iz]
                                            * kernel[(((o * g.ci + c) * k + kx) * k + ky) * k + kz];
                                    }
                                }
                            }
                        }
                        out[((o * ox + px) * oy + py) * oz + pz] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_loops() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(ext, stride, pad, k) in &[(5, 1, 1, 3), (6, 2, 1, 3), (4, 1, 0, 3), (7, 2, 0, 1), (4, 3, 2, 3)] {
            let inp = [ext, ext + 1, ext - 1];
            let out = [
                conv_output_extent(inp[0], k, stride, pad).unwrap(),
                conv_output_extent(inp[1], k, stride, pad).unwrap(),
                conv_output_extent(inp[2], k, stride, pad).unwrap(),
            ];
            let g = ConvGeom { ci: 2, co: 3, inp, out, k, stride, pad };
            let input: Vec<f64> = (0..2 * inp.iter().product::<usize>()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let kernel: Vec<f64> = (0..3 * 2 * k * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = forward(&g, &input, &kernel, None);
            let b = naive(&g, &input, &kernel);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12, "{u} vs {v} for {g:?}");
            }
        }
    }

    #[test]
    fn output_extent_formula() {
        assert_eq!(conv_output_extent(16, 3, 2, 1), Some(8));
        assert_eq!(conv_output_extent(3, 3, 1, 1), Some(3));
        assert_eq!(conv_output_extent(1, 3, 1, 0), None);
    }
}
