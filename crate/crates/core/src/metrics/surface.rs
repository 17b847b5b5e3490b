use super::BinaryMask;
use crate::error::{Error, Result};
use crate::stats::quantile_linear;

/// Foreground voxels with at least one 6-neighbour that is background or
/// outside the grid.
pub fn extract_surface(mask: &BinaryMask) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = mask.dims;
    mask.coords()
        .filter(|&[x, y, z]| {
            x == 0
                || y == 0
                || z == 0
                || x + 1 == nx
                || y + 1 == ny
                || z + 1 == nz
                || !mask.get(x - 1, y, z)
                || !mask.get(x + 1, y, z)
                || !mask.get(x, y - 1, z)
                || !mask.get(x, y + 1, z)
                || !mask.get(x, y, z - 1)
                || !mask.get(x, y, z + 1)
        })
        .collect()
}

// Lower envelope of parabolas along one line (Felzenszwalb & Huttenlocher).
// `f` holds squared distances, infinite where no feature has reached yet;
// `w` is the physical length of one step along this axis.
fn edt_line(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, zb: &mut Vec<f64>) {
    v.clear();
    zb.clear();
    let pos = |i: usize| i as f64 * w;
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                zb.push(f64::NEG_INFINITY);
                break;
            };
            let s = ((fq + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= *zb.last().unwrap() {
                v.pop();
                zb.pop();
            } else {
                v.push(q);
                zb.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && zb[k + 1] < pos(q) {
            k += 1;
        }
        // tie-safe: choose the better of the two neighbouring parabolas
        let mut best = f64::INFINITY;
        for &p in &v[k..(k + 2).min(v.len())] {
            let d = (q as f64 - p as f64) * w;
            best = best.min(d * d + f[p]);
        }
        *o = best;
    }
}

/// Squared Euclidean distance from every voxel to the nearest of `points`.
fn squared_distance_field(dims: [usize; 3], points: &[[usize; 3]], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut field = vec![f64::INFINITY; nx * ny * nz];
    for &[x, y, z] in points {
        field[(x * ny + y) * nz + z] = 0.0;
    }
    let (mut v, mut zb) = (Vec::new(), Vec::new());
    let longest = nx.max(ny).max(nz);
    let (mut line, mut out) = (vec![0.0; longest], vec![0.0; longest]);
    // z, then y, then x; each pass adds one axis term in front of the others
    for x in 0..nx {
        for y in 0..ny {
            let base = (x * ny + y) * nz;
            line[..nz].copy_from_slice(&field[base..base + nz]);
            edt_line(&line[..nz], spacing[2], &mut out[..nz], &mut v, &mut zb);
            field[base..base + nz].copy_from_slice(&out[..nz]);
        }
    }
    for x in 0..nx {
        for z in 0..nz {
            for y in 0..ny {
                line[y] = field[(x * ny + y) * nz + z];
            }
            edt_line(&line[..ny], spacing[1], &mut out[..ny], &mut v, &mut zb);
            for y in 0..ny {
                field[(x * ny + y) * nz + z] = out[y];
            }
        }
    }
    for y in 0..ny {
        for z in 0..nz {
            for x in 0..nx {
                line[x] = field[(x * ny + y) * nz + z];
            }
            edt_line(&line[..nx], spacing[0], &mut out[..nx], &mut v, &mut zb);
            for x in 0..nx {
                field[(x * ny + y) * nz + z] = out[x];
            }
        }
    }
    field
}

/// Distances from each surface voxel of `from` to the surface of `to`,
/// in the order returned by [`extract_surface`].
pub fn directed_distances(from: &BinaryMask, to: &BinaryMask, spacing: [f64; 3]) -> Result<Vec<f64>> {
    check_pair(from, to)?;
    if !spacing_ok(&spacing) {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing:?}")));
    }
    let target = extract_surface(to);
    let field = squared_distance_field(to.dims, &target, spacing);
    let [_, ny, nz] = from.dims;
    Ok(extract_surface(from)
        .into_iter()
        .map(|[x, y, z]| field[(x * ny + y) * nz + z].sqrt())
        .collect())
}

fn check_pair(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::ShapeMismatch {
            op: "surface_distances",
            left: a.dims.to_vec(),
            right: b.dims.to_vec(),
        });
    }
    if a.count() == 0 || b.count() == 0 {
        return Err(Error::invalid(
            "surface distances are undefined for an empty mask; record a sentinel for this case",
        ));
    }
    Ok(())
}

fn spacing_ok(s: &[f64; 3]) -> bool {
    s.iter().all(|v| v.is_finite() && *v > 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceDistances {
    pub hd95: f64,
    pub asd: f64,
    /// Maximum of the combined list: the exact Hausdorff distance.
    pub hausdorff: f64,
}

/// HD95 and ASD over the concatenation of both directed distance lists.
pub fn surface_distances(pred: &BinaryMask, reference: &BinaryMask, spacing: [f64; 3]) -> Result<SurfaceDistances> {
    let mut all = directed_distances(pred, reference, spacing)?;
    all.extend(directed_distances(reference, pred, spacing)?);
    let hd95 = quantile_linear(&all, 0.95).expect("nonempty surfaces");
    let asd = all.iter().sum::<f64>() / all.len() as f64;
    let hausdorff = all.iter().cloned().fold(0.0, f64::max);
    Ok(SurfaceDistances { hd95, asd, hausdorff })
}
