//! Brute-force reference implementations and the suite comparing them with
//! the production code paths.

use super::CheckResult;
use crate::data::Volume;
use crate::error::Result;
use crate::losses::{build_pseudo_mask, IGNORE};
use crate::metrics::{overlap_metrics, surface_distances, BinaryMask};
use crate::network::{NetConfig, Network};
use crate::tensor::Tensor;
use crate::trainer::{sliding_window_logits, sliding_window_predict, Segmenter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pseudo-labels by sorting: entropy per voxel, the threshold read off the
/// sorted list by linear interpolation, argmax kept where entropy ≤ τ.
pub fn sort_threshold_mask(probs: &[f64], n: usize, keep_quantile: f64) -> Vec<u8> {
    let ent: Vec<f64> = (0..n)
        .map(|i| {
            let (p0, p1) = (probs[i], probs[n + i]);
            -(p0 * (p0 + 1e-12).log2() + p1 * (p1 + 1e-12).log2())
        })
        .collect();
    let mut sorted = ent.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = keep_quantile * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = if lo + 1 < n { lo + 1 } else { lo };
    let tau = sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]);
    (0..n)
        .map(|i| {
            if ent[i] <= tau {
                (probs[n + i] > probs[i]) as u8
            } else {
                IGNORE
            }
        })
        .collect()
}

/// Surface voxels by checking all six neighbours explicitly.
pub fn brute_surface(mask: &BinaryMask) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = mask.dims;
    let at = |x: isize, y: isize, z: isize| {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < nx
            && (y as usize) < ny
            && (z as usize) < nz
            && mask.get(x as usize, y as usize, z as usize)
    };
    let mut out = Vec::new();
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                if !mask.get(x, y, z) {
                    continue;
                }
                let (a, b, c) = (x as isize, y as isize, z as isize);
                let steps = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
                if steps.iter().any(|&(dx, dy, dz)| !at(a + dx, b + dy, c + dz)) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// All-pairs HD95 and ASD over both directed lists.
pub fn brute_surface_distances(pred: &BinaryMask, reference: &BinaryMask, spacing: [f64; 3]) -> (f64, f64) {
    let sp = brute_surface(pred);
    let sr = brute_surface(reference);
    let dist = |a: &[usize; 3], b: &[usize; 3]| {
        let d: Vec<f64> = (0..3).map(|k| (a[k] as f64 - b[k] as f64) * spacing[k]).collect();
        (d[0] * d[0] + (d[1] * d[1] + d[2] * d[2])).sqrt()
    };
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        from.iter()
            .map(|a| to.iter().map(|b| dist(a, b)).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let mut all = directed(&sp, &sr);
    all.extend(directed(&sr, &sp));
    let asd = all.iter().sum::<f64>() / all.len() as f64;
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = 0.95 * (all.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(all.len() - 1);
    (all[lo] + (pos - lo as f64) * (all[hi] - all[lo]), asd)
}

/// Per-voxel average over every window that contains the voxel, then a
/// softmax; windows are enumerated independently of the production tiler.
pub fn brute_sliding_window(seg: &impl Segmenter, v: &Volume, window: [usize; 3], stride: [usize; 3]) -> Result<Vec<f64>> {
    let dims = v.dims();
    let origins = |a: usize| {
        let mut o = Vec::new();
        let mut s = 0;
        while s + window[a] <= dims[a] {
            o.push(s);
            s += stride[a];
        }
        if !o.contains(&(dims[a] - window[a])) {
            o.push(dims[a] - window[a]);
        }
        o
    };
    let mut windows = Vec::new();
    for &ox in &origins(0) {
        for &oy in &origins(1) {
            for &oz in &origins(2) {
                let mut crop = Vec::new();
                for x in 0..window[0] {
                    for y in 0..window[1] {
                        for z in 0..window[2] {
                            crop.push(v.image.data()[((ox + x) * dims[1] + oy + y) * dims[2] + oz + z]);
                        }
                    }
                }
                let input = Tensor::new(&[1, window[0], window[1], window[2]], crop)?;
                windows.push(([ox, oy, oz], seg.logits(&input)?));
            }
        }
    }
    let n = dims.iter().product::<usize>();
    let mut probs = vec![0.0; 2 * n];
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let (mut l0, mut l1, mut k) = (0.0, 0.0, 0.0);
                for (o, t) in &windows {
                    let inside = [x, y, z].iter().zip(o).zip(&window).all(|((&p, &s), &w)| p >= s && p < s + w);
                    if inside {
                        let wn = window[0] * window[1] * window[2];
                        let j = ((x - o[0]) * window[1] + y - o[1]) * window[2] + z - o[2];
                        l0 += t.data()[j];
                        l1 += t.data()[wn + j];
                        k += 1.0;
                    }
                }
                let (a, b) = (l0 / k, l1 / k);
                let m = a.max(b);
                let (ea, eb) = ((a - m).exp(), (b - m).exp());
                let i = (x * dims[1] + y) * dims[2] + z;
                probs[i] = ea / (ea + eb);
                probs[n + i] = eb / (ea + eb);
            }
        }
    }
    Ok(probs)
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    let mut p = vec![0.0; 2 * n];
    for i in 0..n {
        let d: f64 = rng.gen_range(-scale..scale);
        let fg = 1.0 / (1.0 + (-d).exp());
        p[i] = 1.0 - fg;
        p[n + i] = fg;
    }
    p
}

/// Entropy filter against [`sort_threshold_mask`] on 100 random 8³ predictions.
pub fn mask_oracle(seed: u64) -> Vec<CheckResult> {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let dims = [8, 8, 8];
    let n = 512;
    let mut mismatches = 0;
    let mut fractions = Vec::new();
    for case in 0..100 {
        let probs = match case {
            // degenerate: exact one-hot everywhere
            0 => {
                let mut p = vec![0.0; 2 * n];
                for i in 0..n {
                    p[if rng.gen_bool(0.5) { n + i } else { i }] = 1.0;
                }
                p
            }
            _ => random_probs(rng, n, [0.5, 3.0, 12.0][case % 3]),
        };
        let t = Tensor::new(&[2, dims[0], dims[1], dims[2]], probs.clone()).expect("shape");
        let m = build_pseudo_mask(&t, 0.8).expect("mask");
        let oracle = sort_threshold_mask(&probs, n, 0.8);
        mismatches += m.labels.iter().zip(&oracle).filter(|(a, b)| a != b).count();
        if case != 0 {
            fractions.push(m.valid_fraction());
        } else if m.valid_count != n {
            mismatches += 1;
        }
    }
    let worst = fractions.iter().map(|f| (f - 0.8).abs()).fold(0.0, f64::max);
    vec![
        CheckResult::exact("entropy mask vs sort-threshold (100 x 8^3)", mismatches),
        CheckResult::within("valid fraction near 0.8", worst, 0.01),
    ]
}

fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> BinaryMask {
    loop {
        let n = dims.iter().product();
        let m = BinaryMask::new(dims, (0..n).map(|_| rng.gen_bool(density)).collect()).expect("dims");
        if m.count() > 0 {
            return m;
        }
    }
}

/// Surface distances against the all-pairs brute force, plus closed forms.
pub fn metric_oracle(seed: u64) -> Vec<CheckResult> {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..50 {
        let dims = [rng.gen_range(2..=12), rng.gen_range(2..=12), rng.gen_range(2..=12)];
        let density = rng.gen_range(0.05..0.6);
        let a = random_mask(rng, dims, density);
        let b = random_mask(rng, dims, density);
        let d = surface_distances(&a, &b, [1.0; 3]).expect("nonempty");
        let (h, s) = brute_surface_distances(&a, &b, [1.0; 3]);
        mismatches += (d.hd95 != h) as usize + (d.asd != s) as usize;
    }
    let one = |at: usize| {
        let mut m = BinaryMask::empty([5, 1, 1]);
        m.data[at] = true;
        m
    };
    let d = surface_distances(&one(0), &one(3), [1.0; 3]).expect("nonempty");
    let overlap_ok = {
        let p = BinaryMask::new([4, 1, 1], vec![true, true, false, false]).unwrap();
        let r = BinaryMask::new([4, 1, 1], vec![false, true, true, false]).unwrap();
        let (dice, jac) = overlap_metrics(&p, &r).unwrap();
        dice == 50.0 && (jac - 100.0 / 3.0).abs() < 1e-12
    };
    vec![
        CheckResult::exact("surface distances vs all-pairs (50 pairs <= 12^3)", mismatches),
        CheckResult::exact("single voxels 3 apart: hd95 = asd = 3", ((d.hd95, d.asd) != (3.0, 3.0)) as usize),
        CheckResult::exact("overlap closed form", (!overlap_ok) as usize),
    ]
}

pub fn window_oracle(seed: u64) -> Vec<CheckResult> {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mut st = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut net = Network::new(
        NetConfig {
            base_channels: 2,
            levels: 2,
            ..NetConfig::student()
        },
        &mut st,
    )
    .expect("net");
    for p in net.params_mut() {
        p.data_mut().iter_mut().for_each(|w| *w += st.gen_range(-0.2..0.2));
    }
    let dims = [12, 8, 16];
    let n = dims.iter().product();
    let image = Tensor::new(&dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape");
    let v = Volume::new("oracle", image, None, [1.0; 3]).expect("volume");
    let (window, stride) = ([8, 4, 8], [3, 2, 5]);
    let worst = match (sliding_window_predict(&net, &v, window, stride), brute_sliding_window(&net, &v, window, stride)) {
        (Ok(p), Ok(b)) => p.data().iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        _ => f64::NAN,
    };
    let tiled = sliding_window_logits(&net, &v, [4, 4, 4], [4, 4, 4]).map(|w| w.coverage.iter().filter(|&&c| c != 1).count());
    vec![
        CheckResult::within("sliding window vs per-voxel average", worst, 1e-9),
        CheckResult::exact("non-overlapping tiling covers once", tiled.unwrap_or(usize::MAX)),
    ]
}

/// Runs every brute-force equivalence check with fixed seeds.
pub fn oracle_suite() -> Vec<CheckResult> {
    let mut out = mask_oracle(7);
    out.extend(metric_oracle(8));
    out.extend(window_oracle(9));
    out
}
