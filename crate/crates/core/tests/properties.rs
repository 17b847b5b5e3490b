use duoseg::data::{kfold_split, normalize, read_volume, write_volume, Volume};
use duoseg::losses::*;
use duoseg::metrics::{overlap_metrics, surface_distances, BinaryMask};
use duoseg::tensor::{Graph, Tensor};
use duoseg::trainer::{learning_rate_at, sliding_window_logits, window_starts, TrainConfig};
use duoseg::verify::oracles::{brute_surface_distances, sort_threshold_mask};
use proptest::prelude::*;
use std::collections::HashSet;

const DIMS: [usize; 3] = [3, 2, 4];
const N: usize = 24;

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0f64..6.0, 2 * N)
}

fn tensor(d: Vec<f64>) -> Tensor {
    Tensor::new(&[2, DIMS[0], DIMS[1], DIMS[2]], d).unwrap()
}

fn probs(g: &mut Graph, d: Vec<f64>) -> duoseg::tensor::Var {
    let v = g.constant(tensor(d));
    g.softmax(v, 0).unwrap()
}

fn mask_strategy(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max, 1..=max, 0.05f64..0.7, any::<u64>()).prop_map(|(x, y, z, p, seed)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut data: Vec<bool> = (0..x * y * z).map(|_| rng.gen_bool(p)).collect();
        data[0] = true;
        BinaryMask::new([x, y, z], data).unwrap()
    })
}

fn pair_strategy(max: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    mask_strategy(max).prop_flat_map(|a| {
        let dims = a.dims;
        let n = dims.iter().product::<usize>();
        (Just(a), prop::collection::vec(any::<bool>(), n)).prop_map(move |(a, mut bits)| {
            bits[n - 1] = true;
            (a, BinaryMask::new(dims, bits).unwrap())
        })
    })
}

proptest! {
    #[test]
    fn supervised_loss_is_nonnegative(l in logits(), lab in prop::collection::vec(0u8..2, N)) {
        let mut g = Graph::new();
        let v = g.constant(tensor(l));
        let label = Tensor::new(&DIMS, lab.into_iter().map(f64::from).collect()).unwrap();
        let s = supervised_loss(&mut g, v, &label).unwrap();
        prop_assert!(g.item(s).unwrap() >= 0.0);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_identity(a in logits(), b in logits()) {
        let mut g = Graph::new();
        let pa = probs(&mut g, a);
        let pb = probs(&mut g, b);
        let kl = kl_divergence(&mut g, pa, pb).unwrap();
        prop_assert!(g.data(kl).iter().all(|&v| v >= -1e-15));
        let same = kl_divergence(&mut g, pa, pa).unwrap();
        prop_assert!(g.data(same).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn consistency_is_bounded(a in logits(), b in logits()) {
        let mut g = Graph::new();
        let pa = probs(&mut g, a);
        let pb = probs(&mut g, b);
        let c = consistency_regularization(&mut g, pa, pb).unwrap();
        let v = g.item(c).unwrap();
        prop_assert!((0.0..=2.0).contains(&v), "{v}");
        let z = consistency_regularization(&mut g, pa, pa).unwrap();
        prop_assert!(g.item(z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn uncertainty_loss_is_nonnegative(a in logits(), b in logits(), t in 0.1f64..2.0) {
        let mut g = Graph::new();
        let va = g.constant(tensor(a));
        let vb = g.constant(tensor(b));
        let u = uncertainty_weighted_loss(&mut g, va, vb, t).unwrap();
        prop_assert!(g.item(u).unwrap() >= 0.0);
    }

    #[test]
    fn pseudo_loss_ignores_filtered_logits(l in logits(), p in logits(), noise in logits(), q in 0.3f64..0.95) {
        let mut g = Graph::new();
        let pv = probs(&mut g, p);
        let mask = build_pseudo_mask(&g.value(pv), q).unwrap();
        let mut perturbed = l.clone();
        for i in 0..N {
            if !mask.is_valid(i) {
                perturbed[i] = noise[i];
                perturbed[N + i] = noise[N + i];
            }
        }
        let a = g.constant(tensor(l));
        let b = g.constant(tensor(perturbed));
        let la = pseudo_supervised_loss(&mut g, a, &mask).unwrap();
        let lb = pseudo_supervised_loss(&mut g, b, &mask).unwrap();
        prop_assert!(g.item(la).unwrap() >= 0.0);
        prop_assert_eq!(g.item(la).unwrap(), g.item(lb).unwrap());
    }

    #[test]
    fn pseudo_mask_matches_oracle(p in logits(), q in 0.05f64..1.0) {
        let mut g = Graph::new();
        let pv = probs(&mut g, p);
        let t = g.value(pv);
        let mask = build_pseudo_mask(&t, q).unwrap();
        prop_assert_eq!(mask.labels, sort_threshold_mask(t.data(), N, q));
        prop_assert!(mask.valid_count >= 1);
    }

    #[test]
    fn contrastive_modes_are_nonnegative(f in prop::collection::vec(-1.0f64..1.0, 3 * N), p in logits()) {
        let mut g = Graph::new();
        let pv = probs(&mut g, p);
        let mask = build_pseudo_mask(&g.value(pv), 0.6).unwrap();
        let fv = g.constant(Tensor::new(&[3, DIMS[0], DIMS[1], DIMS[2]], f).unwrap());
        let e = normalize_embeddings(&mut g, fv).unwrap();
        let protos = compute_prototypes(&g.value(e), &mask).unwrap();
        for mode in [ContrastiveMode::Additive, ContrastiveMode::Margin] {
            let c = contrastive_loss(&mut g, e, &mask, &protos, mode).unwrap();
            prop_assert!(g.item(c.loss).unwrap() >= 0.0);
        }
    }

    #[test]
    fn lambda_is_nonincreasing(t_max in 1usize..5000) {
        let mut prev = f64::INFINITY;
        for t in (0..=t_max).step_by((t_max / 50).max(1)) {
            let l = lambda_schedule(t, t_max).unwrap();
            prop_assert!(l <= prev && l >= 0.1);
            prev = l;
        }
    }

    #[test]
    fn learning_rate_steps_only_at_boundaries(every in 1usize..400, t in 0usize..3000) {
        // past ~300 decays the rate underflows to zero and stops changing
        prop_assume!(t / every < 300);
        let cfg = TrainConfig { decay_every: every, ..TrainConfig::default() };
        let (a, b) = (learning_rate_at(t, &cfg), learning_rate_at(t + 1, &cfg));
        prop_assert!(b <= a);
        prop_assert_eq!(a != b, (t + 1) % every == 0);
    }

    #[test]
    fn overlap_is_symmetric_and_ordered((a, b) in pair_strategy(8)) {
        let (d1, j1) = overlap_metrics(&a, &b).unwrap();
        let (d2, j2) = overlap_metrics(&b, &a).unwrap();
        prop_assert_eq!((d1, j1), (d2, j2));
        prop_assert!((0.0..=100.0).contains(&d1) && j1 <= d1);
        if d1 > 0.0 && d1 < 100.0 {
            prop_assert!(j1 < d1);
        }
    }

    #[test]
    fn surface_distances_match_brute_force((a, b) in pair_strategy(12)) {
        let d = surface_distances(&a, &b, [1.0; 3]).unwrap();
        let (h, s) = brute_surface_distances(&a, &b, [1.0; 3]);
        prop_assert_eq!((d.hd95, d.asd), (h, s));
        let r = surface_distances(&b, &a, [1.0; 3]).unwrap();
        prop_assert_eq!(d.hd95, r.hd95);
        prop_assert!(d.hd95 <= d.hausdorff && d.asd >= 0.0);
    }

    #[test]
    fn metrics_are_translation_invariant((a, b) in pair_strategy(6), off in (0usize..3, 0usize..3, 0usize..3)) {
        let shift = |m: &BinaryMask| {
            let [x, y, z] = m.dims;
            let dims = [x + 3, y + 3, z + 3];
            let mut out = BinaryMask::empty(dims);
            for [i, j, k] in m.coords() {
                out.data[((i + off.0) * dims[1] + j + off.1) * dims[2] + k + off.2] = true;
            }
            out
        };
        let (sa, sb) = (shift(&a), shift(&b));
        prop_assert_eq!(overlap_metrics(&a, &b).unwrap(), overlap_metrics(&sa, &sb).unwrap());
        let d0 = surface_distances(&a, &b, [1.0; 3]).unwrap();
        let d1 = surface_distances(&sa, &sb, [1.0; 3]).unwrap();
        // the grid border counts as surface, so only masks clear of it keep
        // the same surface after padding
        let touches = |m: &BinaryMask| m.coords().any(|c| c.iter().zip(&m.dims).any(|(&v, &d)| v == 0 || v + 1 == d));
        if !touches(&a) && !touches(&b) {
            prop_assert_eq!((d0.hd95, d0.asd), (d1.hd95, d1.asd));
        }
    }

    #[test]
    fn kfold_is_a_partition(n in 2usize..100, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let folds = kfold_split(&ids, k, seed, 0.25).unwrap();
        let mut seen = HashSet::new();
        for f in &folds {
            for id in &f.test {
                prop_assert!(seen.insert(id.clone()));
            }
            let train: HashSet<_> = f.train().cloned().collect();
            prop_assert!(f.test.iter().all(|t| !train.contains(t)));
            prop_assert_eq!(train.len() + f.test.len(), n);
        }
        prop_assert_eq!(seen.len(), n);
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn normalize_is_idempotent(d in prop::collection::vec(-50.0f64..50.0, 64)) {
        prop_assume!(d.iter().any(|&v| (v - d[0]).abs() > 1e-3));
        let v = Volume::new("p", Tensor::new(&[4, 4, 4], d).unwrap(), None, [1.0; 3]).unwrap();
        let a = normalize(&v).unwrap();
        let b = normalize(&a).unwrap();
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn volume_round_trip_is_bit_exact(d in prop::collection::vec(any::<f64>(), 32), labeled in any::<bool>()) {
        let label = labeled.then(|| Tensor::new(&[2, 4, 4], (0..32).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap());
        let v = Volume::new("rt", Tensor::new(&[2, 4, 4], d).unwrap(), label, [0.5, 1.0, 2.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.json");
        write_volume(&v, &p).unwrap();
        let r = read_volume(&p).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&r.image), bits(&v.image));
        prop_assert_eq!(r.label, v.label);
    }

    #[test]
    fn stride_beyond_window_is_rejected(w in 1usize..6, extra in 1usize..4) {
        prop_assert!(window_starts(16, w, w + extra).is_err());
    }

    #[test]
    fn sliding_window_covers_every_voxel(
        ext in (4usize..20, 4usize..20, 4usize..20),
        win in (1usize..8, 1usize..8, 1usize..8),
        stride in (1usize..9, 1usize..9, 1usize..9),
    ) {
        let dims = [ext.0, ext.1, ext.2];
        let window = [win.0.min(ext.0), win.1.min(ext.1), win.2.min(ext.2)];
        let stride = [stride.0.min(window[0]), stride.1.min(window[1]), stride.2.min(window[2])];
        let n = dims.iter().product();
        let v = Volume::new("w", Tensor::new(&dims, (0..n).map(|i| i as f64).collect()).unwrap(), None, [1.0; 3]).unwrap();
        let constant = |t: &Tensor| {
            let s = t.shape();
            Tensor::new(&[2, s[1], s[2], s[3]], vec![0.5; 2 * t.numel()])
        };
        let w = sliding_window_logits(&constant, &v, window, stride).unwrap();
        prop_assert!(w.coverage.iter().all(|&c| c >= 1));
        prop_assert!(w.logits.data().iter().all(|&l| (l - 0.5).abs() < 1e-12));
        for a in 0..3 {
            let s = window_starts(dims[a], window[a], stride[a]).unwrap();
            prop_assert_eq!(*s.last().unwrap() + window[a], dims[a]);
        }
    }
}
