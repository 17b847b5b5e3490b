use super::CheckResult;
use crate::error::Result;
use crate::losses::{
    build_pseudo_mask, compute_prototypes, consistency_regularization, contrastive_loss, kl_divergence, lambda_schedule,
    normalize_embeddings, pseudo_supervised_loss, supervised_loss, uncertainty_weighted_loss, ContrastiveMode,
    PseudoLabelMask, PrototypeSet, ENTROPY_EPS,
};
use crate::network::{NetConfig, Network};
use crate::tensor::{gradient_check, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const GRADIENT_STEP: f64 = 1e-5;
/// Largest accepted relative error.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

const DIMS: [usize; 3] = [3, 3, 2];
const FEATURES: usize = 3;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).expect("shape")
}

fn logits_shape() -> [usize; 4] {
    [2, DIMS[0], DIMS[1], DIMS[2]]
}

fn probs_of(logits: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let l = g.constant(logits.clone());
    let p = g.softmax(l, 0).expect("softmax");
    g.value(p)
}

fn random_label(rng: &mut ChaCha8Rng) -> Tensor {
    let n = DIMS.iter().product();
    Tensor::new(&DIMS, (0..n).map(|_| rng.gen_range(0..2) as f64).collect()).expect("label")
}

// Mask with a guaranteed mix of both classes and some ignored voxels.
fn random_mask(rng: &mut ChaCha8Rng) -> PseudoLabelMask {
    loop {
        let m = build_pseudo_mask(&probs_of(&random(rng, &logits_shape(), 3.0)), 0.6).expect("mask");
        let fg = m.labels.iter().filter(|&&l| l == 1).count();
        let bg = m.labels.iter().filter(|&&l| l == 0).count();
        if fg > 0 && bg > 0 && m.valid_count < m.len() {
            return m;
        }
    }
}

fn fixed_prototypes(rng: &mut ChaCha8Rng, mask: &PseudoLabelMask) -> PrototypeSet {
    let f = random(rng, &[FEATURES, DIMS[0], DIMS[1], DIMS[2]], 1.0);
    let mut g = Graph::new();
    let v = g.constant(f);
    let e = normalize_embeddings(&mut g, v).expect("normalize");
    compute_prototypes(&g.value(e), mask).expect("prototypes")
}

fn entropy_sum(g: &mut Graph, logits: Var) -> Result<Var> {
    let p = g.softmax(logits, 0)?;
    let shifted = g.add_scalar(p, ENTROPY_EPS);
    let lg = g.log2(shifted);
    let prod = g.mul(p, lg)?;
    let s = g.sum(prod, None)?;
    Ok(g.neg(s))
}

// Splits a stacked `[k, ...]` leaf into its k slices.
fn slices(g: &mut Graph, x: Var) -> Result<Vec<Var>> {
    (0..g.shape(x)[0]).map(|i| g.select(x, i)).collect()
}

fn run(name: &str, check: impl FnOnce() -> Result<f64>) -> CheckResult {
    match check() {
        Ok(e) => CheckResult::within(name, e, GRADIENT_TOLERANCE),
        Err(e) => CheckResult::failed(name, &e.to_string()),
    }
}

/// Runs every gradient check with fixed seeds.
pub fn gradient_suite() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240917);
    let h = GRADIENT_STEP;
    let ls = logits_shape();
    let mut out = Vec::new();

    let label = random_label(&mut rng);
    let x = random(&mut rng, &ls, 2.0);
    out.push(run("supervised (CE + soft Dice)", || {
        gradient_check(|g, v| supervised_loss(g, v, &label), &x, h)
    }));

    let x = random(&mut rng, &ls, 2.0);
    out.push(run("voxel entropy", || gradient_check(entropy_sum, &x, h)));

    let mask = random_mask(&mut rng);
    let x = random(&mut rng, &ls, 2.0);
    out.push(run("pseudo-supervised CE", || {
        gradient_check(|g, v| pseudo_supervised_loss(g, v, &mask), &x, h)
    }));

    let x = random(&mut rng, &[2, ls[0], ls[1], ls[2], ls[3]], 2.0);
    out.push(run("consistency (1 - cosine)", || {
        gradient_check(
            |g, v| {
                let p = slices(g, v)?;
                let ps = g.softmax(p[0], 0)?;
                let pt = g.softmax(p[1], 0)?;
                consistency_regularization(g, ps, pt)
            },
            &x,
            h,
        )
    }));
    out.push(run("KL divergence", || {
        gradient_check(
            |g, v| {
                let p = slices(g, v)?;
                let ps = g.softmax(p[0], 0)?;
                let pt = g.softmax(p[1], 0)?;
                let kl = kl_divergence(g, ps, pt)?;
                g.sum(kl, None)
            },
            &x,
            h,
        )
    }));

    let teacher = random(&mut rng, &ls, 2.0);
    let x = random(&mut rng, &ls, 2.0);
    out.push(run("uncertainty-weighted distillation", || {
        gradient_check(
            |g, v| {
                let t = g.constant(teacher.clone());
                uncertainty_weighted_loss(g, v, t, 0.5)
            },
            &x,
            h,
        )
    }));

    let mask = random_mask(&mut rng);
    let protos = fixed_prototypes(&mut rng, &mask);
    let x = random(&mut rng, &[FEATURES, DIMS[0], DIMS[1], DIMS[2]], 1.0);
    for (mode, name) in [
        (ContrastiveMode::Additive, "prototype contrastive (additive)"),
        (ContrastiveMode::Margin, "prototype contrastive (margin)"),
    ] {
        out.push(run(name, || {
            gradient_check(
                |g, v| {
                    let e = normalize_embeddings(g, v)?;
                    Ok(contrastive_loss(g, e, &mask, &protos, mode)?.loss)
                },
                &x,
                h,
            )
        }));
    }

    out.push(run("composite objective", || composite_check(&mut rng)));
    for (cfg, name) in [
        (probe_config(false), "network parameters (plain blocks)"),
        (probe_config(true), "network parameters (residual blocks)"),
    ] {
        out.push(run(name, || network_check(cfg, &mut rng)));
    }
    out
}

// Every term of the objective, weighted as in training, over one stacked
// leaf `[5, 2, X, Y, Z]`: student/teacher logits on the labeled crop, then
// on the unlabeled crop, then student features (first two channels used as
// a 2-D embedding). Masks and prototypes are fixed at the base point, the
// distillation target is a constant copy, as in training.
fn composite_check(rng: &mut ChaCha8Rng) -> Result<f64> {
    let ls = logits_shape();
    let label = random_label(rng);
    let x = random(rng, &[5, ls[0], ls[1], ls[2], ls[3]], 2.0);
    let parts: Vec<Tensor> = (0..5)
        .map(|i| {
            let n = x.numel() / 5;
            Tensor::new(&ls, x.data()[i * n..(i + 1) * n].to_vec()).expect("slice")
        })
        .collect();
    let mask_s = build_pseudo_mask(&probs_of(&parts[2]), 0.8)?;
    let mask_t = build_pseudo_mask(&probs_of(&parts[3]), 0.8)?;
    let protos = {
        let mut g = Graph::new();
        let f = g.constant(parts[4].clone());
        let e = normalize_embeddings(&mut g, f)?;
        compute_prototypes(&g.value(e), &mask_t)?
    };
    let teacher_u = parts[3].clone();
    let lambda = lambda_schedule(0, 600)?;
    gradient_check(
        |g, v| {
            let p = slices(g, v)?;
            let sup_s = supervised_loss(g, p[0], &label)?;
            let sup_t = supervised_loss(g, p[1], &label)?;
            let un_s = pseudo_supervised_loss(g, p[2], &mask_t)?;
            let un_t = pseudo_supervised_loss(g, p[3], &mask_s)?;
            let ps = g.softmax(p[2], 0)?;
            let pt = g.softmax(p[3], 0)?;
            let reg = consistency_regularization(g, ps, pt)?;
            let t = g.constant(teacher_u.clone());
            let une = uncertainty_weighted_loss(g, p[2], t, 0.5)?;
            let e = normalize_embeddings(g, p[4])?;
            let con = contrastive_loss(g, e, &mask_t, &protos, ContrastiveMode::Additive)?.loss;
            let group = g.add(con, reg)?;
            let group = g.add(group, une)?;
            let group = g.scale(group, lambda);
            let mut total = g.add(sup_s, sup_t)?;
            for term in [un_s, un_t, group] {
                total = g.add(total, term)?;
            }
            Ok(total)
        },
        &x,
        GRADIENT_STEP,
    )
}

fn probe_config(residual: bool) -> NetConfig {
    NetConfig {
        base_channels: 2,
        levels: 2,
        residual,
        in_channels: 1,
        out_classes: 2,
        feature_dim: 3,
    }
}

// A random linear read-out of logits and features of a small randomly
// initialised network, checked with respect to every parameter tensor in
// turn. (A voxel-averaged loss would make most parameter gradients so small
// that finite-difference noise dominates the relative error.)
fn network_check(cfg: NetConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let fdim = cfg.feature_dim;
    let mut net = Network::new(cfg, rng)?;
    // the classifier starts at zero, which would hide upstream gradients
    for p in net.params_mut() {
        p.data_mut().iter_mut().for_each(|w| *w += rng.gen_range(-0.3..0.3));
    }
    let input = random(rng, &[1, 4, 4, 4], 1.0);
    let readout_l = random(rng, &[2, 4, 4, 4], 1.0);
    let readout_f = random(rng, &[fdim, 4, 4, 4], 1.0);
    let mut worst = 0.0f64;
    for i in 0..net.params().len() {
        let err = gradient_check(
            |g, v| {
                let vars: Vec<Var> = net
                    .params()
                    .iter()
                    .enumerate()
                    .map(|(j, p)| if j == i { v } else { g.constant(p.clone()) })
                    .collect();
                let x = g.constant(input.clone());
                let (logits, features) = net.forward_bound(g, &vars, x)?;
                let rl = g.constant(readout_l.clone());
                let rf = g.constant(readout_f.clone());
                let a = g.mul(logits, rl)?;
                let b = g.mul(features, rf)?;
                let a = g.sum(a, None)?;
                let b = g.sum(b, None)?;
                g.add(a, b)
            },
            &net.params()[i],
            GRADIENT_STEP,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}
