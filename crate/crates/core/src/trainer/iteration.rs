use super::{learning_rate_at, sgd_update, Objective, TrainConfig};
use crate::data::Volume;
use crate::error::{Error, Result};
use crate::losses::{
    build_pseudo_mask, compute_prototypes, consistency_regularization, contrastive_loss, lambda_schedule,
    normalize_embeddings, pseudo_supervised_loss, supervised_loss, total_loss, uncertainty_weighted_loss, LossReport,
    LossTerms,
};
use crate::network::{DualNet, Network};
use crate::tensor::{Graph, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mutable optimiser state carried across iterations.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub iteration: usize,
    pub velocity_student: Vec<Vec<f64>>,
    pub velocity_teacher: Vec<Vec<f64>>,
    /// Drives crop sampling.
    pub rng: ChaCha8Rng,
    pub history: Vec<LossReport>,
}

fn zero_velocity(net: &Network) -> Vec<Vec<f64>> {
    net.params().iter().map(|p| vec![0.0; p.numel()]).collect()
}

impl TrainState {
    pub fn new(dual: &DualNet, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        Self {
            iteration: 0,
            velocity_student: zero_velocity(&dual.student),
            velocity_teacher: zero_velocity(&dual.teacher),
            rng,
            history: Vec::new(),
        }
    }
}

fn collect_grads(g: &Graph, vars: &[Var], net: &Network) -> Vec<Vec<f64>> {
    vars.iter()
        .zip(net.params())
        .map(|(&v, p)| g.grad(v).map_or_else(|| vec![0.0; p.numel()], <[f64]>::to_vec))
        .collect()
}

/// Global L2 norm of `grads` before clipping; rescales in place when it
/// exceeds `limit`.
pub fn clip_grads(grads: &mut [Vec<f64>], limit: Option<f64>) -> f64 {
    let norm = grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if let Some(c) = limit {
        if norm > c {
            let k = c / norm;
            grads.iter_mut().flatten().for_each(|v| *v *= k);
        }
    }
    norm
}

/// One optimisation step of both networks on one labeled and one unlabeled
/// crop, both already normalised.
///
/// Each network's pseudo-labels supervise the other. The distillation and
/// prototype terms are computed against detached teacher quantities, so
/// they move the student only; the consistency term moves both.
pub fn train_iteration(
    dual: &mut DualNet,
    labeled: &Volume,
    unlabeled: &Volume,
    cfg: &TrainConfig,
    state: &mut TrainState,
) -> Result<LossReport> {
    let label = labeled
        .label
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("labeled crop {} has no label", labeled.id)))?;
    let t = state.iteration;
    let mut g = Graph::new();
    let ps = dual.student.bind(&mut g, true);
    let pt = dual.teacher.bind(&mut g, true);

    let xl = g.constant(labeled.as_input());
    let (ls_l, _) = dual.student.forward_bound(&mut g, &ps, xl)?;
    let (lt_l, _) = dual.teacher.forward_bound(&mut g, &pt, xl)?;
    let sup_s = supervised_loss(&mut g, ls_l, label)?;
    let sup_t = supervised_loss(&mut g, lt_l, label)?;

    let mut terms = LossTerms {
        sup_student: g.item(sup_s)?,
        sup_teacher: g.item(sup_t)?,
        ..LossTerms::default()
    };
    let mut total = g.add(sup_s, sup_t)?;
    let mut lambda_c = 0.0;
    let mut valid_fractions = [0.0; 2];
    let mut contrastive_skipped = true;

    if cfg.objective == Objective::Full {
        lambda_c = lambda_schedule(t, cfg.total_iters)?;
        let xu = g.constant(unlabeled.as_input());
        let (ls_u, fs_u) = dual.student.forward_bound(&mut g, &ps, xu)?;
        let (lt_u, _) = dual.teacher.forward_bound(&mut g, &pt, xu)?;
        let probs_s = g.softmax(ls_u, 0)?;
        let probs_t = g.softmax(lt_u, 0)?;
        let mask_s = build_pseudo_mask(&g.value(probs_s), cfg.keep_quantile)?;
        let mask_t = build_pseudo_mask(&g.value(probs_t), cfg.keep_quantile)?;
        valid_fractions = [mask_s.valid_fraction(), mask_t.valid_fraction()];

        let unsup_s = pseudo_supervised_loss(&mut g, ls_u, &mask_t)?;
        let unsup_t = pseudo_supervised_loss(&mut g, lt_u, &mask_s)?;
        terms.unsup_student = g.item(unsup_s)?;
        terms.unsup_teacher = g.item(unsup_t)?;
        total = g.add(total, unsup_s)?;
        total = g.add(total, unsup_t)?;

        let emb = normalize_embeddings(&mut g, fs_u)?;
        let protos = compute_prototypes(&g.value(emb), &mask_t)?;
        let con = contrastive_loss(&mut g, emb, &mask_t, &protos, cfg.contrastive_mode)?;
        contrastive_skipped = con.skipped;
        terms.contrastive = g.item(con.loss)?;
        let mut group = con.loss;

        if cfg.ablation.use_reg {
            let reg = consistency_regularization(&mut g, probs_s, probs_t)?;
            terms.consistency = g.item(reg)?;
            group = g.add(group, reg)?;
        }
        if cfg.ablation.use_une {
            let une = uncertainty_weighted_loss(&mut g, ls_u, lt_u, cfg.temperature)?;
            terms.uncertainty = g.item(une)?;
            group = g.add(group, une)?;
        }
        let weighted = g.scale(group, lambda_c);
        total = g.add(total, weighted)?;
    }

    let report = LossReport {
        valid_fractions,
        contrastive_skipped,
        ..total_loss(terms, lambda_c)?
    };
    let graph_total = g.item(total)?;
    if !graph_total.is_finite() {
        return Err(Error::NonFinite(format!("total loss at iteration {t}: {report:?}")));
    }
    if (graph_total - report.total).abs() > 1e-9 * (1.0 + graph_total.abs()) {
        return Err(Error::invalid(format!(
            "loss report total {} disagrees with graph total {graph_total}",
            report.total
        )));
    }
    g.backward(total)?;
    let mut gs = collect_grads(&g, &ps, &dual.student);
    let mut gt = collect_grads(&g, &pt, &dual.teacher);
    drop(g);

    if let Some(bad) = gs.iter().chain(&gt).flatten().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient value {bad} at iteration {t}; report {report:?}")));
    }
    let report = LossReport {
        grad_norms: [clip_grads(&mut gs, cfg.grad_clip), clip_grads(&mut gt, cfg.grad_clip)],
        ..report
    };
    let rate = learning_rate_at(t, cfg);
    sgd_update(
        dual.student.params_mut(),
        &gs,
        &mut state.velocity_student,
        rate,
        cfg.momentum,
        cfg.weight_decay,
    )?;
    sgd_update(
        dual.teacher.params_mut(),
        &gt,
        &mut state.velocity_teacher,
        rate,
        cfg.momentum,
        cfg.weight_decay,
    )?;
    state.iteration += 1;
    state.history.push(report.clone());
    Ok(report)
}
