//! Every objective term on one random prediction pair, plus the entropy
//! mask statistics and the contrastive weight schedule.

use duoseg::losses::*;
use duoseg::tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};

fn random_logits(rng: &mut impl Rng, dims: [usize; 3]) -> Tensor {
    let n = 2 * dims.iter().product::<usize>();
    Tensor::new(&[2, dims[0], dims[1], dims[2]], (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
}

fn main() -> duoseg::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let dims = [8, 8, 8];
    let label = Tensor::new(&dims, (0..512).map(|i| ((i / 64) >= 4) as u8 as f64).collect())?;

    let mut g = Graph::new();
    let ls = g.constant(random_logits(&mut rng, dims));
    let lt = g.constant(random_logits(&mut rng, dims));
    let sup = supervised_loss(&mut g, ls, &label)?;

    let ps = g.softmax(ls, 0)?;
    let pt = g.softmax(lt, 0)?;
    let mask = build_pseudo_mask(&g.value(pt), 0.8)?;
    println!("tau = {:.4} bits, valid fraction {:.3}", mask.tau, mask.valid_fraction());
    let unsup = pseudo_supervised_loss(&mut g, ls, &mask)?;
    let reg = consistency_regularization(&mut g, ps, pt)?;
    let une = uncertainty_weighted_loss(&mut g, ls, lt, 0.5)?;

    let feats = g.constant(Tensor::new(&[8, 8, 8, 8], (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect())?);
    let emb = normalize_embeddings(&mut g, feats)?;
    let protos = compute_prototypes(&g.value(emb), &mask)?;
    let con = contrastive_loss(&mut g, emb, &mask, &protos, ContrastiveMode::Additive)?;
    let alt = contrastive_loss(&mut g, emb, &mask, &protos, ContrastiveMode::Margin)?;

    let terms = LossTerms {
        sup_student: g.item(sup)?,
        unsup_student: g.item(unsup)?,
        consistency: g.item(reg)?,
        uncertainty: g.item(une)?,
        contrastive: g.item(con.loss)?,
        ..LossTerms::default()
    };
    println!("{terms:#?}");
    println!("margin contrastive = {:.4}", g.item(alt.loss)?);
    for t in [0, 150, 300, 450, 600] {
        let lam = lambda_schedule(t, 600)?;
        println!("t = {t:>3}: lambda_c = {lam:.4}, total = {:.4}", total_loss(terms, lam)?.total);
    }
    Ok(())
}
