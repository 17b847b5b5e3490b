use duoseg::config::RunConfig;
use duoseg::data::{generate_dataset, PhantomSpec};
use duoseg::experiment::{folds_for, run_ablation, run_fold};
use duoseg::network::{load_checkpoint, NetConfig};
use duoseg::trainer::{run_training, Ablation, Objective, TrainingData};
use std::path::Path;

fn small_config() -> RunConfig {
    let net = NetConfig { base_channels: 2, levels: 2, feature_dim: 4, ..NetConfig::student() };
    let mut cfg = RunConfig {
        phantom: PhantomSpec { extent: 16, ..PhantomSpec::default() },
        dataset_size: 6,
        folds: 3,
        labeled_fraction: 0.25,
        student: net.clone(),
        teacher: NetConfig { residual: true, ..net },
        ..RunConfig::default()
    };
    cfg.train.total_iters = 6;
    cfg.train.decay_every = 3;
    cfg
}

fn setup(dir: &Path, cfg: &RunConfig) -> (duoseg::data::DatasetManifest, TrainingData) {
    let m = generate_dataset(&dir.join("data"), &cfg.phantom, cfg.dataset_size).unwrap();
    let folds = folds_for(&m, cfg).unwrap();
    let data = TrainingData::load(&m, &folds[0]).unwrap();
    (m, data)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let (_, data) = setup(dir.path(), &cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, Some(&a)).unwrap();
    run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, Some(&b)).unwrap();
    assert_eq!(read(&a.join("history.csv")), read(&b.join("history.csv")));
    for stem in ["iter_00003", "final"] {
        for ext in ["json", "bin"] {
            let name = format!("{stem}.{ext}");
            let pa = a.join("checkpoints").join(&name);
            assert!(pa.exists(), "{name} missing");
            assert_eq!(read(&pa), read(&b.join("checkpoints").join(&name)), "{name}");
        }
    }
}

#[test]
fn different_seeds_diverge() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let (_, data) = setup(dir.path(), &cfg);
    let a = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, None).unwrap();
    cfg.train.seed = 1;
    let b = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, None).unwrap();
    assert_ne!(a.history, b.history);
}

#[test]
fn history_has_one_row_per_iteration_and_checkpoints_restore() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let (_, data) = setup(dir.path(), &cfg);
    let out = dir.path().join("run");
    let res = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, Some(&out)).unwrap();
    assert_eq!(res.history.len(), cfg.train.total_iters);
    let text = std::fs::read_to_string(out.join("history.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,lr,lambda_c,sup_s,sup_t,unsup_s,unsup_t,reg,une,contrastive,total,valid_frac_s,valid_frac_t"
    );
    assert_eq!(lines.count(), cfg.train.total_iters);
    assert_eq!(res.history[2].lr, 0.01);
    assert!((res.history[3].lr - 0.001).abs() < 1e-15);
    let restored = load_checkpoint(&out.join("checkpoints").join("final.json")).unwrap();
    assert_eq!(restored, res.dual);
    assert!(out.join("plots").join("loss.dat").exists());
}

#[test]
fn supervised_loss_falls_over_training() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.train.total_iters = 40;
    cfg.train.decay_every = 40;
    let (_, data) = setup(dir.path(), &cfg);
    let res = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, None).unwrap();
    let mean = |rows: &[duoseg::trainer::HistoryRow]| rows.iter().map(|r| r.sup_s + r.sup_t).sum::<f64>() / rows.len() as f64;
    let early = mean(&res.history[..5]);
    let late = mean(&res.history[35..]);
    assert!(late < early, "supervised loss {early} -> {late}");
}

#[test]
fn disabled_terms_contribute_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let (_, data) = setup(dir.path(), &cfg);
    cfg.train.ablation = Ablation { use_une: false, use_reg: false };
    let off = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, None).unwrap();
    for r in &off.history {
        assert_eq!((r.reg, r.une), (0.0, 0.0));
        let expect = r.sup_s + r.sup_t + r.unsup_s + r.unsup_t + r.lambda_c * r.contrastive;
        assert!((r.total - expect).abs() <= 1e-9 * expect.abs().max(1.0), "{} vs {expect}", r.total);
    }
    cfg.train.ablation = Ablation::default();
    let on = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, None).unwrap();
    assert!(on.history.iter().all(|r| r.reg > 0.0 && r.une > 0.0));
    assert_ne!(on.dual, off.dual);
}

#[test]
fn supervised_objective_ignores_unlabeled_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.train.objective = Objective::Supervised;
    let (_, data) = setup(dir.path(), &cfg);
    let a = run_training(&data, (&cfg.student, &cfg.teacher), &cfg.train, None).unwrap();
    for r in &a.history {
        assert_eq!([r.unsup_s, r.unsup_t, r.reg, r.une, r.contrastive], [0.0; 5]);
    }
    let mut other = data.clone();
    for v in &mut other.unlabeled {
        v.image.data_mut().iter_mut().for_each(|x| *x = -*x);
    }
    let b = run_training(&other, (&cfg.student, &cfg.teacher), &cfg.train, None).unwrap();
    assert_eq!(a.dual, b.dual);
}

#[test]
fn fold_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let (m, _) = setup(dir.path(), &cfg);
    let folds = folds_for(&m, &cfg).unwrap();
    let out = dir.path().join("fold");
    let r = run_fold(&m, &folds, 1, &cfg, Some(&out)).unwrap();
    assert_eq!(r.cases.len(), 3 * folds[1].test.len());
    for f in ["run.json", "fold.json", "metrics.csv", "summary.csv", "history.csv", "plots/metrics.dat"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let saved = RunConfig::load(&out.join("run.json")).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn ablation_emits_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.train.total_iters = 2;
    let (m, _) = setup(dir.path(), &cfg);
    let out = dir.path().join("abl");
    let rows = run_ablation(&m, &cfg, &[0], Some(&out)).unwrap();
    let flags: Vec<(bool, bool)> = rows.iter().map(|r| (r.ablation.use_une, r.ablation.use_reg)).collect();
    assert_eq!(flags, [(true, false), (false, true), (true, true), (false, false)]);
    let text = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
}
