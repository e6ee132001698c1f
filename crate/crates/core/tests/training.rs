use std::collections::{BTreeMap, BTreeSet};

use dualseg::network::{init_params, SegNetConfig, SegNetParams};
use dualseg::training::*;
use dualseg::volume::{synth_phantom, LabelMap, DEFAULT_NOISE};
use dualseg::{Error, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scalar_params(values: &[f64]) -> SegNetParams<f64> {
    SegNetParams {
        params: values
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("p{i}"), Tensor::new(vec![1], vec![v]).unwrap()))
            .collect(),
        buffers: BTreeMap::new(),
    }
}

fn scalar_grads(values: &[f64]) -> BTreeMap<String, Tensor<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| (format!("p{i}"), Tensor::new(vec![1], vec![v]).unwrap()))
        .collect()
}

#[test]
fn first_adam_step_moves_by_learning_rate() {
    let mut p = scalar_params(&[1.0, -2.0, 0.5]);
    let mut s = AdamState::new(&p, 0.9, 0.999, 1e-12);
    adam_step(&mut p, &scalar_grads(&[0.3, -7.0, 1e-3]), &mut s, 0.01, 0.0).unwrap();
    assert_eq!(s.t, 1);
    let got: Vec<f64> = p.params.values().map(|t| t.data()[0]).collect();
    for (g, want) in got.iter().zip([1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01]) {
        assert!((g - want).abs() < 1e-8, "{g} vs {want}");
    }
}

#[test]
fn zero_gradient_is_a_fixed_point() {
    let mut p = scalar_params(&[1.5, -0.25]);
    let before = p.clone();
    let mut s = AdamState::new(&p, 0.9, 0.999, 1e-8);
    for _ in 0..10 {
        adam_step(&mut p, &scalar_grads(&[0.0, 0.0]), &mut s, 3.3e-3, 0.0).unwrap();
    }
    assert_eq!(p, before);
    assert_eq!(s.t, 10);
    adam_step(&mut p, &BTreeMap::new(), &mut s, 3.3e-3, 0.0).unwrap();
    assert_eq!(p, before);
}

#[test]
fn adam_matches_scalar_recurrence() {
    let grads = [0.7, -1.3, 0.2, 2.5, -0.05];
    for decay in [0.0, 2e-6, 0.3] {
        let (lr, b1, b2, eps) = (3.3e-3, 0.9, 0.999, 1e-8);
        let mut p = scalar_params(&[0.8]);
        let mut s = AdamState::new(&p, b1, b2, eps);
        let (mut x, mut m, mut v) = (0.8f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            adam_step(&mut p, &scalar_grads(&[g]), &mut s, lr, decay).unwrap();
            let t = t as i32 + 1;
            x *= 1.0 - lr * decay;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            assert!((p.params["p0"].data()[0] - x).abs() < 1e-12, "decay {decay} step {t}");
        }
    }
}

#[test]
fn adam_rejects_mismatched_shapes() {
    let mut p = scalar_params(&[1.0]);
    let mut s = AdamState::new(&p, 0.9, 0.999, 1e-8);
    let mut g = BTreeMap::new();
    g.insert("p0".to_string(), Tensor::<f64>::zeros(vec![2]));
    assert!(matches!(adam_step(&mut p, &g, &mut s, 0.1, 0.0), Err(Error::Shape { .. })));
    let mut g = BTreeMap::new();
    g.insert("missing".to_string(), Tensor::<f64>::zeros(vec![1]));
    assert!(adam_step(&mut p, &g, &mut s, 0.1, 0.0).is_err());
    assert_eq!(s.t, 0);
}

#[test]
fn schedule_defaults() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_schedule(0, &cfg), 3.3e-3);
    assert_eq!(lr_schedule(1_000_000, &cfg), lr_schedule(0, &cfg));
    assert_eq!(cfg.weight_decay, 2e-6);
    assert_eq!(cfg.batch_size, 5);
    assert_eq!(cfg.patch_size, 32);
    assert_eq!((cfg.beta1, cfg.beta2, cfg.epsilon), (0.9, 0.999, 1e-8));
    assert!((0..5000).all(|i| weight_decay_at(i, &cfg) == 2e-6));

    let periodic = TrainConfig {
        decay_mode: DecayMode::Periodic,
        ..TrainConfig::default()
    };
    let applied: Vec<u64> = (0..5001).filter(|&i| weight_decay_at(i, &periodic) > 0.0).collect();
    assert_eq!(applied, vec![1000, 2000, 3000, 4000, 5000]);
}

#[test]
fn train_config_text_round_trip() {
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        decay_mode: DecayMode::Periodic,
        iterations: 12,
        seed: 9,
        ..TrainConfig::default()
    };
    assert_eq!(TrainConfig::from_description(&cfg.describe()).unwrap(), cfg);
    assert!(TrainConfig::from_description("learning_rate=0.1;bogus=1").is_err());
    let mut c = cfg.clone();
    assert!(c.set("batch_size", "0").unwrap());
    assert!(c.validate().is_err());
    assert!(c.set("decay_mode", "sometimes").is_err());
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("subject{i:02}")).collect()
}

#[test]
fn loso_fold_examples() {
    let spec = loso_folds(&ids(10)).unwrap();
    assert_eq!(spec.folds.len(), 10);
    for f in &spec.folds {
        assert_eq!(f.train.len(), 9);
        assert_eq!(f.validation.len(), 1);
        assert!(!f.train.contains(&f.validation[0]));
    }
    let held: Vec<&String> = spec.folds.iter().map(|f| &f.validation[0]).collect();
    assert_eq!(held.iter().collect::<BTreeSet<_>>().len(), 10);

    let two = loso_folds(&ids(2)).unwrap();
    assert_eq!(two.folds.len(), 2);
    assert!(two.folds.iter().all(|f| f.train.len() == 1));

    assert!(matches!(loso_folds(&ids(1)), Err(Error::EmptyDataset(_))));
    let mut dup = ids(3);
    dup.push(dup[0].clone());
    assert!(loso_folds(&dup).is_err());
}

#[test]
fn holdout_fold_examples() {
    let spec = holdout_fold(&ids(8), &["subject06".into(), "subject07".into()]).unwrap();
    assert_eq!(spec.folds.len(), 1);
    assert_eq!(spec.folds[0].train, ids(6));
    assert!(holdout_fold(&ids(3), &["nobody".into()]).is_err());
    assert!(holdout_fold(&ids(2), &ids(2)).is_err());
}

proptest! {
    #[test]
    fn folds_depend_only_on_the_subject_set(n in 2usize..15, seed in 0u64..1000) {
        let base = ids(n);
        let mut shuffled = base.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = loso_folds(&base).unwrap();
        prop_assert_eq!(&a, &loso_folds(&shuffled).unwrap());
        for f in &a.folds {
            let mut all: Vec<String> = f.train.iter().chain(&f.validation).cloned().collect();
            all.sort();
            prop_assert_eq!(&all, &a.subjects);
        }
    }
}

fn phantom_subjects(count: u64, extents: [usize; 3]) -> Vec<Subject> {
    (0..count)
        .map(|s| {
            let (v, l) = synth_phantom(100 + s, extents, DEFAULT_NOISE).unwrap();
            Subject::new(format!("phantom{s}"), &v, l).unwrap()
        })
        .collect()
}

fn small_configs(patch: usize, batch: usize) -> (SegNetConfig, TrainConfig) {
    (
        SegNetConfig::reduced(2, 4),
        TrainConfig {
            patch_size: patch,
            batch_size: batch,
            iterations: 10,
            seed: 3,
            ..TrainConfig::default()
        },
    )
}

#[test]
fn sampled_batches_are_balanced_and_deterministic() {
    let subjects = phantom_subjects(2, [32, 32, 32]);
    let cfg = TrainConfig {
        patch_size: 16,
        ..TrainConfig::default()
    };
    let mut r1 = ChaCha8Rng::seed_from_u64(5);
    let mut r2 = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let b = sample_batch(&subjects, &cfg, &mut r1).unwrap();
        assert_eq!(b, sample_batch(&subjects, &cfg, &mut r2).unwrap());
        assert_eq!(b.input.shape(), &[5, 2, 16, 16, 16]);
        assert_eq!(b.targets.len(), 5 * 16 * 16 * 16);
        assert!(b.targets.iter().all(|&t| t < 4));
        assert!(b.foreground_patches * 2 >= 5, "{}", b.foreground_patches);
    }
    assert!(matches!(sample_batch(&[], &cfg, &mut r1), Err(Error::EmptyDataset(_))));
    let big = TrainConfig {
        patch_size: 64,
        ..TrainConfig::default()
    };
    assert!(sample_batch(&subjects, &big, &mut r1).is_err());
}

#[test]
fn initial_loss_is_near_ln4_on_balanced_targets() {
    let (model, train) = (SegNetConfig::reduced(2, 8), TrainConfig::default());
    let t = Trainer::new(model, train).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 16 * 16 * 16;
    let mut targets: Vec<usize> = (0..n).map(|i| i % 4).collect();
    targets.shuffle(&mut rng);
    let batch = Batch {
        input: Tensor::randn(vec![1, 2, 16, 16, 16], 1.0, &mut rng),
        targets,
        foreground_patches: 1,
    };
    let loss = t.loss(&batch, dualseg::network::Mode::Train).unwrap();
    assert!((loss - 4f64.ln()).abs() < 0.15, "{loss}");
}

#[test]
fn training_is_deterministic_and_learns() {
    let subjects = phantom_subjects(2, [32, 32, 32]);
    let (model, train) = small_configs(16, 2);
    let a = train_loop(&subjects, model.clone(), train.clone()).unwrap();
    let b = train_loop(&subjects, model.clone(), train.clone()).unwrap();
    assert_eq!(a.losses.len(), 10);
    assert_eq!(a.losses.iter().map(|l| l.to_bits()).collect::<Vec<_>>(), b.losses.iter().map(|l| l.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.params, b.params);
    assert!(a.losses.iter().all(|l| l.is_finite()));
    assert_ne!(a.params, init_params::<f32>(&model, model.seed));
    assert!(matches!(train_loop(&[], model, train), Err(Error::EmptyDataset(_))));
}

#[test]
fn fixed_patch_loss_drops() {
    let subjects = phantom_subjects(1, [32, 32, 32]);
    let (model, train) = small_configs(16, 1);
    let mut t = Trainer::new(model, train).unwrap();
    let batch = Batch::single(&subjects[0], [8, 8, 8], 16).unwrap();
    let first = t.step(&batch).unwrap();
    for _ in 0..160 {
        t.step(&batch).unwrap();
    }
    let last = *t.losses.last().unwrap();
    assert!(last < 0.25 * first, "{first} -> {last}");
}

#[test]
fn checkpoint_resume_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let subjects = phantom_subjects(2, [32, 32, 32]);
    let (model, train) = small_configs(16, 2);
    let full = train_loop(&subjects, model.clone(), train.clone()).unwrap();

    let mut half = Trainer::new(model.clone(), train.clone()).unwrap();
    half.run_until(&subjects, 5, |_, _| {}).unwrap();
    let path = dir.path().join("ckpt.dsa");
    save_checkpoint(&half, &path).unwrap();

    let loaded = read_checkpoint(&path).unwrap();
    assert_eq!(loaded.params, half.params);
    assert_eq!(loaded.adam, half.adam);
    assert_eq!(loaded.rng, half.rng);
    assert_eq!(loaded.iteration, 5);
    assert_eq!(loaded.losses, half.losses);

    let mut resumed = resume_checkpoint(&path, &model, &train).unwrap();
    resumed.run_until(&subjects, 10, |_, _| {}).unwrap();
    assert_eq!(resumed.params, full.params);
    assert_eq!(resumed.adam, full.adam);
    assert_eq!(resumed.losses, full.losses);

    let longer = TrainConfig {
        iterations: 50,
        ..train.clone()
    };
    assert!(resume_checkpoint(&path, &model, &longer).is_ok());
    let other = TrainConfig {
        learning_rate: 1e-3,
        ..train.clone()
    };
    assert!(matches!(resume_checkpoint(&path, &model, &other), Err(Error::ConfigMismatch { .. })));
    let wider = SegNetConfig::reduced(2, 8);
    assert!(matches!(resume_checkpoint(&path, &wider, &train), Err(Error::ConfigMismatch { .. })));
}

fn class_names() -> Vec<String> {
    LabelMap::default().names().to_vec()
}

#[test]
fn perfect_predictor_scores_one() {
    let (v, labels) = synth_phantom(7, [48, 48, 48], DEFAULT_NOISE).unwrap();
    let pred = segment_with(&v, EVAL_PATCH, EVAL_STRIDE, |group| {
        Ok(group
            .iter()
            .map(|(o, _)| {
                let p = EVAL_PATCH;
                Tensor::from_fn(vec![4, p, p, p], |i| {
                    let (k, r) = (i / (p * p * p), i % (p * p * p));
                    let (z, y, x) = (r / (p * p) + o[0], r / p % p + o[1], r % p + o[2]);
                    let c = labels.classes[(z * 48 + y) * 48 + x] as usize;
                    if c == k { 1.0 } else { 0.0 }
                })
            })
            .collect())
    })
    .unwrap();
    let report = dualseg::metrics::evaluate_all(&pred, &labels, &class_names()).unwrap();
    for c in &report.classes {
        assert_eq!(c.dice, 1.0, "{}", c.name);
        assert_eq!(c.asd.unwrap(), 0.0);
    }
}

#[test]
fn untrained_network_segments_near_chance() {
    let (v, labels) = synth_phantom(8, [48, 48, 48], DEFAULT_NOISE).unwrap();
    let cfg = SegNetConfig::reduced(2, 4);
    let params = init_params(&cfg, 0);
    let pred = segment(&v, &params, &cfg, EVAL_PATCH, EVAL_STRIDE).unwrap();
    assert_eq!(pred.extents, [48, 48, 48]);
    assert!(pred.classes.iter().all(|&c| c < 4));
    let report = dualseg::metrics::evaluate_all(&pred, &labels, &class_names()).unwrap();
    assert!(report.avg_dice() < 0.5, "{}", report.avg_dice());
    let direct = evaluate_subject(&v, &labels, &params, &cfg, &class_names()).unwrap();
    assert_eq!(direct, report);
}
