mod common;

use medic::losses::ObjectiveConfig;
use medic::nncore::{init_model, mlp_arch, train_step, ClassifierModel, MiniBatch, OptimizerState};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

use common::{max_gradient_error, rng, GradProblem};

fn toy_batch() -> (Array2<f64>, Vec<usize>) {
    let x = array![
        [1.0, 0.2],
        [0.9, -0.1],
        [-1.0, 0.5],
        [-0.8, -0.4],
        [0.1, 1.2],
        [0.0, -1.1]
    ];
    (x, vec![0, 0, 1, 1, 2, 2])
}

fn plain() -> ObjectiveConfig<f64> {
    ObjectiveConfig {
        alpha: 0.0,
        ..Default::default()
    }
}

#[test]
fn repeated_steps_drive_the_loss_below_a_tenth() {
    let (x, y) = toy_batch();
    let mut model: ClassifierModel<f64> = init_model(&mlp_arch(2, &[8], 3), 7).unwrap();
    let mut opt = OptimizerState::new(&model, 0.1, 0.9).unwrap();
    let batch = MiniBatch {
        features: x.view(),
        labels: &y,
    };
    let curve: Vec<f64> = (0..200)
        .map(|_| train_step(&mut model, &batch, &plain(), None, &[], &mut opt).unwrap().learn_term)
        .collect();
    let last = model.loss(&batch, &plain(), None, &[]).unwrap().learn_term;
    assert!(last < 0.1 * curve[0], "{} -> {last}", curve[0]);
    // Past the momentum transient the curve only goes down.
    let tail = &curve[100..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let (x, y) = toy_batch();
    let mut model: ClassifierModel<f64> = init_model(&mlp_arch(2, &[4], 3), 1).unwrap();
    let before = model.clone();
    let mut opt = OptimizerState::new(&model, 0.0, 0.9).unwrap();
    let batch = MiniBatch {
        features: x.view(),
        labels: &y,
    };
    let loss = train_step(&mut model, &batch, &plain(), None, &[], &mut opt).unwrap();
    assert!(loss.total > 0.0);
    assert_eq!(model, before);
}

#[test]
fn zero_alpha_matches_training_without_teacher() {
    let (x, y) = toy_batch();
    let teacher: ClassifierModel<f64> = init_model(&mlp_arch(2, &[4], 2), 3).unwrap();
    let snap = teacher.snapshot(1);
    let start: ClassifierModel<f64> = init_model(&mlp_arch(2, &[4], 2), 4).unwrap().expand_head(1, 5).unwrap();
    let batch = MiniBatch {
        features: x.view(),
        labels: &y,
    };
    let past = vec![vec![0, 1]];

    let mut with = start.clone();
    let mut o1 = OptimizerState::new(&with, 0.05, 0.9).unwrap();
    let mut without = start.clone();
    let mut o2 = OptimizerState::new(&without, 0.05, 0.9).unwrap();
    for _ in 0..5 {
        train_step(&mut with, &batch, &plain(), Some(&snap), &past, &mut o1).unwrap();
        train_step(&mut without, &batch, &plain(), None, &[], &mut o2).unwrap();
    }
    assert_eq!(with, without);
}

#[test]
fn missing_teacher_is_a_configuration_error() {
    let (x, y) = toy_batch();
    let mut model: ClassifierModel<f64> = init_model(&mlp_arch(2, &[4], 3), 1).unwrap();
    let mut opt = OptimizerState::new(&model, 0.1, 0.0).unwrap();
    let batch = MiniBatch {
        features: x.view(),
        labels: &y,
    };
    let err = train_step(&mut model, &batch, &Default::default(), None, &[vec![0]], &mut opt);
    assert!(matches!(err, Err(medic::Error::Config(_))));
}

#[test]
fn snapshot_is_unaffected_by_later_training() {
    let (x, y) = toy_batch();
    let mut model: ClassifierModel<f64> = init_model(&mlp_arch(2, &[6], 3), 2).unwrap();
    let snap = model.snapshot(1);
    let frozen = snap.forward(x.view()).unwrap();
    assert_eq!(frozen, model.forward(x.view()).unwrap());
    let mut opt = OptimizerState::new(&model, 0.1, 0.9).unwrap();
    let batch = MiniBatch {
        features: x.view(),
        labels: &y,
    };
    for _ in 0..10 {
        train_step(&mut model, &batch, &plain(), None, &[], &mut opt).unwrap();
    }
    assert_ne!(model.forward(x.view()).unwrap(), frozen);
    assert_eq!(snap.forward(x.view()).unwrap(), frozen);
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let p = GradProblem::random(11);
        let mut model = p.student.clone();
        let mut opt = OptimizerState::new(&model, 0.05, 0.9).unwrap();
        let cfg = ObjectiveConfig::default();
        for _ in 0..20 {
            train_step(&mut model, &p.batch(), &cfg, Some(&p.teacher), &p.past_groups, &mut opt).unwrap();
        }
        model.parameters().map(|v| v.to_bits()).collect::<Vec<u64>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn gradients_match_finite_differences_with_varied_settings() {
    let mut r = rng(99);
    for seed in 100..110u64 {
        let p = GradProblem::random(seed);
        let cfg = ObjectiveConfig {
            alpha: r.random_range(0.1..3.0),
            temperature: r.random_range(0.5..4.0),
            mer_enabled: r.random_bool(0.5),
        };
        let err = max_gradient_error(&p, &cfg, 1e-5, 1e-6);
        assert!(err < 1e-4, "seed {seed}: {err:e} under {cfg:?}");
    }
}

#[test]
fn checkpoint_survives_training_round_trip() {
    let p = GradProblem::random(5);
    let mut model = p.student.clone();
    let mut opt = OptimizerState::new(&model, 0.05, 0.9).unwrap();
    for _ in 0..3 {
        train_step(&mut model, &p.batch(), &Default::default(), Some(&p.teacher), &p.past_groups, &mut opt)
            .unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save_checkpoint(&path).unwrap();
    assert_eq!(ClassifierModel::<f64>::load_checkpoint(&path).unwrap(), model);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_are_independent(seed in any::<u64>(), row in 0usize..5) {
        let model: ClassifierModel<f64> = init_model(&mlp_arch(3, &[7, 5], 4), seed).unwrap();
        let mut r = rng(seed ^ 0xabc);
        let x = Array2::from_shape_fn((5, 3), |_| r.random_range(-3.0..3.0));
        let all = model.forward(x.view()).unwrap();
        let one = model.forward(x.slice(ndarray::s![row..row + 1, ..])).unwrap();
        prop_assert_eq!(one.row(0), all.row(row));
    }

    #[test]
    fn head_expansion_keeps_old_logits(seed in any::<u64>(), extra in 1usize..4) {
        let model: ClassifierModel<f64> = init_model(&mlp_arch(2, &[6], 3), seed).unwrap();
        let grown = model.expand_head(extra, seed.wrapping_add(1)).unwrap();
        let mut r = rng(seed);
        let x = Array2::from_shape_fn((4, 2), |_| r.random_range(-5.0..5.0));
        let before = model.forward(x.view()).unwrap();
        let after = grown.forward(x.view()).unwrap();
        prop_assert_eq!(after.ncols(), 3 + extra);
        prop_assert_eq!(after.slice(ndarray::s![.., ..3]), before.view());
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-800.0f64..800.0, 1..30)) {
        let p = medic::nncore::softmax(&logits).unwrap();
        let sum: f64 = p.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
