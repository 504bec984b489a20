use aada::dann::{
    accuracy, checkpoint_from_str, checkpoint_to_string, train_round, DannConfig, DannModel,
    LabeledBatch, ModelDims, Phase, Schedule, TrainData, TrainOptions, TrainScheme,
    UnlabeledBatch,
};
use aada::data::{gen_shifted_pair, ShiftSpec};
use aada::nn::Matrix;
use aada::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn config(lambda_adv: f64) -> DannConfig {
    DannConfig {
        input_dim: 2,
        num_classes: 2,
        dims: ModelDims {
            feature_hidden: vec![8],
            feature_dim: 4,
            class_hidden: vec![],
            discriminator_hidden: vec![4],
        },
        lambda_adv,
        lambda_ent: 0.1,
    }
}

fn short_schedule(epochs: usize) -> Schedule {
    Schedule {
        phases: vec![Phase {
            epochs,
            learning_rate: 5e-3,
        }],
        batch_size: 32,
        finetune_lr_factor: 0.5,
    }
}

/// Two unit-variance blobs at (±2, 0); label 1 for the right blob.
fn blobs(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let cx = if y == 1 { 2.0 } else { -2.0 };
        data.push(cx + noise.sample(&mut rng));
        data.push(noise.sample(&mut rng));
        labels.push(y);
    }
    (Matrix::from_vec(n, 2, data).unwrap(), labels)
}

fn data<'a>(
    s: &'a (Matrix, Vec<usize>),
    t: &'a (Matrix, Vec<usize>),
    u: &'a Matrix,
) -> TrainData<'a> {
    TrainData {
        source: &s.0,
        source_labels: &s.1,
        labeled_target: &t.0,
        labeled_target_labels: &t.1,
        unlabeled_target: u,
    }
}

#[test]
fn target_only_without_target_labels_is_an_error() {
    let s = blobs(40, 1);
    let empty = (Matrix::zeros(0, 2), Vec::new());
    let u = blobs(20, 2).0;
    let err = train_round(&config(0.1), TrainScheme::TargetOnly, &data(&s, &empty, &u), &short_schedule(1), TrainOptions::default(), 0, None)
        .unwrap_err();
    assert!(matches!(err, Error::SchemeData { .. }), "{err}");
}

#[test]
fn adversarial_round_zero_trains_on_source_and_unlabeled_only() {
    let s = blobs(60, 1);
    let empty = (Matrix::zeros(0, 2), Vec::new());
    let u = blobs(30, 2).0;
    let (model, trace) = train_round(&config(0.1), TrainScheme::Adversarial, &data(&s, &empty, &u), &short_schedule(3), TrainOptions::default(), 4, None).unwrap();
    assert_eq!(trace.len(), 3);
    assert!(trace.iter().all(|e| e.domain_loss.is_some() && e.entropy_loss.is_some()));
    assert!(model.predict_domain_prob(&u).unwrap().iter().all(|p| *p > 0.0 && *p < 1.0));
}

#[test]
fn separable_source_is_learned() {
    let s = blobs(600, 10);
    let held_out = blobs(400, 11);
    let empty = (Matrix::zeros(0, 2), Vec::new());
    let u = blobs(300, 12).0;
    for scheme in [TrainScheme::Adversarial, TrainScheme::Joint, TrainScheme::FineTune] {
        let (model, _) = train_round(&config(0.1), scheme, &data(&s, &empty, &u), &short_schedule(10), TrainOptions::default(), 3, None).unwrap();
        let acc = accuracy(&model, &held_out.0, &held_out.1).unwrap();
        assert!(acc > 0.95, "{scheme}: {acc}");
    }
}

#[test]
fn finetune_pretraining_ignores_target_labels() {
    let s = blobs(80, 1);
    let u = blobs(30, 2).0;
    let none = (Matrix::zeros(0, 2), Vec::new());
    let some = blobs(6, 3);
    let schedule = short_schedule(3);
    let run = |t| train_round(&config(0.1), TrainScheme::FineTune, &data(&s, t, &u), &schedule, TrainOptions::default(), 9, None).unwrap().1;
    let pretrain = |trace: Vec<aada::dann::EpochLoss>| trace.into_iter().filter(|e| e.stage == "pretrain").collect::<Vec<_>>();
    let (a, b) = (run(&none), run(&some));
    assert!(b.iter().any(|e| e.stage == "finetune"));
    assert_eq!(pretrain(a), pretrain(b));
}

#[test]
fn joint_matches_adversarial_without_reversal() {
    let s = blobs(50, 1);
    let t = blobs(5, 4);
    let u = blobs(30, 2).0;
    let schedule = short_schedule(2);
    let run = |scheme| train_round(&config(0.0), scheme, &data(&s, &t, &u), &schedule, TrainOptions::default(), 7, None).unwrap().0;
    let (adv, joint) = (run(TrainScheme::Adversarial), run(TrainScheme::Joint));
    assert_eq!(adv.feature_extractor, joint.feature_extractor);
    assert_eq!(adv.class_predictor, joint.class_predictor);
}

fn golden_batch() -> (DannModel, LabeledBatch, UnlabeledBatch) {
    let model = DannModel::new(&config(0.1), 42).unwrap();
    let x = Matrix::from_rows(&[[0.5, -1.0], [1.5, 0.25], [-0.75, 2.0], [0.0, 0.0]]).unwrap();
    let labeled = LabeledBatch::source(x, vec![0, 1, 1, 0]).unwrap();
    let u = Matrix::from_rows(&[[1.0, 1.0], [-2.0, 0.5], [0.3, -0.3]]).unwrap();
    (model, labeled, UnlabeledBatch::target(u))
}

#[test]
fn adversarial_step_golden_master() {
    let (mut model, labeled, unlabeled) = golden_batch();
    let first = model.adversarial_step(&labeled, &unlabeled).unwrap();
    let second = model.adversarial_step(&labeled, &unlabeled).unwrap();
    let expected = [
        0.6833088454136799,
        0.6892671000516987,
        0.6926108888902297,
        0.6820255685752545,
        0.6891575490939015,
        0.692598233396283,
    ];
    let got = [
        first.class_loss,
        first.domain_loss.unwrap(),
        first.entropy_loss.unwrap(),
        second.class_loss,
        second.domain_loss.unwrap(),
        second.entropy_loss.unwrap(),
    ];
    for (g, e) in got.iter().zip(expected) {
        assert!((g - e).abs() <= 1e-12, "{got:?}");
    }
}

#[test]
fn trained_checkpoint_reproduces_recorded_accuracy() {
    let s = blobs(200, 20);
    let t = blobs(4, 21);
    let u = blobs(100, 22).0;
    let test = blobs(200, 23);
    let (model, _) = train_round(&config(0.1), TrainScheme::Adversarial, &data(&s, &t, &u), &short_schedule(4), TrainOptions::default(), 5, None).unwrap();
    let restored = checkpoint_from_str(&checkpoint_to_string(&model).unwrap()).unwrap();
    let acc = accuracy(&restored, &test.0, &test.1).unwrap();
    assert_eq!(acc, 0.965);
}

#[test]
fn shift_is_pure_covariate_shift() {
    // undoing the transform must give source-level accuracy
    for seed in 0..5 {
        let spec = ShiftSpec {
            n_source: 600,
            n_target: 600,
            seed,
            ..ShiftSpec::default()
        };
        let (source, target) = gen_shifted_pair(&spec).unwrap();
        let (train, held_out) = source.split(0.5, seed).unwrap();
        let undone: Vec<f64> = target
            .features
            .row_iter()
            .flat_map(|r| spec.inverse_transform([r[0], r[1]]))
            .collect();
        let undone = Matrix::from_vec(target.len(), 2, undone).unwrap();
        let empty = (Matrix::zeros(0, 2), Vec::new());
        let s = (train.features.clone(), train.labels.clone());
        let cfg = DannConfig {
            dims: ModelDims {
                feature_hidden: vec![32],
                feature_dim: 16,
                class_hidden: vec![],
                discriminator_hidden: vec![4],
            },
            ..config(0.0)
        };
        let (model, _) = train_round(&cfg, TrainScheme::Joint, &data(&s, &empty, &held_out.features), &short_schedule(40), TrainOptions::default(), seed, None).unwrap();
        let source_acc = accuracy(&model, &held_out.features, &held_out.labels).unwrap();
        let undone_acc = accuracy(&model, &undone, &target.labels).unwrap();
        assert!((source_acc - undone_acc).abs() <= 0.02, "seed {seed}: {source_acc} vs {undone_acc}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), steps in 0usize..4, lambda in 0.0f64..2.0) {
        let (_, labeled, unlabeled) = golden_batch();
        let mut model = DannModel::new(&config(lambda), seed).unwrap();
        for _ in 0..steps {
            model.adversarial_step(&labeled, &unlabeled).unwrap();
        }
        let text = checkpoint_to_string(&model).unwrap();
        let mut restored = checkpoint_from_str(&text).unwrap();
        prop_assert_eq!(checkpoint_to_string(&restored).unwrap(), text);
        prop_assert_eq!(restored.lambda_adv.to_bits(), lambda.to_bits());
        let a = model.adversarial_step(&labeled, &unlabeled).unwrap();
        let b = restored.adversarial_step(&labeled, &unlabeled).unwrap();
        prop_assert_eq!(a, b);
    }
}
