use tch::{Kind, Tensor};
use tintline::data::synth::SHAPE_CLASSES;
use tintline::data::LineArt;
use tintline::extractors::{
    colored_shape_corpus, linear_probe_accuracy, pretrain_f1, pretrain_f2, shape_corpus, ExtractorKind, FeatureExtractor,
    PretrainConfig,
};
use tintline::losses::gradcheck;
use tintline::Error;

fn one_hot_corpus(count: usize, side: usize, seed: u64) -> Vec<(LineArt, Vec<f32>)> {
    shape_corpus(count, side, seed)
        .into_iter()
        .map(|(l, c)| {
            let mut tags = vec![0.0; SHAPE_CLASSES];
            tags[c] = 1.0;
            (l, tags)
        })
        .collect()
}

fn quick_config(steps: usize) -> PretrainConfig {
    PretrainConfig {
        channels: 32,
        steps,
        batch_size: 8,
        eval_every: 5,
        ..PretrainConfig::default()
    }
}

#[test]
fn pretrained_local_features_support_a_linear_probe() {
    let corpus = one_hot_corpus(300, 64, 11);
    let cfg = PretrainConfig {
        channels: 64,
        steps: 150,
        ..PretrainConfig::default()
    };
    let (f1, report) = pretrain_f1(&corpus, &cfg).unwrap();
    assert_eq!(report.heldout_size, 30);
    let first = report.heldout_curve.first().unwrap().1;
    let last = report.heldout_curve.last().unwrap().1;
    assert!(last < first, "held-out loss did not improve: {:?}", report.heldout_curve);

    let train = shape_corpus(300, 64, 12);
    let test = shape_corpus(100, 64, 13);
    let acc = linear_probe_accuracy(&f1, &train, &test, SHAPE_CLASSES, 300, 0).unwrap();
    assert!(acc > 0.30, "probe accuracy {acc}");
}

#[test]
fn pretraining_is_deterministic() {
    let corpus = one_hot_corpus(200, 32, 1);
    let (a, ra) = pretrain_f1(&corpus, &quick_config(10)).unwrap();
    let (b, rb) = pretrain_f1(&corpus, &quick_config(10)).unwrap();
    assert_eq!(ra.heldout_curve, rb.heldout_curve);
    assert_eq!(ra.train_loss, rb.train_loss);
    assert_eq!(a.fingerprint(), b.fingerprint());
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let corpus = one_hot_corpus(200, 32, 2);
    let (f1, _) = pretrain_f1(&corpus, &quick_config(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f1.ckpt");
    f1.save(&path).unwrap();
    let loaded = FeatureExtractor::load(&path, ExtractorKind::Local, Kind::Float).unwrap();
    assert_eq!(loaded.fingerprint(), f1.fingerprint());
    assert_eq!(loaded.architecture_tag(), f1.architecture_tag());
    assert_eq!(loaded.manifest(), f1.manifest());
    let x = Tensor::rand([2, 1, 32, 32], (Kind::Float, tch::Device::Cpu));
    assert!(loaded.forward(&x).unwrap().equal(&f1.forward(&x).unwrap()));
    let again = dir.path().join("again.ckpt");
    loaded.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

    let err = FeatureExtractor::load(&path, ExtractorKind::Perceptual, Kind::Float).unwrap_err();
    assert!(matches!(err, Error::ArchitectureMismatch { .. }));
}

#[test]
fn local_features_are_translation_covariant() {
    let f1 = FeatureExtractor::local(32, 7).unwrap().with_random_weights(7);
    let corpus = shape_corpus(1, 128, 5);
    let img = tintline::tensor::from_array2(&corpus[0].0.pixels).view([1, 1, 128, 128]);
    // Shift right by 16 pixels, filling with white.
    let shifted = Tensor::ones([1, 1, 128, 128], (Kind::Float, tch::Device::Cpu));
    shifted.narrow(3, 16, 112).copy_(&img.narrow(3, 0, 112));
    let a = f1.forward(&img).unwrap();
    let b = f1.forward(&shifted).unwrap();
    // Interior cells: away from the borders the receptive field sees identical content.
    let diff = (b.narrow(3, 3, 3) - a.narrow(3, 2, 3)).narrow(2, 2, 4).abs().max().double_value(&[]);
    assert!(diff <= 1e-5, "max difference {diff}");
}

#[test]
fn perceptual_features_pass_a_finite_difference_check() {
    let f2 = FeatureExtractor::perceptual(128, 3).unwrap().with_random_weights(3).to_dtype(Kind::Double).unwrap();
    let img = Tensor::rand([1, 3, 32, 32], (Kind::Double, tch::Device::Cpu)) * 2.0 - 1.0;
    let indices: Vec<i64> = (0..10).map(|i| (i * 317 + 41) % img.numel() as i64).collect();
    let samples = gradcheck::check(|x| Ok(f2.forward(x)?.mean(Kind::Double)), &img, &indices, 1e-3).unwrap();
    for s in samples {
        assert!(s.relative_error(1e-10) <= 1e-2, "{s:?}");
    }
}

#[test]
fn perceptual_pretraining_runs() {
    let corpus = colored_shape_corpus(200, 32, 4);
    let (f2, report) = pretrain_f2(&corpus, SHAPE_CLASSES, &quick_config(5)).unwrap();
    assert!(f2.is_initialized());
    assert_eq!(report.train_loss.len(), 5);
    assert!(pretrain_f2(&corpus[..150], SHAPE_CLASSES, &quick_config(5)).is_err());
}
