use std::collections::BTreeMap;

use tch::{Kind, Tensor};
use tintline::data::synth::random_illustration;
use tintline::data::{synthesize_pair, PairDataset, XdogParams};
use tintline::losses::gradient_penalty;
use tintline::networks::{Discriminator, DiscriminatorConfig};
use tintline::nn::{Adam, AdamConfig, ParamStore};
use tintline::rng::seeded;
use tintline::trainer::{MetricsRecord, TrainConfig, Trainer, LATEST_CHECKPOINT, METRICS_FILE};
use tintline::Error;

fn dataset(count: usize, seed: u64) -> PairDataset {
    let mut rng = seeded(seed);
    let pairs = (0..count)
        .map(|i| {
            let ill = random_illustration(64, 64, &mut rng, &format!("p{i}"));
            synthesize_pair(&ill, &XdogParams::default(), &mut rng).unwrap().0
        })
        .collect();
    PairDataset::from_pairs(pairs, seed, 64).unwrap()
}

fn small_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.batch_size = 2;
    cfg.augment.side = 64;
    cfg.generator.image_side = 64;
    cfg.generator.base_width = 8;
    cfg.generator.block_counts = [1, 1, 1, 1];
    cfg.generator.cardinality = 8;
    cfg.generator.feature_channels = 32;
    cfg.discriminator.base_width = 8;
    cfg.discriminator.depth_plan = [16, 32, 64, 64];
    cfg.discriminator.blocks = 1;
    cfg.discriminator.cardinality = 8;
    cfg.discriminator.cond_channels = 32;
    cfg.random_extractors = true;
    cfg
}

fn grads(store: &ParamStore) -> BTreeMap<String, Tensor> {
    store.named().iter().map(|(n, t)| (n.clone(), t.grad().copy())).collect()
}

#[test]
fn one_step_moves_both_networks_and_populates_gradients() {
    let ds = dataset(4, 1);
    let mut t = Trainer::new(small_config()).unwrap();
    let (g0, d0) = (t.generator_params().fingerprint(), t.critic_params().fingerprint());
    let report = t.step(&ds).unwrap();
    assert!(report.non_finite_fields().is_empty());
    assert_ne!(t.generator_params().fingerprint(), g0);
    assert_ne!(t.critic_params().fingerprint(), d0);
    for store in [t.generator_params(), t.critic_params()] {
        for (name, p) in store.named() {
            let g = p.grad();
            assert!(g.defined(), "{name} has no gradient");
            assert!(g.isfinite().all().int64_value(&[]) == 1, "{name} gradient not finite");
        }
    }
    assert_eq!(t.iteration(), 1);
}

#[test]
fn extractors_stay_frozen() {
    let ds = dataset(4, 2);
    let mut t = Trainer::new(small_config()).unwrap();
    let (f1, f2) = (t.f1.fingerprint(), t.f2.fingerprint());
    for _ in 0..100 {
        t.step(&ds).unwrap();
    }
    assert_eq!(t.f1.fingerprint(), f1);
    assert_eq!(t.f2.fingerprint(), f2);
}

#[test]
fn zero_adversarial_weight_gives_content_only_gradient() {
    let ds = dataset(4, 3);
    let mut cfg = small_config();
    cfg.weights.adversarial = 0.0;
    let mut t = Trainer::new(cfg).unwrap();
    let batch = t.sample_batch(&ds).unwrap();

    t.generator_params().zero_grad();
    let features = t.f1.forward(&batch.line).unwrap();
    let fake = t.generator.forward(&batch.line, &batch.hints, &features).unwrap();
    tintline::losses::content_loss(&t.f2, &fake, &batch.color).unwrap().backward();
    let expected = grads(t.generator_params());

    t.train_step(&batch).unwrap();
    let actual = grads(t.generator_params());
    for (name, e) in &expected {
        let diff = (e - &actual[name]).abs().max().double_value(&[]);
        assert!(diff <= 1e-12, "{name}: {diff}");
    }
}

#[test]
fn gradient_penalty_alone_updates_the_critic() {
    let mut store = ParamStore::new(Kind::Float, 4);
    let cfg = DiscriminatorConfig {
        base_width: 8,
        depth_plan: [16, 16, 16, 16],
        blocks: 1,
        cardinality: 8,
        cond_channels: 4,
        ..Default::default()
    };
    let d = Discriminator::new(&mut store, &cfg).unwrap();
    let mut opt = Adam::new(&store, AdamConfig::default());
    let before = store.fingerprint();
    let features = Tensor::rand([2, 4, 4, 4], (Kind::Float, tch::Device::Cpu));
    let y = Tensor::rand([2, 3, 64, 64], (Kind::Float, tch::Device::Cpu));
    let gp = gradient_penalty(|x| d.forward(x, &features), &y, 10.0).unwrap();
    gp.backward();
    opt.step(1e-3);
    assert_ne!(store.fingerprint(), before);
}

#[test]
fn resume_reproduces_the_next_iterations() {
    let ds = dataset(6, 5);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.total_iterations = 6;
    cfg.checkpoint_every = 3;
    let mut t = Trainer::new(cfg).unwrap();
    let mut reports = Vec::new();
    let summary = t.fit(&ds, dir.path(), |i, r| reports.push((i, *r))).unwrap();
    assert_eq!(summary.checkpoints.len(), 2);
    assert!(dir.path().join(LATEST_CHECKPOINT).exists());

    let mut resumed = Trainer::resume(&summary.checkpoints[0]).unwrap();
    assert_eq!(resumed.iteration(), 3);
    for (i, expected) in &reports[3..] {
        let r = resumed.step(&ds).unwrap();
        assert_eq!(resumed.iteration(), *i);
        assert_eq!(&r, expected, "iteration {i}");
    }
    assert_eq!(resumed.generator_params().fingerprint(), t.generator_params().fingerprint());

    let metrics = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let records: Vec<MetricsRecord> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 6);
    assert_eq!(records[5].iteration, 6);
    assert_eq!(records[0].lr, 1e-4);
    let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    for key in ["iteration", "content", "adversarial", "critic", "gradient_penalty", "drift", "total_g", "total_d", "lr", "wall_time_s"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn empty_dataset_refused() {
    let empty = tempfile::tempdir().unwrap();
    std::fs::write(
        empty.path().join("manifest.json"),
        r#"{"seed":0,"side":64,"params":{"sigma":0.4,"kappa":4.5,"tau":0.95,"phi":1e9,"epsilon_t":0.0},"files":[]}"#,
    )
    .unwrap();
    assert!(matches!(PairDataset::load(empty.path()), Err(Error::EmptyDataset(_))));
    assert!(PairDataset::from_pairs(Vec::new(), 0, 64).is_err());
}

#[test]
fn mismatched_extractor_width_refused() {
    let mut cfg = small_config();
    cfg.random_extractors = false;
    let f1 = tintline::extractors::FeatureExtractor::local(16, 0).unwrap().with_random_weights(0);
    let f2 = tintline::extractors::FeatureExtractor::perceptual(128, 0).unwrap().with_random_weights(0);
    assert!(matches!(Trainer::with_extractors(cfg, f1, f2), Err(Error::ArchitectureMismatch { .. })));
}
