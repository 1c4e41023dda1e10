use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use tch::Kind;
use tintline::evaluation::{embed_set, frechet_distance, ExtractorEmbedder, GaussianSummary};
use tintline::extractors::FeatureExtractor;
use tintline::rng::seeded;

fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| (0..d).map(|j| rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64 * 0.1)).collect())
        .collect()
}

fn diagonal(mean: Vec<f64>, var: Vec<f64>) -> GaussianSummary {
    GaussianSummary {
        mean: DVector::from_vec(mean),
        covariance: DMatrix::from_diagonal(&DVector::from_vec(var)),
        count: 100,
    }
}

#[test]
fn identical_sets_have_zero_distance() {
    for d in [1, 8, 64] {
        let s = GaussianSummary::from_embeddings(&gaussian_rows(200, d, d as u64)).unwrap();
        let fd = frechet_distance(&s, &s.clone()).unwrap().distance;
        assert!(fd.abs() <= 1e-6, "d={d}: {fd}");
    }
}

#[test]
fn diagonal_closed_form() {
    let mut rng = seeded(9);
    for d in [1usize, 8, 64] {
        let draw = |rng: &mut tintline::rng::SeededRng, lo: f64, hi: f64| (0..d).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
        let (ma, mb) = (draw(&mut rng, -2.0, 2.0), draw(&mut rng, -2.0, 2.0));
        let (va, vb) = (draw(&mut rng, 0.1, 3.0), draw(&mut rng, 0.1, 3.0));
        let expected: f64 = (0..d)
            .map(|i| (ma[i] - mb[i]).powi(2) + va[i] + vb[i] - 2.0 * (va[i] * vb[i]).sqrt())
            .sum();
        let got = frechet_distance(&diagonal(ma, va), &diagonal(mb, vb)).unwrap().distance;
        assert!((got - expected).abs() <= 1e-6, "d={d}: {got} vs {expected}");
    }
}

#[test]
fn distance_is_symmetric() {
    for d in [1, 8, 64] {
        let a = GaussianSummary::from_embeddings(&gaussian_rows(150, d, 1)).unwrap();
        let mut rows = gaussian_rows(120, d, 2);
        rows.iter_mut().for_each(|r| r[0] += 0.7);
        let b = GaussianSummary::from_embeddings(&rows).unwrap();
        let ab = frechet_distance(&a, &b).unwrap().distance;
        let ba = frechet_distance(&b, &a).unwrap().distance;
        assert!((ab - ba).abs() <= 1e-8, "d={d}: {ab} vs {ba}");
    }
}

fn random_images(count: usize, seed: u64) -> Vec<Array3<f32>> {
    let mut rng = seeded(seed);
    (0..count).map(|_| Array3::from_shape_simple_fn((3, 32, 32), || rng.random::<f32>())).collect()
}

#[test]
fn embedding_is_order_independent() {
    let f2 = FeatureExtractor::perceptual(16, 3).unwrap().with_random_weights(3).to_dtype(Kind::Double).unwrap();
    let images = random_images(6, 4);
    let mut reversed = images.clone();
    reversed.reverse();
    let a = embed_set(&images, &ExtractorEmbedder(&f2)).unwrap();
    let b = embed_set(&reversed, &ExtractorEmbedder(&f2)).unwrap();
    assert!((&a.mean - &b.mean).amax() <= 1e-9);
    assert!((&a.covariance - &b.covariance).amax() <= 1e-9);
    assert!(frechet_distance(&a, &b).unwrap().distance.abs() <= 1e-6);
}

#[test]
fn repeated_image_has_zero_covariance() {
    let f1 = FeatureExtractor::local(16, 5).unwrap().with_random_weights(5);
    let image = random_images(1, 6).remove(0);
    let s = embed_set(&[image.clone(), image.clone(), image], &ExtractorEmbedder(&f1)).unwrap();
    assert_eq!(s.dim(), 16);
    assert!(s.covariance.amax() <= 1e-12);
}

#[test]
fn single_image_is_refused() {
    let f1 = FeatureExtractor::local(16, 5).unwrap().with_random_weights(5);
    assert!(embed_set(&random_images(1, 7), &ExtractorEmbedder(&f1)).is_err());
}

fn orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    m.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariant_under_rotation_and_translation(d in 1usize..10, seed in any::<u64>(), shift in -3.0f64..3.0) {
        let rows_a = gaussian_rows(40, d, seed);
        let rows_b: Vec<Vec<f64>> = gaussian_rows(30, d, seed.wrapping_add(1)).into_iter().map(|r| r.iter().map(|v| v * 1.3 + 0.2).collect()).collect();
        let q = orthogonal(d, seed ^ 0xabc);
        let transform = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| (&q * DVector::from_column_slice(r)).iter().map(|v| v + shift).collect()).collect()
        };
        let base = frechet_distance(
            &GaussianSummary::from_embeddings(&rows_a).unwrap(),
            &GaussianSummary::from_embeddings(&rows_b).unwrap(),
        ).unwrap().distance;
        let moved = frechet_distance(
            &GaussianSummary::from_embeddings(&transform(&rows_a)).unwrap(),
            &GaussianSummary::from_embeddings(&transform(&rows_b)).unwrap(),
        ).unwrap().distance;
        prop_assert!(base >= 0.0);
        prop_assert!((base - moved).abs() <= 1e-8 * (1.0 + base), "{} vs {}", base, moved);
    }
}
