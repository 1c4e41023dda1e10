//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use image::{DynamicImage, GrayImage, Luma, RgbaImage};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use tch::{Device, Kind, Tensor};
use tintline::data::io::{encode_png, read_image, rgb_array};
use tintline::data::types::luma;
use tintline::data::{xdog_filter, Illustration, PairDataset, XdogParams};
use tintline::evaluation::{frechet_distance, GaussianSummary};
use tintline::extractors::FeatureExtractor;
use tintline::hints::{sample_training_hints, HintTensor};
use tintline::inference::{Colorizer, DEFAULT_MAX_SIDE};
use tintline::losses::gradcheck::{self, GradSample};
use tintline::losses::{adversarial_loss, content_loss, critic_loss, drift_penalty, gradient_penalty, LossReport};
use tintline::networks::{audit_layers, pixel_shuffle, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use tintline::nn::{Activation, ParamStore};
use tintline::rng::{seeded, SeededRng};
use tintline::tensor::{batch2, batch3};
use tintline::trainer::{Batch, TrainConfig, Trainer};
use tintline_service::{router, AppState, Lookup, ModelStore, ServiceConfig};
use tower::ServiceExt;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const F64: (Kind, Device) = (Kind::Double, Device::Cpu);
const F32: (Kind, Device) = (Kind::Float, Device::Cpu);

fn image_batch(n: i64, seed: i64) -> Tensor {
    tch::manual_seed(seed);
    Tensor::rand([n, 3, 64, 64], F64) * 2.0 - 1.0
}

fn worst(samples: &[GradSample]) -> f64 {
    samples.iter().map(|s| s.relative_error(1e-8)).fold(0.0, f64::max)
}

fn fd_random<F>(f: F, x: &Tensor, seed: u64, what: &str, lines: &mut Vec<String>) -> Result<(), String>
where
    F: Fn(&Tensor) -> tintline::Result<Tensor>,
{
    let mut rng = seeded(seed);
    let out = gradcheck::check_random(f, x, 10, 1e-3, 1e-2, 200, &mut rng).map_err(err)?;
    let e = worst(&out.samples);
    ensure(out.samples.len() >= 10 && e <= 1e-2, || format!("{what}: max rel err {e:.2e} over {}", out.samples.len()))?;
    lines.push(format!("{what} {e:.1e} ({} skipped)", out.rejected.len()));
    Ok(())
}

fn finite_differences() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();

    let f2 = FeatureExtractor::perceptual(32, 1).map_err(err)?.with_random_weights(1).to_dtype(Kind::Double).map_err(err)?;
    let truth = image_batch(2, 1);
    let gen = image_batch(2, 2);
    let mut rng = seeded(1);
    let idx: Vec<i64> = (0..10).map(|_| rng.random_range(0..gen.numel() as i64)).collect();
    let samples = gradcheck::check(|g| content_loss(&f2, g, &truth), &gen, &idx, 1e-3).map_err(err)?;
    let e = worst(&samples);
    ensure(e <= 1e-2, || format!("content: max rel err {e:.2e}"))?;
    lines.push(format!("content {e:.1e}"));

    let mut store = ParamStore::new(Kind::Double, 21);
    let cfg = DiscriminatorConfig {
        base_width: 8,
        depth_plan: [8, 16, 16, 16],
        blocks: 1,
        cardinality: 8,
        cond_channels: 4,
        ..Default::default()
    };
    let d = Discriminator::new(&mut store, &cfg).map_err(err)?;
    let features = Tensor::rand([2, 4, 4, 4], F64);
    let real = image_batch(2, 3);
    let fake = image_batch(2, 4);
    fd_random(|y| adversarial_loss(&d.forward(y, &features)?), &fake, 2, "adversarial", &mut lines)?;
    fd_random(
        |y| critic_loss(&d.forward(&real, &features)?, &d.forward(y, &features)?),
        &fake,
        3,
        "critic",
        &mut lines,
    )?;
    fd_random(|y| drift_penalty(&d.forward(y, &features)?, 1e-3), &real, 5, "drift", &mut lines)?;

    tch::manual_seed(11);
    let x = image_batch(2, 12);
    let w1 = Tensor::randn([6, 3, 3, 3], F64) * 0.3;
    let w2 = Tensor::randn([1, 6, 1, 1], F64) * 0.5;
    let penalty = |w: &Tensor| {
        gradient_penalty(
            |y| {
                let h = y.conv2d(w, None::<Tensor>, [2, 2], [1, 1], [1, 1], 1);
                let h = h.maximum(&(&h * 0.2));
                Ok((h * &w2).mean_dim([1i64, 2, 3].as_slice(), false, Kind::Double) * 50.0)
            },
            &x,
            10.0,
        )
    };
    fd_random(penalty, &w1, 7, "gp", &mut lines)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{}; {secs:.1}s", lines.join(", ")))
}

fn penalty_closed_form() -> Outcome {
    let y = image_batch(3, 5);
    let n = (3 * 64 * 64) as f64;
    let mut worst = 0.0f64;
    for k in [0.5, 1.0, 2.0] {
        let gp = gradient_penalty(
            |x| Ok(x.sum_dim_intlist([1i64, 2, 3].as_slice(), false, Kind::Double) * (k / n.sqrt())),
            &y,
            10.0,
        )
        .map_err(err)?
        .double_value(&[]);
        let diff = (gp - 10.0 * (k - 1.0) * (k - 1.0)).abs();
        ensure(diff <= 1e-4, || format!("k={k}: off by {diff:.2e}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn hint_density() -> Outcome {
    let y = Illustration::new(Array3::zeros((3, 4, 4)), "tiny").map_err(err)?;
    let mut rng = seeded(2024);
    let draws = 1_000_000;
    let mut active = 0usize;
    for _ in 0..draws {
        active += sample_training_hints(&y, &mut rng).map_err(err)?.active_cells();
    }
    let density = active as f64 / draws as f64;
    ensure((density - 0.0282).abs() <= 0.002, || format!("density {density:.5}"))?;
    Ok(format!("density {density:.5} over {draws} draws"))
}

fn xdog_binary() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/natural");
    let files = tintline::data::forge::list_images(&dir).map_err(err)?;
    ensure(files.len() == 20, || format!("{} fixtures", files.len()))?;
    let params = XdogParams {
        sigma: 0.4,
        kappa: 4.5,
        tau: 0.95,
        phi: 1e9,
        epsilon_t: 0.0,
    };
    let mut lowest = 1.0f64;
    for f in &files {
        let grey = luma(&rgb_array(&read_image(f).map_err(err)?));
        let line = xdog_filter(&grey, &params).map_err(err)?;
        let near = line.pixels.iter().filter(|&&v| v.abs() <= 1e-3 || (v - 1.0).abs() <= 1e-3).count();
        let fraction = near as f64 / line.pixels.len() as f64;
        ensure(fraction >= 0.99, || format!("{}: {fraction:.4}", f.display()))?;
        lowest = lowest.min(fraction);
    }
    let white = xdog_filter(&Array2::ones((64, 48)), &params).map_err(err)?;
    ensure(white.pixels.iter().all(|&v| v == 1.0), || "white input gained ink".into())?;
    Ok(format!("lowest near-binary fraction {lowest:.4}; white stays white"))
}

fn generator_structure() -> Outcome {
    let mut store = ParamStore::new(Kind::Float, 1);
    let cfg = GeneratorConfig::default();
    let g = Generator::new(&mut store, &cfg).map_err(err)?;
    let audit = audit_layers(&g.layers(), Some(Activation::Tanh));
    ensure(audit.is_clean(), || format!("{:?}", audit.violations))?;
    ensure(
        store.named().iter().all(|(n, _)| !n.contains("norm") && !n.contains("running")),
        || "normalization parameters present".into(),
    )?;
    let f1 = FeatureExtractor::local(cfg.feature_channels, 2).map_err(err)?.with_random_weights(2);
    let before = store.fingerprint();
    for side in [64i64, 128, 256] {
        tch::manual_seed(side);
        let x = Tensor::rand([1, 1, side, side], F32);
        let hints = Tensor::zeros([1, 4, side / 4, side / 4], F32);
        let y = tch::no_grad(|| -> tintline::Result<Tensor> { g.forward(&x, &hints, &f1.forward(&x)?) }).map_err(err)?;
        ensure(y.size() == vec![1, 3, side, side], || format!("side {side}: {:?}", y.size()))?;
        ensure(y.abs().max().double_value(&[]) <= 1.0, || format!("side {side}: output leaves [-1, 1]"))?;
    }
    ensure(store.fingerprint() == before, || "weights changed between sizes".into())?;
    Ok(format!("{} convolutions, tanh output, sides 64/128/256", audit.convolutions))
}

fn shuffle_identity() -> Outcome {
    let (c, h, w, r) = (8i64, 3i64, 5i64, 2i64);
    let input = Tensor::arange(c * h * w, F32).view([c, h, w]);
    let out = pixel_shuffle(&input, r).map_err(err)?;
    let mut checked = 0;
    for ci in 0..c / (r * r) {
        for y in 0..h * r {
            for x in 0..w * r {
                let src = ci * r * r + (y % r) * r + (x % r);
                let (got, want) = (out.double_value(&[ci, y, x]), input.double_value(&[src, y / r, x / r]));
                ensure(got == want, || format!("({ci},{y},{x}): {got} vs {want}"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} output positions"))
}

/// Every pair once, unaugmented, with one fixed hint draw.
fn fixed_batch(ds: &PairDataset, rng: &mut SeededRng) -> Result<Batch, String> {
    let hints = ds
        .pairs
        .iter()
        .map(|p| sample_training_hints(&p.illustration, rng))
        .collect::<tintline::Result<Vec<_>>>()
        .map_err(err)?;
    Ok(Batch {
        line: batch2(&ds.pairs.iter().map(|p| &p.line_art.pixels).collect::<Vec<_>>()),
        color: batch3(&ds.pairs.iter().map(|p| &p.illustration.pixels).collect::<Vec<_>>()),
        hints: HintTensor::batch(&hints),
    })
}

fn overfit() -> Outcome {
    let ds = PairDataset::synthetic(10, 64, 7).map_err(err)?;
    let mut cfg = TrainConfig::small(64);
    cfg.batch_size = ds.len();
    cfg.critic_updates = 0;
    cfg.weights.adversarial = 0.0;
    let mut trainer = Trainer::new(cfg).map_err(err)?;
    let batch = fixed_batch(&ds, &mut seeded(7))?;
    let mut at10 = f64::NAN;
    let mut last = f64::NAN;
    for it in 1..=2000 {
        last = trainer.train_step(&batch).map_err(err)?.content;
        if it == 10 {
            at10 = last;
        }
    }
    let ratio = last / at10;
    ensure(ratio <= 0.1, || format!("content {at10:.4} -> {last:.4} (ratio {ratio:.3})"))?;
    Ok(format!("content {at10:.4} -> {last:.4} (ratio {ratio:.3})"))
}

fn report_gap(a: &LossReport, b: &LossReport) -> f64 {
    [
        (a.content, b.content),
        (a.adversarial, b.adversarial),
        (a.critic, b.critic),
        (a.gradient_penalty, b.gradient_penalty),
        (a.drift, b.drift),
        (a.d_real, b.d_real),
        (a.d_fake, b.d_fake),
    ]
    .iter()
    .map(|(x, y)| (x - y).abs())
    .fold(0.0, f64::max)
}

fn adversarial_smoke() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let ds = PairDataset::synthetic(16, 64, 11).map_err(err)?;
    let mut trainer = Trainer::new(TrainConfig::small(64)).map_err(err)?;
    let ckpt = tmp.path().join("at100.ckpt");
    let mut reports = Vec::with_capacity(500);
    for it in 1..=500u64 {
        let r = trainer.step(&ds).map_err(|e| format!("iteration {it}: {e}"))?;
        let bad = r.non_finite_fields();
        ensure(bad.is_empty(), || format!("iteration {it}: non-finite {bad:?}"))?;
        reports.push(r);
        if it == 100 {
            trainer.save(&ckpt).map_err(err)?;
        }
    }
    let gap = reports[450..].iter().map(|r| (r.d_real - r.d_fake).abs()).sum::<f64>() / 50.0;

    let mut resumed = Trainer::resume(&ckpt).map_err(err)?;
    ensure(resumed.iteration() == 100, || format!("resumed at {}", resumed.iteration()))?;
    let mut drift = 0.0f64;
    for it in 101..=110usize {
        let r = resumed.step(&ds).map_err(err)?;
        drift = drift.max(report_gap(&r, &reports[it - 1]));
    }
    ensure(drift <= 1e-6, || format!("resume differs by {drift:.2e}"))?;
    Ok(format!(
        "500 finite iterations; mean |D(real)-D(fake)| over last 50 = {gap:.4}; resume max diff {drift:.1e}"
    ))
}

fn frechet() -> Outcome {
    let rows = |n: usize, d: usize, seed: u64, shift: f64| -> Vec<Vec<f64>> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64 * 0.1) + if j == 0 { shift } else { 0.0 })
                    .collect()
            })
            .collect()
    };
    let mut rng = seeded(9);
    let (mut ident, mut closed, mut sym) = (0.0f64, 0.0f64, 0.0f64);
    for d in [1usize, 8, 64] {
        let a = GaussianSummary::from_embeddings(&rows(200, d, d as u64, 0.0)).map_err(err)?;
        ident = ident.max(frechet_distance(&a, &a.clone()).map_err(err)?.distance.abs());

        let mut draw = |lo: f64, hi: f64| (0..d).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
        let (ma, mb, va, vb) = (draw(-2.0, 2.0), draw(-2.0, 2.0), draw(0.1, 3.0), draw(0.1, 3.0));
        let expected: f64 = (0..d)
            .map(|i| (ma[i] - mb[i]).powi(2) + va[i] + vb[i] - 2.0 * (va[i] * vb[i]).sqrt())
            .sum();
        let diag = |m: &[f64], v: &[f64]| GaussianSummary {
            mean: DVector::from_column_slice(m),
            covariance: DMatrix::from_diagonal(&DVector::from_column_slice(v)),
            count: 100,
        };
        let got = frechet_distance(&diag(&ma, &va), &diag(&mb, &vb)).map_err(err)?.distance;
        closed = closed.max((got - expected).abs());

        let b = GaussianSummary::from_embeddings(&rows(120, d, 2, 0.7)).map_err(err)?;
        let ab = frechet_distance(&a, &b).map_err(err)?.distance;
        let ba = frechet_distance(&b, &a).map_err(err)?.distance;
        sym = sym.max((ab - ba).abs());
    }
    ensure(ident <= 1e-6, || format!("identical sets {ident:.2e}"))?;
    ensure(closed <= 1e-6, || format!("diagonal closed form off by {closed:.2e}"))?;
    ensure(sym <= 1e-8, || format!("asymmetry {sym:.2e}"))?;
    Ok(format!("identical {ident:.1e}, diagonal {closed:.1e}, symmetry {sym:.1e}"))
}

const BOUNDARY: &str = "XacceptanceX";

fn multipart(fields: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, bytes) in fields {
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.png\"\r\nContent-Type: image/png\r\n\r\n")
                .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

fn cli_matches_service() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let dir = tmp.path();
    let models = dir.join("models");
    std::fs::create_dir_all(&models).map_err(err)?;
    let ckpt = models.join("small.ckpt");
    Trainer::new(TrainConfig::small(64)).map_err(err)?.save(&ckpt).map_err(err)?;

    let (w, h) = (100u32, 72u32);
    let line = GrayImage::from_fn(w, h, |x, y| Luma([if (x * 3 + y) % 23 == 0 { 0 } else { 250 }]));
    let line_png = encode_png(&DynamicImage::ImageLuma8(line)).map_err(err)?;
    let mut strokes = RgbaImage::new(w, h);
    for y in 8..30 {
        for x in 10..40 {
            strokes.put_pixel(x, y, image::Rgba([200, 40, 90, 255]));
        }
    }
    let strokes_png = encode_png(&DynamicImage::ImageRgba8(strokes)).map_err(err)?;
    let blank_png = encode_png(&DynamicImage::ImageRgba8(RgbaImage::new(w, h))).map_err(err)?;
    std::fs::write(dir.join("line.png"), &line_png).map_err(err)?;
    std::fs::write(dir.join("strokes.png"), &strokes_png).map_err(err)?;

    let out = dir.join("cli.png");
    let status = Command::new(env!("CARGO_BIN_EXE_tintline"))
        .args(["colorize", "--line"])
        .arg(dir.join("line.png"))
        .arg("--strokes")
        .arg(dir.join("strokes.png"))
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(err)?;
    ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
    let cli_png = std::fs::read(&out).map_err(err)?;

    let store = Arc::new(ModelStore::scan(&models, 1).map_err(err)?);
    ensure(matches!(store.wait_ready("small", Duration::from_secs(60)), Lookup::Ready(_)), || "model not ready".into())?;
    let config = ServiceConfig {
        model_dir: models.clone(),
        ..Default::default()
    };
    let app = router(AppState::new(config, store));
    let runtime = tokio::runtime::Runtime::new().map_err(err)?;
    let (status, service_png) = runtime.block_on(async {
        let req = Request::post("/v1/colorize")
            .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
            .header(header::ACCEPT, "image/png")
            .body(Body::from(multipart(&[("line_art", &line_png), ("strokes", &strokes_png)])))
            .unwrap();
        let resp = app.oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    });
    ensure(status == StatusCode::OK, || format!("service returned {status}"))?;
    ensure(cli_png == service_png, || format!("{} vs {} bytes differ", cli_png.len(), service_png.len()))?;

    let model = Colorizer::load(&ckpt).map_err(err)?;
    let (_, none) = model.colorize_png(&line_png, None, DEFAULT_MAX_SIDE).map_err(err)?;
    let (_, blank) = model.colorize_png(&line_png, Some(&blank_png), DEFAULT_MAX_SIDE).map_err(err)?;
    for (what, hints) in [("no stroke layer", &none.hints), ("transparent layer", &blank.hints)] {
        ensure(hints.to_array().iter().all(|&v| v == 0.0), || format!("{what}: hint tensor not zero"))?;
    }
    Ok(format!("{} identical PNG bytes; zero-stroke hints all zero", cli_png.len()))
}

fn main() {
    let criteria: &[(&str, fn() -> Outcome)] = &[
        ("finite-difference gradients", finite_differences),
        ("gradient penalty closed form", penalty_closed_form),
        ("hint density", hint_density),
        ("xdog near-binary output", xdog_binary),
        ("generator structure", generator_structure),
        ("pixel shuffle identity", shuffle_identity),
        ("overfit ten pairs", overfit),
        ("adversarial smoke and resume", adversarial_smoke),
        ("frechet distance", frechet),
        ("cli and service agree", cli_matches_service),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
