//! Content, adversarial and critic losses with the gradient penalty and drift term.
//!
//! Every function works on tensors and keeps the autograd graph, so the same
//! code serves training and the finite-difference checks.

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};
use crate::extractors::FeatureExtractor;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Weight of the adversarial term in the generator objective.
    pub adversarial: f64,
    /// Weight of the gradient penalty in the critic objective.
    pub gradient_penalty: f64,
    /// Weight of the squared real-score drift term.
    pub drift: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adversarial: 1e-4,
            gradient_penalty: 10.0,
            drift: 1e-3,
        }
    }
}

/// Scalar losses of one training iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub content: f64,
    pub adversarial: f64,
    pub critic: f64,
    pub gradient_penalty: f64,
    pub drift: f64,
    pub total_g: f64,
    pub total_d: f64,
    /// Mean critic score on real images.
    pub d_real: f64,
    /// Mean critic score on generated images.
    pub d_fake: f64,
}

impl LossReport {
    /// Names of non-finite fields.
    pub fn non_finite_fields(&self) -> Vec<&'static str> {
        [
            ("content", self.content),
            ("adversarial", self.adversarial),
            ("critic", self.critic),
            ("gradient_penalty", self.gradient_penalty),
            ("drift", self.drift),
            ("total_g", self.total_g),
            ("total_d", self.total_d),
            ("d_real", self.d_real),
            ("d_fake", self.d_fake),
        ]
        .into_iter()
        .filter(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
        .collect()
    }
}

/// `content + w_adv * adversarial`.
pub fn generator_total(content: f64, adversarial: f64, weights: &LossWeights) -> f64 {
    content + weights.adversarial * adversarial
}

/// `critic + gp + drift`; the penalty terms are already weighted.
pub fn discriminator_total(critic: f64, gradient_penalty: f64, drift: f64) -> f64 {
    critic + gradient_penalty + drift
}

/// Scalar value of `t`, or a `NonFinite` error naming `what`.
pub fn finite_value(t: &Tensor, what: &str) -> Result<f64> {
    let v = t.double_value(&[]);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} = {v}")))
    }
}

fn check_scores(scores: &Tensor, what: &'static str) -> Result<i64> {
    let size = scores.size();
    if size.len() != 1 {
        return Err(Error::arg(format!("{what} must be a vector of per-image scores, got {size:?}")));
    }
    if size[0] == 0 {
        return Err(Error::arg(format!("{what} is an empty batch")));
    }
    Ok(size[0])
}

/// Mean squared difference of two feature maps, i.e. `‖a − b‖² / (C·H·W)`
/// averaged over the batch.
pub fn feature_distance(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.size(), b.size());
    if sa != sb {
        return Err(Error::arg(format!("feature maps differ in shape: {sa:?} vs {sb:?}")));
    }
    if a.numel() == 0 {
        return Err(Error::arg("content loss of an empty batch"));
    }
    Ok((a - b).square().mean(a.kind()))
}

/// Perceptual content loss between generated and ground-truth images, both
/// `(N, 3, H, W)` in `[-1, 1]`. The target branch carries no gradient.
pub fn content_loss(f2: &FeatureExtractor, generated: &Tensor, truth: &Tensor) -> Result<Tensor> {
    if generated.size() != truth.size() {
        return Err(Error::arg(format!(
            "generated {:?} and ground truth {:?} differ in shape",
            generated.size(),
            truth.size()
        )));
    }
    let target = tch::no_grad(|| f2.forward(truth))?;
    feature_distance(&f2.forward(generated)?, &target)
}

/// Generator adversarial loss `−mean(D(fake))`.
pub fn adversarial_loss(fake_scores: &Tensor) -> Result<Tensor> {
    check_scores(fake_scores, "fake scores")?;
    Ok(-fake_scores.mean(fake_scores.kind()))
}

/// Critic loss `mean(D(fake)) − mean(D(real))`.
pub fn critic_loss(real_scores: &Tensor, fake_scores: &Tensor) -> Result<Tensor> {
    let nr = check_scores(real_scores, "real scores")?;
    let nf = check_scores(fake_scores, "fake scores")?;
    if nr != nf {
        return Err(Error::ShapeMismatch {
            what: "critic scores",
            dim: "batch",
            expected: nr,
            actual: nf,
        });
    }
    Ok(fake_scores.mean(fake_scores.kind()) - real_scores.mean(real_scores.kind()))
}

/// One mixing weight per batch item, uniform on `[0, 1]`.
pub fn sample_mixing_weights(n: usize, rng: &mut SeededRng) -> Tensor {
    use rand::Rng;
    let eps: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    Tensor::from_slice(&eps)
}

/// `eps·fake + (1 − eps)·real` with one `eps` per item.
pub fn interpolate(real: &Tensor, fake: &Tensor, eps: &Tensor) -> Result<Tensor> {
    if real.size() != fake.size() {
        return Err(Error::arg(format!(
            "real {:?} and fake {:?} differ in shape",
            real.size(),
            fake.size()
        )));
    }
    let n = real.size()[0];
    if eps.size() != [n] {
        return Err(Error::arg(format!("expected {n} mixing weights, got {:?}", eps.size())));
    }
    let mut shape = vec![n];
    shape.extend(std::iter::repeat_n(1, real.dim() - 1));
    let eps = eps.to_kind(real.kind()).view(shape.as_slice());
    Ok(&eps * fake + (1.0 - &eps) * real)
}

/// `weight · mean_i (‖∇ D(ŷ_i)‖₂ − 1)²`, gradients taken with respect to the
/// interpolated images only. The graph is kept so the penalty can be
/// differentiated with respect to the critic's parameters.
pub fn gradient_penalty<F>(critic: F, interpolated: &Tensor, weight: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let n = interpolated.size()[0];
    if n == 0 {
        return Err(Error::arg("gradient penalty of an empty batch"));
    }
    let y = interpolated.detach().set_requires_grad(true);
    let scores = critic(&y)?;
    check_scores(&scores, "interpolated scores")?;
    let grads = Tensor::run_backward(&[&scores.sum(scores.kind())], &[&y], true, true);
    let g = grads[0].view([n, -1]);
    // The tiny offset keeps the double backward finite when a gradient vanishes.
    let norms = (g.square().sum_dim_intlist(1, false, g.kind()) + 1e-12).sqrt();
    Ok((norms - 1.0).square().mean(g.kind()) * weight)
}

/// `weight · mean(D(real)²)`.
pub fn drift_penalty(real_scores: &Tensor, weight: f64) -> Result<Tensor> {
    check_scores(real_scores, "real scores")?;
    Ok(real_scores.square().mean(real_scores.kind()) * weight)
}

/// Central-difference gradient checks.
pub mod gradcheck {
    use super::*;
    use rand::Rng;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct GradSample {
        pub index: i64,
        pub analytic: f64,
        pub numeric: f64,
        /// One-sided slopes `(f(x+h) − f(x)) / h` and `(f(x) − f(x−h)) / h`.
        pub forward: f64,
        pub backward: f64,
    }

    impl GradSample {
        /// `|a − n| / max(|a|, |n|, floor)`.
        pub fn relative_error(&self, floor: f64) -> f64 {
            (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
        }

        /// Whether the one-sided slopes agree within `tol` (relative, with
        /// `floor`). A piecewise-linear activation switching inside
        /// `[x − h, x + h]` shows up as a jump between them; the central
        /// difference is then not an estimate of the derivative at `x`.
        /// Uses only function values, never the autograd gradient.
        pub fn is_smooth(&self, tol: f64, floor: f64) -> bool {
            (self.forward - self.backward).abs() <= tol * self.forward.abs().max(self.backward.abs()).max(floor)
        }
    }

    /// Outcome of [`check_random`].
    #[derive(Debug, Clone, Default)]
    pub struct RandomCheck {
        pub samples: Vec<GradSample>,
        /// Coordinates skipped because `f` was not smooth around them.
        pub rejected: Vec<GradSample>,
    }

    fn evaluate<F>(f: &F, x: &Tensor, indices: &[i64], h: f64) -> Result<Vec<GradSample>>
    where
        F: Fn(&Tensor) -> Result<Tensor>,
    {
        let x = x.detach().to_kind(Kind::Double).set_requires_grad(true);
        let y = f(&x)?;
        if y.numel() != 1 {
            return Err(Error::arg("gradient check needs a scalar function"));
        }
        let centre = y.double_value(&[]);
        let grad = Tensor::run_backward(&[&y], &[&x], false, false)[0].reshape([-1]);
        let base = x.detach().view([-1]);
        let eval = |delta: f64, i: i64| -> Result<f64> {
            let probe = base.copy();
            let _ = probe.get(i).g_add_scalar_(delta);
            // Not under no_grad: `f` may differentiate internally (gradient penalty).
            Ok(f(&probe.view(x.size().as_slice()))?.double_value(&[]))
        };
        indices
            .iter()
            .map(|&i| {
                let (up, down) = (eval(h, i)?, eval(-h, i)?);
                Ok(GradSample {
                    index: i,
                    analytic: grad.double_value(&[i]),
                    numeric: (up - down) / (2.0 * h),
                    forward: (up - centre) / h,
                    backward: (centre - down) / h,
                })
            })
            .collect()
    }

    /// Compare the autograd gradient of scalar `f` at `x` with central
    /// differences of step `h`, at the given flat indices of `x`.
    pub fn check<F>(f: F, x: &Tensor, indices: &[i64], h: f64) -> Result<Vec<GradSample>>
    where
        F: Fn(&Tensor) -> Result<Tensor>,
    {
        evaluate(&f, x, indices, h)
    }

    /// Draw coordinates of `x` uniformly until `count` of them pass
    /// [`GradSample::is_smooth`] with `kink_tol`, giving up after
    /// `max_draws` draws.
    pub fn check_random<F, R>(
        f: F,
        x: &Tensor,
        count: usize,
        h: f64,
        kink_tol: f64,
        max_draws: usize,
        rng: &mut R,
    ) -> Result<RandomCheck>
    where
        F: Fn(&Tensor) -> Result<Tensor>,
        R: Rng,
    {
        let n = x.numel() as i64;
        if n == 0 {
            return Err(Error::arg("gradient check on an empty tensor"));
        }
        let mut out = RandomCheck::default();
        let mut draws = 0;
        while out.samples.len() < count {
            if draws >= max_draws {
                return Err(Error::arg(format!(
                    "only {} of {count} coordinates were smooth after {max_draws} draws",
                    out.samples.len()
                )));
            }
            draws += 1;
            let sample = evaluate(&f, x, &[rng.random_range(0..n)], h)?[0];
            if sample.is_smooth(kink_tol, 1e-8) {
                out.samples.push(sample);
            } else {
                out.rejected.push(sample);
            }
        }
        Ok(out)
    }
}
