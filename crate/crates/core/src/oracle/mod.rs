//! Unbiased noisy gradient oracle and sample-size planning.
//!
//! Noise is additive, state-independent, and i.i.d. across coordinates and
//! draws. All randomness comes from a caller-supplied stream.

mod plan;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::objectives::QuadraticObjective;

pub use plan::{calibrate_subgaussian_c, plan_sample_size, plan_warnings, SampleMode, SamplePlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    StudentT { dof: u32, scale: f64 },
    Rademacher { scale: f64 },
}

impl NoiseModel {
    pub fn exact() -> Self {
        NoiseModel::Gaussian { sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(Error::InvalidNoise(format!("sigma = {sigma}")))
            }
            NoiseModel::StudentT { dof, .. } if dof < 3 => Err(Error::InvalidNoise(format!(
                "dof = {dof} < 3 has no finite variance"
            ))),
            NoiseModel::StudentT { scale, .. } | NoiseModel::Rademacher { scale }
                if !(scale.is_finite() && scale >= 0.0) =>
            {
                Err(Error::InvalidNoise(format!("scale = {scale}")))
            }
            _ => Ok(()),
        }
    }

    /// True when every draw equals the exact gradient.
    pub fn is_exact(&self) -> bool {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma == 0.0,
            NoiseModel::StudentT { scale, .. } | NoiseModel::Rademacher { scale } => scale == 0.0,
        }
    }

    /// `V_g = E‖G₁ − ∇f‖²` in dimension `d`.
    pub fn second_moment(&self, d: usize) -> f64 {
        let d = d as f64;
        match *self {
            NoiseModel::Gaussian { sigma } => d * sigma * sigma,
            NoiseModel::StudentT { dof, scale } => {
                let nu = dof as f64;
                d * scale * scale * nu / (nu - 2.0)
            }
            NoiseModel::Rademacher { scale } => d * scale * scale,
        }
    }

    /// Sub-Gaussian parameter `ρ` (per-coordinate parameter times `√d`);
    /// `None` for the heavy-tailed family.
    pub fn rho(&self, d: usize) -> Option<f64> {
        let sd = (d as f64).sqrt();
        match *self {
            NoiseModel::Gaussian { sigma } => Some(sigma * sd),
            NoiseModel::StudentT { .. } => None,
            NoiseModel::Rademacher { scale } => Some(scale * sd),
        }
    }

    /// One noise vector.
    pub fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Point {
        self.draw_mean(d, 1, rng)
    }

    /// Mean of `n ≥ 1` independent noise vectors.
    ///
    /// Gaussian and Rademacher means are drawn from their exact sampling
    /// distributions (`N(0, σ²/n)` and a scaled centered binomial), so the
    /// cost does not grow with `n`. Student-t draws are summed explicitly.
    pub fn draw_mean<R: Rng + ?Sized>(&self, d: usize, n: u64, rng: &mut R) -> Point {
        assert!(n >= 1, "sample mean needs n ≥ 1");
        if self.is_exact() {
            return Point::zeros(d);
        }
        let nf = n as f64;
        match *self {
            NoiseModel::Gaussian { sigma } => {
                let normal = Normal::new(0.0, sigma / nf.sqrt()).expect("finite sigma");
                Point::from_fn(d, |_, _| normal.sample(rng))
            }
            NoiseModel::Rademacher { scale } => {
                let binom = Binomial::new(n, 0.5).expect("valid binomial");
                Point::from_fn(d, |_, _| {
                    let heads = binom.sample(rng) as f64;
                    scale * (2.0 * heads - nf) / nf
                })
            }
            NoiseModel::StudentT { dof, scale } => {
                let t = StudentT::new(dof as f64).expect("dof ≥ 3");
                let mut acc = Point::zeros(d);
                for _ in 0..n {
                    for v in acc.iter_mut() {
                        *v += t.sample(rng);
                    }
                }
                acc * (scale / nf)
            }
        }
    }
}

/// `∇f(x) + η` for a single draw `η`.
pub fn draw_gradient<R: Rng + ?Sized>(
    obj: &QuadraticObjective,
    x: &Point,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Point> {
    Ok(obj.gradient(x)? + noise.draw(obj.dim(), rng))
}

/// Sample mean of `n` independent gradient draws; `n = 0` returns the exact
/// gradient.
pub fn estimate_gradient<R: Rng + ?Sized>(
    obj: &QuadraticObjective,
    x: &Point,
    noise: &NoiseModel,
    n: u64,
    rng: &mut R,
) -> Result<Point> {
    let grad = obj.gradient(x)?;
    if n == 0 {
        return Ok(grad);
    }
    Ok(grad + noise.draw_mean(obj.dim(), n, rng))
}

/// Chebyshev bound `min{1, V_g/(n s²)}` on `P(‖ḡ − ∇f‖ > s)`.
pub fn chebyshev_tail_bound(v_g: f64, n: u64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::NonpositiveS(s));
    }
    if n == 0 {
        return Ok(1.0);
    }
    Ok((v_g / (n as f64 * s * s)).min(1.0))
}

/// Sub-Gaussian tail bound `min{1, 2d·exp(−n c s²)}`.
pub fn subgaussian_tail_bound(d: usize, c: f64, n: u64, s: f64) -> f64 {
    (2.0 * d as f64 * (-(n as f64) * c * s * s).exp()).min(1.0)
}
