use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NoiseModel;
use crate::error::{Error, Result};

/// Relative slack applied before taking the ceiling, so that a formula whose
/// exact value is an integer does not round up one extra sample.
const CEIL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Exact,
    Fixed,
    BoundedVarianceStandard,
    BoundedVarianceAway,
    SubgaussianStandard,
    SubgaussianAway,
}

/// A sampling rule plus the named constants its formula needs.
///
/// Recognized parameters: `n` (fixed), `epsilon`, `p_g` or `one_minus_p_g`,
/// `V_g`, `D`, `N`, `omega`, `eps_g`, `mu`, `c`, `c1`, `M`, `beta1`, `beta2`,
/// `d`. When both `p_g` and `one_minus_p_g` are present the latter wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub mode: SampleMode,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl SamplePlan {
    pub fn exact() -> Self {
        Self {
            mode: SampleMode::Exact,
            params: BTreeMap::new(),
        }
    }

    pub fn fixed(n: u64) -> Self {
        Self {
            mode: SampleMode::Fixed,
            params: BTreeMap::from([("n".to_string(), n as f64)]),
        }
    }

    pub fn new(mode: SampleMode) -> Self {
        Self {
            mode,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Inserts `key` only when the caller did not set it.
    pub fn with_default(mut self, key: &str, value: f64) -> Self {
        self.params.entry(key.to_string()).or_insert(value);
        self
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingParam(key.to_string()))
    }

    fn one_minus_p_g(&self) -> Result<f64> {
        let q = match self.params.get("one_minus_p_g") {
            Some(&q) => q,
            None => 1.0 - self.get("p_g")?,
        };
        if !(q > 0.0) {
            return Err(Error::NonpositiveDenominator(format!("1 − p_g = {q}")));
        }
        Ok(q)
    }

    /// `c₁ = (Ω/N)²·μ / (2(2ε_g D + 1)²)`, unless given directly.
    fn c1(&self) -> Result<f64> {
        if let Some(&c1) = self.params.get("c1") {
            return Ok(c1);
        }
        let ratio = self.get("omega")? / self.get("N")?;
        let widen = 2.0 * self.get("eps_g")? * self.get("D")? + 1.0;
        Ok(ratio * ratio * self.get("mu")? / (2.0 * widen * widen))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        if !(v > 0.0) {
            return Err(Error::NonpositiveDenominator(format!("{key} = {v}")));
        }
        Ok(v)
    }
}

fn ceil_count(value: f64) -> Result<u64> {
    if !value.is_finite() || value >= u64::MAX as f64 {
        return Err(Error::SampleSizeOverflow(value));
    }
    Ok((value * (1.0 - CEIL_SLACK)).ceil().max(1.0) as u64)
}

/// Per-iteration sample size for `plan`. `Exact` yields 0, meaning "use the
/// exact gradient".
pub fn plan_sample_size(plan: &SamplePlan) -> Result<u64> {
    match plan.mode {
        SampleMode::Exact => Ok(0),
        SampleMode::Fixed => {
            let n = plan.get("n")?;
            if !(n >= 1.0) {
                return Err(Error::NonpositiveDenominator(format!("n = {n}")));
            }
            ceil_count(n)
        }
        SampleMode::BoundedVarianceStandard => {
            let eps = plan.positive("epsilon")?;
            let d = plan.get("D")?;
            let q = plan.one_minus_p_g()?;
            ceil_count(16.0 * plan.get("V_g")? * d * d / (eps * eps * q))
        }
        SampleMode::BoundedVarianceAway => {
            let eps = plan.positive("epsilon")?;
            let q = plan.one_minus_p_g()?;
            let widen = 2.0 * plan.get("eps_g")? * plan.get("D")? + 1.0;
            let ratio = plan.get("N")? / plan.positive("omega")?;
            ceil_count(2.0 * plan.get("V_g")? * widen * widen / (q * eps) * ratio * ratio)
        }
        SampleMode::SubgaussianStandard => {
            let eps = plan.positive("epsilon")?;
            let c = plan.positive("c")?;
            let diam = plan.get("D")?;
            let dim = plan.get("d")?;
            let beta1 = plan.positive("beta1")?;
            let lead = 16.0 * diam * diam / (c * eps * eps);
            let value = lead * (2.0 * plan.get("M")? + 2.0 + (2.0 * dim).ln())
                + lead * (1.0 / (beta1 * eps)).ln();
            ceil_count(value)
        }
        SampleMode::SubgaussianAway => {
            let eps = plan.positive("epsilon")?;
            let c = plan.positive("c")?;
            let c1 = plan.c1()?;
            if !(c1 > 0.0) {
                return Err(Error::NonpositiveDenominator(format!("c1 = {c1}")));
            }
            let dim = plan.get("d")?;
            let beta2 = plan.positive("beta2")?;
            let numer = 2.0 * plan.get("M")? + 2.0 + (2.0 * dim).ln() - (beta2 * eps).ln();
            ceil_count(numer / (c * c1 * eps))
        }
    }
}

/// Caveats about the formula in use, e.g. the small-ε simplification behind
/// the sub-Gaussian away-step size.
pub fn plan_warnings(plan: &SamplePlan) -> Vec<String> {
    let mut out = Vec::new();
    if plan.mode == SampleMode::SubgaussianAway {
        if let Some(&eps) = plan.params.get("epsilon") {
            if eps > 0.1 {
                out.push(format!(
                    "subgaussian_away uses the small-epsilon bound 1 − p_g ≥ e^(−2M−2)·β₂ε; epsilon = {eps} > 0.1"
                ));
            }
        }
    }
    out
}

/// Largest `c` such that `2d·exp(−n c s²)` dominates every observed tail
/// frequency on the `(n, s)` grid. Returns `None` when no exceedance was
/// observed anywhere (the grid carries no information about `c`).
pub fn calibrate_subgaussian_c<R: Rng + ?Sized>(
    noise: &NoiseModel,
    d: usize,
    n_grid: &[u64],
    s_grid: &[f64],
    trials: usize,
    rng: &mut R,
) -> Option<f64> {
    let mut c: Option<f64> = None;
    for &n in n_grid {
        let norms: Vec<f64> = (0..trials)
            .map(|_| noise.draw_mean(d, n, rng).norm())
            .collect();
        for &s in s_grid {
            let hits = norms.iter().filter(|&&r| r >= s).count();
            if hits == 0 {
                continue;
            }
            let freq = hits as f64 / trials as f64;
            let cell = (2.0 * d as f64 / freq).ln() / (n as f64 * s * s);
            c = Some(c.map_or(cell, |cur: f64| cur.min(cell)));
        }
    }
    c
}
