use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stats::{binomial_std_err, fit_line};
use crate::error::{Error, Result};
use crate::geometry::{Point, Polytope};
use crate::objectives::QuadraticObjective;
use crate::oracle::{chebyshev_tail_bound, estimate_gradient, subgaussian_tail_bound, NoiseModel};

/// Cells whose frequency exceeds the Chebyshev bound by more than this many
/// standard errors are flagged.
pub const VIOLATION_STD_ERRS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCell {
    pub n: u64,
    pub s: f64,
    pub exceedances: usize,
    pub frequency: f64,
    pub std_err: f64,
    pub chebyshev_bound: f64,
    /// `2d·exp(−n c s²)` for sub-Gaussian families.
    pub subgaussian_bound: Option<f64>,
    pub violation: bool,
}

/// Fit of `log frequency = a + slope·n` at fixed `s`, over nonzero cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub s: f64,
    pub points: usize,
    pub slope: f64,
    pub r2: f64,
    /// `−slope / s²`.
    pub c_fit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub noise: NoiseModel,
    pub dim: usize,
    pub v_g: f64,
    /// `1/(2ρ²)`; absent for heavy tails.
    pub c: Option<f64>,
    pub trials: usize,
    pub cells: Vec<ConcentrationCell>,
    pub fits: Vec<ExponentialFit>,
    pub violations: usize,
}

/// Empirical `P(‖ḡ − ∇f(x)‖ > s)` on an `(n, s)` grid at the vertex centroid
/// of `polytope`.
pub fn concentration_experiment<R: Rng + ?Sized>(
    obj: &QuadraticObjective,
    polytope: &Polytope,
    noise: &NoiseModel,
    n_grid: &[u64],
    s_grid: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<ConcentrationReport> {
    if trials < 1000 {
        return Err(Error::config("trials", format!("{trials} < 1000")));
    }
    if let Some(&s) = s_grid.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::NonpositiveS(s));
    }
    if n_grid.contains(&0) {
        return Err(Error::config("n_grid", "sample sizes must be at least 1"));
    }
    noise.validate()?;
    let d = obj.dim();
    let mut x = Point::zeros(d);
    for v in polytope.vertices() {
        x += v;
    }
    x /= polytope.vertices().len() as f64;
    let exact = obj.gradient(&x)?;
    let v_g = noise.second_moment(d);
    let c = noise
        .rho(d)
        .filter(|r| *r > 0.0)
        .map(|r| 1.0 / (2.0 * r * r));

    let mut cells = Vec::new();
    for &n in n_grid {
        let mut errs = Vec::with_capacity(trials);
        for _ in 0..trials {
            errs.push((estimate_gradient(obj, &x, noise, n, rng)? - &exact).norm());
        }
        for &s in s_grid {
            let hits = errs.iter().filter(|&&e| e > s).count();
            let freq = hits as f64 / trials as f64;
            let std_err = binomial_std_err(freq, trials);
            let cheb = chebyshev_tail_bound(v_g, n, s)?;
            cells.push(ConcentrationCell {
                n,
                s,
                exceedances: hits,
                frequency: freq,
                std_err,
                chebyshev_bound: cheb,
                subgaussian_bound: c.map(|c| subgaussian_tail_bound(d, c, n, s)),
                violation: freq > cheb + VIOLATION_STD_ERRS * std_err,
            });
        }
    }

    let mut fits = Vec::new();
    for &s in s_grid {
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.s == s && c.exceedances > 0)
            .map(|c| (c.n as f64, c.frequency.ln()))
            .collect();
        if pts.len() < 3 {
            continue;
        }
        if let Ok(fit) = fit_line(&pts) {
            fits.push(ExponentialFit {
                s,
                points: pts.len(),
                slope: fit.slope,
                r2: fit.r2,
                c_fit: -fit.slope / (s * s),
            });
        }
    }
    let violations = cells.iter().filter(|c| c.violation).count();
    Ok(ConcentrationReport {
        noise: *noise,
        dim: d,
        v_g,
        c,
        trials,
        cells,
        fits,
        violations,
    })
}

/// Writes `concentration.csv` and `concentration.json` into `dir`.
pub fn write_concentration(dir: &Path, report: &ConcentrationReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("concentration.csv"))?;
    for cell in &report.cells {
        w.serialize(cell)?;
    }
    w.flush()?;
    fs::write(
        dir.join("concentration.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}
