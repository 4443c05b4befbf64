//! Analysis constants, Lyapunov values, and per-iteration inequality checks
//! on recorded traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frank_wolfe::{Algorithm, RunTrace, StepKind};
use crate::geometry::{GeometryConstants, Polytope};
use crate::objectives::QuadraticObjective;
use crate::problem::Problem;

/// Relative slack on every checked inequality.
pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    pub epsilon: f64,
    pub eps_g: f64,
    pub diameter: f64,
    pub lipschitz: f64,
    pub mu: f64,
    pub m_bound: f64,
    pub n_vertices: usize,
    pub omega: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub nu: f64,
    pub delta_s: f64,
    pub delta_a: f64,
    pub pg_standard: f64,
    pub pg_away: f64,
    /// `1 − pg_standard` computed without cancellation.
    pub one_minus_pg_standard: f64,
    /// `1 − pg_away` computed without cancellation.
    pub one_minus_pg_away: f64,
}

/// Midpoint of the admissible interval `(0, 1/(4D))`.
pub fn default_eps_g(diameter: f64) -> f64 {
    1.0 / (8.0 * diameter)
}

pub fn compute_constants(
    obj: &QuadraticObjective,
    polytope: &Polytope,
    geo: &GeometryConstants,
    epsilon: f64,
    eps_g: f64,
) -> Result<AnalysisConstants> {
    let m_bound = obj.max_abs_value(polytope)?;
    constants_from_parts(epsilon, eps_g, geo, obj.lipschitz(), obj.mu(), m_bound)
}

pub fn constants_from_parts(
    epsilon: f64,
    eps_g: f64,
    geo: &GeometryConstants,
    lipschitz: f64,
    mu: f64,
    m_bound: f64,
) -> Result<AnalysisConstants> {
    let diam = geo.diameter;
    if !(epsilon > 0.0) {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    let upper = 1.0 / (4.0 * diam);
    if !(eps_g > 0.0 && eps_g < upper) {
        return Err(Error::EpsGOutOfRange { eps_g, upper });
    }
    let dd = diam * diam;
    let beta1 = (epsilon / (8.0 * lipschitz * dd)).min(0.25);

    let spread = 2.0 * eps_g * diam;
    let ratio = geo.omega / geo.n_vertices as f64;
    let beta2 = ((0.5 - spread) / (1.0 + spread))
        .min(ratio * ratio * mu * (0.5 - spread) / (8.0 * lipschitz * dd * (spread + 1.0).powi(2)));

    let b2e = beta2 * epsilon;
    let nu = 1.0 / (1.0 + b2e / 2.0);
    let delta_a = (b2e / 2.0) / (2.0 + b2e);
    let delta_s = beta1 * epsilon / 2.0;
    let one_minus_nu = (b2e / 2.0) / (1.0 + b2e / 2.0);
    assert!(
        delta_a > 0.0 && delta_a < (nu * b2e - one_minus_nu).min(one_minus_nu),
        "δ_A outside (0, min{{νβ₂ε − 1 + ν, 1 − ν}})"
    );

    // Standard: (e^{2M} − e^{−δ_S}) / (e^{2M} − e^{−β₁ε}).
    let b1e = beta1 * epsilon;
    let top = (2.0 * m_bound).exp();
    let one_minus_pg_standard =
        (-delta_s).exp() * (-(-(b1e - delta_s)).exp_m1()) / (top - (-b1e).exp());
    let pg_standard = (top - (-delta_s).exp()) / (top - (-b1e).exp());

    // Away: (E − e^{−δ_A}) / (E − m), E = e^{2Mν+1−ν},
    // m = max{e^{−νβ₂ε+1−ν}, e^{−(1−ν)}}.
    let top_a = (2.0 * m_bound * nu + one_minus_nu).exp();
    let log_m = (-nu * b2e + one_minus_nu).max(-one_minus_nu);
    let m = log_m.exp();
    let one_minus_pg_away = m * (-delta_a - log_m).exp_m1() / (top_a - m);
    let pg_away = (top_a - (-delta_a).exp()) / (top_a - m);

    Ok(AnalysisConstants {
        epsilon,
        eps_g,
        diameter: diam,
        lipschitz,
        mu,
        m_bound,
        n_vertices: geo.n_vertices,
        omega: geo.omega,
        beta1,
        beta2,
        nu,
        delta_s,
        delta_a,
        pg_standard,
        pg_away,
        one_minus_pg_standard,
        one_minus_pg_away,
    })
}

impl AnalysisConstants {
    pub fn for_problem(problem: &Problem, epsilon: f64, eps_g: f64) -> Result<Self> {
        constants_from_parts(
            epsilon,
            eps_g,
            &problem.geometry,
            problem.objective.lipschitz(),
            problem.objective.mu(),
            problem.m_bound,
        )
    }

    pub fn delta(&self, kind: Algorithm) -> f64 {
        match kind {
            Algorithm::Standard => self.delta_s,
            Algorithm::Away => self.delta_a,
        }
    }

    /// Upper bound on `E[T_ε]`: `log Φ₀ / δ`.
    pub fn mean_stopping_time_bound(
        &self,
        kind: Algorithm,
        initial_gap: f64,
        initial_active: usize,
    ) -> f64 {
        match kind {
            Algorithm::Standard => {
                let dd = self.diameter * self.diameter;
                let e = self.epsilon;
                2.0 * initial_gap * (8.0 * self.lipschitz * dd / (e * e)).max(4.0 / e)
            }
            Algorithm::Away => {
                let log_phi0 = self.nu * initial_gap + (1.0 - self.nu) * initial_active as f64;
                log_phi0 * (2.0 + 4.0 / (self.beta2 * self.epsilon))
            }
        }
    }
}

/// `Φ^(S) = exp(gap)`, `Φ^(A) = exp(ν·gap + (1 − ν)·N_k)`. Negative rounding
/// residue in `f_gap` is clamped to zero.
pub fn lyapunov(
    kind: Algorithm,
    f_gap: f64,
    active_size: usize,
    consts: &AnalysisConstants,
) -> f64 {
    lyapunov_log(kind, f_gap, active_size, consts).exp()
}

pub fn lyapunov_log(
    kind: Algorithm,
    f_gap: f64,
    active_size: usize,
    consts: &AnalysisConstants,
) -> f64 {
    let gap = f_gap.max(0.0);
    match kind {
        Algorithm::Standard => gap,
        Algorithm::Away => consts.nu * gap + (1.0 - consts.nu) * active_size as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckSummary {
    pub checked: usize,
    pub failed: usize,
    /// Smallest `rhs + tol − lhs` seen; negative means a violation.
    pub worst_margin: Option<f64>,
}

impl CheckSummary {
    fn record(&mut self, margin: f64) -> bool {
        self.checked += 1;
        self.worst_margin = Some(self.worst_margin.map_or(margin, |w| w.min(margin)));
        if margin < 0.0 {
            self.failed += 1;
            false
        } else {
            true
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub kind: Algorithm,
    /// Standard: `f(x_{k+1}) − f(x_k) ≤ −β₁ε`.
    pub decrease: CheckSummary,
    /// Away, no drop: `gap_{k+1} ≤ (1 − β₂)·gap_k`.
    pub contraction: CheckSummary,
    /// Away, drop: `gap_{k+1} ≤ gap_k`.
    pub drop_nonincrease: CheckSummary,
    /// Iterations whose checked inequality failed.
    pub flagged: Vec<usize>,
    pub good_iterations: usize,
    /// Empirical mean of `Φ_{k+1}/Φ_k` over good pre-stopping iterations.
    pub lyapunov_ratio_mean: Option<f64>,
    /// `e^{−δ}`; compared only in aggregate across replications.
    pub lyapunov_ratio_bound: f64,
}

impl VerifyReport {
    pub fn violations(&self) -> usize {
        self.decrease.failed + self.contraction.failed + self.drop_nonincrease.failed
    }
}

/// Checks every good, pre-stopping iteration of `trace` against the
/// per-iteration decrease inequality for `kind`.
pub fn verify_trace(
    trace: &RunTrace,
    consts: &AnalysisConstants,
    kind: Algorithm,
) -> Result<VerifyReport> {
    let recs = &trace.records;
    for (i, r) in recs.iter().enumerate() {
        if r.k != i {
            return Err(Error::MalformedTrace(format!("record {i} has k = {}", r.k)));
        }
        if r.step_type.is_some() && i + 1 == recs.len() {
            return Err(Error::MalformedTrace(format!(
                "step at k = {i} has no successor"
            )));
        }
    }
    if let Some(t) = trace.t_eps {
        let rec = recs.get(t).ok_or_else(|| {
            Error::MalformedTrace(format!("T_eps = {t} beyond {} records", recs.len()))
        })?;
        if rec.f_gap > consts.epsilon {
            return Err(Error::MalformedTrace(format!(
                "gap at T_eps = {t} exceeds epsilon"
            )));
        }
        if let Some(early) = recs[..t].iter().find(|r| r.f_gap <= consts.epsilon) {
            return Err(Error::MalformedTrace(format!(
                "gap already within epsilon at k = {} < T_eps",
                early.k
            )));
        }
    }
    let stop = trace.t_eps.unwrap_or(recs.len().saturating_sub(1));

    let mut report = VerifyReport {
        kind,
        decrease: CheckSummary::default(),
        contraction: CheckSummary::default(),
        drop_nonincrease: CheckSummary::default(),
        flagged: Vec::new(),
        good_iterations: 0,
        lyapunov_ratio_mean: None,
        lyapunov_ratio_bound: (-consts.delta(kind)).exp(),
    };
    let mut ratio_sum = 0.0;
    for k in 0..stop {
        let (cur, next) = (&recs[k], &recs[k + 1]);
        let Some(step) = cur.step_type else {
            return Err(Error::MalformedTrace(format!(
                "no step recorded at k = {k} < stop"
            )));
        };
        if !cur.good_event {
            continue;
        }
        report.good_iterations += 1;
        ratio_sum += next.lyapunov / cur.lyapunov;
        let tol = VERIFY_TOL * cur.f_gap.abs().max(1.0);
        let ok = match kind {
            Algorithm::Standard => {
                let lhs = next.f_gap - cur.f_gap;
                report
                    .decrease
                    .record(-consts.beta1 * consts.epsilon + tol - lhs)
            }
            Algorithm::Away if step == StepKind::AwayDrop => {
                report.drop_nonincrease.record(cur.f_gap + tol - next.f_gap)
            }
            Algorithm::Away => report
                .contraction
                .record((1.0 - consts.beta2) * cur.f_gap + tol - next.f_gap),
        };
        if !ok {
            report.flagged.push(k);
        }
    }
    if report.good_iterations > 0 {
        report.lyapunov_ratio_mean = Some(ratio_sum / report.good_iterations as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frank_wolfe::IterationRecord;
    use crate::geometry::Point;

    fn unit_geo(omega: f64, n: usize, diameter: f64) -> GeometryConstants {
        GeometryConstants {
            diameter,
            n_vertices: n,
            zeta: 1.0,
            phi: 1.0 / omega,
            omega,
        }
    }

    #[test]
    fn beta1_cases() {
        let geo = unit_geo(1.0, 4, 1.0);
        let c = constants_from_parts(4.0, 0.1, &geo, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.beta1, 0.25);
        let c = constants_from_parts(1.0, 0.1, &geo, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.beta1, 0.125);
    }

    #[test]
    fn beta2_box_frozen() {
        // Box [0,1]², Q = I, z = 0, ε_g = 1/8. Frozen from an independent
        // evaluation: min{0.10819418755438777, 3.1224002545557773e-4}.
        let p = Polytope::unit_box(2);
        let q = QuadraticObjective::new(&[1.0, 1.0], None, Point::zeros(2)).unwrap();
        let geo = p.geometry_constants().unwrap();
        let c = compute_constants(&q, &p, &geo, 0.1, 0.125).unwrap();
        assert!((c.beta2 - 3.1224002545557773e-4).abs() < 1e-18);
    }

    #[test]
    fn eps_g_range() {
        let geo = unit_geo(1.0, 4, 1.0);
        assert!(matches!(
            constants_from_parts(1.0, 0.25, &geo, 1.0, 1.0, 1.0),
            Err(Error::EpsGOutOfRange { .. })
        ));
        assert!(matches!(
            constants_from_parts(1.0, 0.0, &geo, 1.0, 1.0, 1.0),
            Err(Error::EpsGOutOfRange { .. })
        ));
    }

    #[test]
    fn doubling_epsilon_doubles_beta1_and_delta_s() {
        let geo = unit_geo(0.5, 5, 2.0);
        let a = constants_from_parts(0.01, 0.05, &geo, 3.0, 1.0, 2.0).unwrap();
        let b = constants_from_parts(0.02, 0.05, &geo, 3.0, 1.0, 2.0).unwrap();
        assert_eq!(b.beta1, 2.0 * a.beta1);
        assert_eq!(b.delta_s, 4.0 * a.delta_s);
        // δ_S = β₁ε/2 scales as ε² below the cap; at fixed β₁ it is linear in ε.
        assert_eq!(b.delta_s / b.beta1, 2.0 * a.delta_s / a.beta1);
    }

    #[test]
    fn pg_in_unit_interval_over_grid() {
        for &eps in &[1e-3, 0.01, 0.1, 1.0, 5.0] {
            for &m in &[1.0, 3.0, 10.0] {
                for &l in &[0.5, 4.0, 50.0] {
                    let geo = unit_geo(0.4, 6, 1.5);
                    let c = constants_from_parts(eps, 0.1, &geo, l, 0.5, m).unwrap();
                    for (pg, q) in [
                        (c.pg_standard, c.one_minus_pg_standard),
                        (c.pg_away, c.one_minus_pg_away),
                    ] {
                        // pg may round to 1; the complement stays positive.
                        assert!(
                            pg > 0.0 && pg <= 1.0 && q > 0.0 && q < 1.0,
                            "eps={eps} m={m} l={l}"
                        );
                        assert!((1.0 - pg - q).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn lyapunov_values() {
        let geo = unit_geo(1.0, 4, 1.0);
        let c = constants_from_parts(0.1, 0.1, &geo, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(lyapunov(Algorithm::Standard, 0.0, 3, &c), 1.0);
        assert_eq!(lyapunov(Algorithm::Standard, 2.0, 1, &c), 2f64.exp());
        assert_eq!(lyapunov(Algorithm::Away, 0.0, 1, &c), (1.0 - c.nu).exp());
        assert!(lyapunov(Algorithm::Standard, -1e-13, 1, &c) >= 1.0);
    }

    fn record(k: usize, gap: f64, step: Option<StepKind>) -> IterationRecord {
        IterationRecord {
            k,
            step_type: step,
            gamma: 0.1,
            gamma_max: 1.0,
            n_samples: 0,
            grad_error: 0.0,
            good_event: true,
            f_gap: gap,
            active_size: 1,
            lyapunov: gap.exp(),
        }
    }

    #[test]
    fn verify_flags_constructed_violation() {
        let geo = unit_geo(1.0, 4, 1.0);
        let c = constants_from_parts(0.1, 0.1, &geo, 1.0, 1.0, 1.0).unwrap();
        // β₁ε = 0.0125·0.1; a decrease of 1e-6 is too small.
        let trace = RunTrace {
            records: vec![
                record(0, 1.0, Some(StepKind::Fw)),
                record(1, 1.0 - 1e-6, None),
            ],
            t_eps: None,
            total_samples: 0,
            final_gap: 1.0 - 1e-6,
        };
        let r = verify_trace(&trace, &c, Algorithm::Standard).unwrap();
        assert_eq!(r.flagged, vec![0]);
        assert_eq!(r.violations(), 1);
    }

    #[test]
    fn verify_empty_and_malformed() {
        let geo = unit_geo(1.0, 4, 1.0);
        let c = constants_from_parts(0.1, 0.1, &geo, 1.0, 1.0, 1.0).unwrap();
        let trace = RunTrace {
            records: vec![record(0, 0.05, None)],
            t_eps: Some(0),
            total_samples: 0,
            final_gap: 0.05,
        };
        let r = verify_trace(&trace, &c, Algorithm::Away).unwrap();
        assert_eq!((r.violations(), r.good_iterations), (0, 0));

        let bad = RunTrace {
            records: vec![record(0, 1.0, Some(StepKind::Fw))],
            t_eps: None,
            total_samples: 0,
            final_gap: 1.0,
        };
        assert!(matches!(
            verify_trace(&bad, &c, Algorithm::Standard),
            Err(Error::MalformedTrace(_))
        ));
        let bad = RunTrace {
            records: vec![record(0, 0.01, Some(StepKind::Fw)), record(1, 0.005, None)],
            t_eps: Some(1),
            total_samples: 0,
            final_gap: 0.005,
        };
        assert!(matches!(
            verify_trace(&bad, &c, Algorithm::Standard),
            Err(Error::MalformedTrace(_))
        ));
    }
}
