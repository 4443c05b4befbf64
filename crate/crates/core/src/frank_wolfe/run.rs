use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{away_fw_step, away_vertex, standard_fw_step, ActiveSet, StepKind};
use crate::diagnostics::{default_eps_g, lyapunov, AnalysisConstants};
use crate::error::{Error, Result};
use crate::geometry::{Point, Polytope};
use crate::oracle::{estimate_gradient, NoiseModel};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Standard,
    Away,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Standard => "standard",
            Algorithm::Away => "away",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub algorithm: Algorithm,
    pub epsilon: f64,
    /// Defaults to `1/(8D)`.
    pub eps_g: Option<f64>,
    pub max_iter: usize,
    /// Gradient draws per iteration; 0 means the exact gradient.
    pub n_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `None` on the final record, where no step was taken.
    pub step_type: Option<StepKind>,
    pub gamma: f64,
    pub gamma_max: f64,
    pub n_samples: u64,
    /// `‖ĝ_k − ∇f(x_k)‖`.
    pub grad_error: f64,
    pub good_event: bool,
    pub f_gap: f64,
    pub active_size: usize,
    pub lyapunov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    /// First `k` with `f(x_k) − f* ≤ ε`; `None` if the run hit `max_iter`.
    pub t_eps: Option<usize>,
    pub total_samples: u64,
    pub final_gap: f64,
}

impl RunTrace {
    /// Fraction of steps taken under the good gradient event.
    pub fn good_event_rate(&self) -> f64 {
        let steps: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.step_type.is_some())
            .collect();
        if steps.is_empty() {
            return 1.0;
        }
        steps.iter().filter(|r| r.good_event).count() as f64 / steps.len() as f64
    }
}

/// What an observer sees at each iterate, before the step is taken.
pub struct IterateView<'a> {
    pub k: usize,
    pub active: &'a ActiveSet,
    pub f_gap: f64,
}

/// Starting vertex `argmin_{v} 1ᵀv`, smallest id on ties.
pub fn initial_vertex(polytope: &Polytope) -> Result<(usize, &Point)> {
    polytope.lmo(&Point::from_element(polytope.dim(), 1.0))
}

pub fn run<R: Rng + ?Sized>(
    problem: &Problem,
    settings: &RunSettings,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<RunTrace> {
    run_observed(problem, settings, noise, rng, |_| {})
}

/// Runs until the gap reaches `ε` or `max_iter` steps were taken, calling
/// `observe` on every iterate.
pub fn run_observed<R, F>(
    problem: &Problem,
    settings: &RunSettings,
    noise: &NoiseModel,
    rng: &mut R,
    mut observe: F,
) -> Result<RunTrace>
where
    R: Rng + ?Sized,
    F: FnMut(&IterateView),
{
    noise.validate()?;
    let polytope = &problem.polytope;
    let obj = &problem.objective;
    let diam = problem.geometry.diameter;
    let eps = settings.epsilon;
    let eps_g = settings.eps_g.unwrap_or_else(|| default_eps_g(diam));
    let consts = AnalysisConstants::for_problem(problem, eps, eps_g)?;
    let kind = settings.algorithm;
    let n = settings.n_samples;

    let (id, v) = initial_vertex(polytope)?;
    let mut active = ActiveSet::singleton(id, v);
    let mut records = Vec::new();
    let mut total_samples = 0u64;
    let mut t_eps = None;

    for k in 0.. {
        let x = active.point().clone();
        let f_gap = problem.gap(&x)?;
        let size = active.len();
        let lyap = lyapunov(kind, f_gap, size, &consts);
        observe(&IterateView {
            k,
            active: &active,
            f_gap,
        });
        let terminal = |records: &mut Vec<IterationRecord>| {
            records.push(IterationRecord {
                k,
                step_type: None,
                gamma: 0.0,
                gamma_max: 0.0,
                n_samples: 0,
                grad_error: 0.0,
                good_event: true,
                f_gap,
                active_size: size,
                lyapunov: lyap,
            })
        };
        if f_gap <= eps {
            terminal(&mut records);
            t_eps = Some(k);
            break;
        }
        if k >= settings.max_iter {
            terminal(&mut records);
            break;
        }

        let exact = obj.gradient(&x)?;
        let g = estimate_gradient(obj, &x, noise, n, rng)?;
        let grad_error = (&g - &exact).norm();
        total_samples += n;

        let (step_type, gamma, gamma_max, good_event) = match kind {
            Algorithm::Standard => {
                let (x_next, info) =
                    standard_fw_step(&x, &g, polytope, eps, obj.lipschitz(), diam)?;
                active.apply_fw(info.fw_vertex, info.gamma, x_next);
                (
                    info.kind,
                    info.gamma,
                    info.gamma_max,
                    grad_error <= eps / (4.0 * diam),
                )
            }
            Algorithm::Away => match away_fw_step(&active, &g, polytope, obj.lipschitz()) {
                Ok((next, info)) => {
                    active = next;
                    (
                        info.kind,
                        info.gamma,
                        info.gamma_max,
                        grad_error <= eps_g * info.pair_gap,
                    )
                }
                // Both candidate directions vanish: x is a vertex that the
                // estimated gradient already favors. Stay put.
                Err(Error::DegenerateDirection(_)) => {
                    let (_, s) = polytope.lmo(&g)?;
                    let v = &polytope.vertices()[away_vertex(&active, &g, polytope)];
                    let pair_gap = g.dot(v) - g.dot(s);
                    (StepKind::Fw, 0.0, 1.0, grad_error <= eps_g * pair_gap)
                }
                Err(e) => return Err(e),
            },
        };
        records.push(IterationRecord {
            k,
            step_type: Some(step_type),
            gamma,
            gamma_max,
            n_samples: n,
            grad_error,
            good_event,
            f_gap,
            active_size: size,
            lyapunov: lyap,
        });
    }

    let final_gap = records.last().map_or(f64::NAN, |r| r.f_gap);
    Ok(RunTrace {
        records,
        t_eps,
        total_samples,
        final_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::verify_trace;
    use crate::geometry::Polytope;
    use crate::objectives::{random_rotation, QuadraticObjective};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn five_dim_problem() -> Problem {
        let obj = QuadraticObjective::new(
            &[1.0, 1.75, 2.5, 3.25, 4.0],
            Some(random_rotation(5, 7)),
            Point::from_vec(vec![0.6, 0.5, -0.2, 0.3, 0.1]),
        )
        .unwrap();
        Problem::new(Polytope::unit_simplex(5), obj).unwrap()
    }

    fn settings(algorithm: Algorithm, n_samples: u64) -> RunSettings {
        RunSettings {
            algorithm,
            epsilon: 0.05,
            eps_g: None,
            max_iter: 100_000,
            n_samples,
        }
    }

    /// Away-step Frank-Wolfe written against plain vectors: weights indexed
    /// by vertex id, no shared step code.
    fn naive_away(p: &Problem, iters: usize) -> Vec<Vec<f64>> {
        let verts: Vec<Vec<f64>> = p
            .polytope
            .vertices()
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let nv = verts.len();
        let start = (0..nv)
            .min_by(|&i, &j| {
                verts[i]
                    .iter()
                    .sum::<f64>()
                    .partial_cmp(&verts[j].iter().sum::<f64>())
                    .unwrap()
            })
            .unwrap();
        let mut w = vec![0.0; nv];
        w[start] = 1.0;
        let mut out = Vec::new();
        for _ in 0..iters {
            let x: Vec<f64> = (0..p.dim())
                .map(|c| (0..nv).map(|i| w[i] * verts[i][c]).sum())
                .collect();
            out.push(x.clone());
            let g: Vec<f64> = p
                .objective
                .gradient(&Point::from_vec(x.clone()))
                .unwrap()
                .iter()
                .copied()
                .collect();
            let s = (0..nv)
                .min_by(|&i, &j| dot(&g, &verts[i]).partial_cmp(&dot(&g, &verts[j])).unwrap())
                .unwrap();
            let v = (0..nv)
                .filter(|&i| w[i] > 0.0)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dot(&g, &verts[b]) >= dot(&g, &verts[i]) => Some(b),
                    _ => Some(i),
                })
                .unwrap();
            let gx = dot(&g, &x);
            let (fw_dec, aw_dec) = (gx - dot(&g, &verts[s]), dot(&g, &verts[v]) - gx);
            let l = p.objective.lipschitz();
            if fw_dec >= aw_dec {
                let d2: f64 = (0..x.len()).map(|c| (verts[s][c] - x[c]).powi(2)).sum();
                let gamma = (fw_dec / (l * d2)).min(1.0);
                for wi in w.iter_mut() {
                    *wi *= 1.0 - gamma;
                }
                w[s] += gamma;
            } else {
                let d2: f64 = (0..x.len()).map(|c| (x[c] - verts[v][c]).powi(2)).sum();
                let gmax = w[v] / (1.0 - w[v]);
                let gamma = (aw_dec / (l * d2)).min(gmax);
                for wi in w.iter_mut() {
                    *wi *= 1.0 + gamma;
                }
                w[v] -= gamma;
                if gamma == gmax {
                    w[v] = 0.0;
                }
            }
            for wi in w.iter_mut() {
                if *wi <= 1e-12 {
                    *wi = 0.0;
                }
            }
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= sum);
        }
        out
    }

    #[test]
    fn matches_independent_away_implementation() {
        let p = five_dim_problem();
        let mut s = settings(Algorithm::Away, 0);
        s.epsilon = 1e-12;
        s.max_iter = 20;
        let mut iterates = Vec::new();
        run_observed(
            &p,
            &s,
            &NoiseModel::exact(),
            &mut ChaCha8Rng::seed_from_u64(0),
            |view| iterates.push(view.active.point().clone()),
        )
        .unwrap();
        let naive = naive_away(&p, 20);
        for (k, (a, b)) in iterates.iter().zip(&naive).enumerate() {
            let diff = (a - Point::from_vec(b.clone())).norm();
            assert!(diff < 1e-10, "iterate {k} differs by {diff}");
        }
    }

    #[test]
    fn exact_runs_reach_epsilon_without_violations() {
        let p = five_dim_problem();
        for alg in [Algorithm::Standard, Algorithm::Away] {
            let s = settings(alg, 0);
            let trace = run(
                &p,
                &s,
                &NoiseModel::exact(),
                &mut ChaCha8Rng::seed_from_u64(1),
            )
            .unwrap();
            let t = trace.t_eps.expect("exact run converges");
            assert_eq!(t + 1, trace.records.len());
            assert!(trace.final_gap <= 0.05);
            let consts =
                AnalysisConstants::for_problem(&p, 0.05, default_eps_g(p.geometry.diameter))
                    .unwrap();
            let report = verify_trace(&trace, &consts, alg).unwrap();
            assert_eq!(report.violations(), 0, "{alg:?}");
            assert_eq!(report.good_iterations, t);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let p = five_dim_problem();
        let s = settings(Algorithm::Away, 50);
        let noise = NoiseModel::Gaussian { sigma: 0.3 };
        let a = run(&p, &s, &noise, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = run(&p, &s, &noise, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_samples, 50 * a.t_eps.unwrap() as u64);
    }

    #[test]
    fn iterates_stay_feasible_under_noise() {
        let p = five_dim_problem();
        let noise = NoiseModel::StudentT { dof: 3, scale: 0.5 };
        for alg in [Algorithm::Standard, Algorithm::Away] {
            let mut s = settings(alg, 4);
            s.max_iter = 300;
            let mut worst: f64 = 0.0;
            let mut healthy = true;
            run_observed(&p, &s, &noise, &mut ChaCha8Rng::seed_from_u64(3), |view| {
                worst = worst.max(p.polytope.max_violation(view.active.point()));
                healthy &= view.active.health(&p.polytope).is_valid();
            })
            .unwrap();
            assert!(worst <= 1e-9, "{alg:?} violation {worst}");
            assert!(healthy);
        }
    }

    #[test]
    fn max_iter_censors() {
        let p = five_dim_problem();
        let mut s = settings(Algorithm::Standard, 0);
        s.max_iter = 3;
        let trace = run(
            &p,
            &s,
            &NoiseModel::exact(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(trace.t_eps, None);
        assert_eq!(trace.records.len(), 4);
        assert!(trace.records[3].step_type.is_none());
    }
}
