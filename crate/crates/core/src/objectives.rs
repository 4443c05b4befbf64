//! Strongly convex quadratic test objectives `f(x) = ½(x − z)ᵀQ(x − z)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frank_wolfe::{away_fw_step, initial_vertex, ActiveSet};
use crate::geometry::{Point, Polytope};

/// Iteration cap for the reference solver.
pub const REFERENCE_MAX_ITER: usize = 10_000_000;
/// Relative duality-gap target for the reference solver.
pub const REFERENCE_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    eigenvalues: Vec<f64>,
    rotation: DMatrix<f64>,
    hessian: DMatrix<f64>,
    center: Point,
    lipschitz: f64,
    mu: f64,
}

/// JSON form: `{"eigenvalues": [...], "rotation_seed": int|null, "z": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub eigenvalues: Vec<f64>,
    #[serde(default)]
    pub rotation_seed: Option<u64>,
    pub z: Vec<f64>,
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<QuadraticObjective> {
        let d = self.eigenvalues.len();
        let rotation = self.rotation_seed.map(|seed| random_rotation(d, seed));
        QuadraticObjective::new(
            &self.eigenvalues,
            rotation,
            Point::from_column_slice(&self.z),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x_star: Point,
    pub f_star: f64,
    /// Upper bound on `f(x_star) − min f`.
    pub certified_gap: f64,
    pub iterations: usize,
}

/// Haar-distributed orthogonal matrix from a seeded Gaussian QR.
pub fn random_rotation(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl QuadraticObjective {
    /// `Q = R diag(λ) Rᵀ`; `rotation = None` means `R = I`.
    pub fn new(eigenvalues: &[f64], rotation: Option<DMatrix<f64>>, z: Point) -> Result<Self> {
        let d = eigenvalues.len();
        if d == 0 {
            return Err(Error::NotStronglyConvex("no eigenvalues".into()));
        }
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: z.len(),
            });
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::NotStronglyConvex(format!("eigenvalue {bad}")));
        }
        let rotation = rotation.unwrap_or_else(|| DMatrix::identity(d, d));
        if rotation.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rotation.nrows(),
            });
        }
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
        let mut hessian = &rotation * lambda * rotation.transpose();
        hessian = (&hessian + hessian.transpose()) * 0.5;
        let lipschitz = eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mu = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            eigenvalues: eigenvalues.to_vec(),
            rotation,
            hessian,
            center: z,
            lipschitz,
            mu,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// Unconstrained minimizer `z`.
    pub fn center(&self) -> &Point {
        &self.center
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &Point) -> Result<f64> {
        self.check_dim(x)?;
        let y = x - &self.center;
        Ok(0.5 * y.dot(&(&self.hessian * &y)))
    }

    pub fn gradient(&self, x: &Point) -> Result<Point> {
        self.check_dim(x)?;
        Ok(&self.hessian * (x - &self.center))
    }

    /// `M = max{max_{x∈𝒳} |f(x)|, 1}`. A convex `f ≥ 0` peaks at a vertex.
    pub fn max_abs_value(&self, polytope: &Polytope) -> Result<f64> {
        let mut m: f64 = 1.0;
        for v in polytope.vertices() {
            m = m.max(self.value(v)?.abs());
        }
        Ok(m)
    }

    /// Minimizer over the polytope, certified by the Frank-Wolfe duality gap.
    pub fn reference_solution(&self, polytope: &Polytope) -> Result<ReferenceSolution> {
        self.reference_solution_with_limit(polytope, REFERENCE_MAX_ITER)
    }

    pub fn reference_solution_with_limit(
        &self,
        polytope: &Polytope,
        max_iter: usize,
    ) -> Result<ReferenceSolution> {
        if polytope.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: polytope.dim(),
            });
        }
        if polytope.contains(&self.center) {
            return Ok(ReferenceSolution {
                x_star: self.center.clone(),
                f_star: 0.0,
                certified_gap: 0.0,
                iterations: 0,
            });
        }

        let (id, v) = initial_vertex(polytope)?;
        let mut active = ActiveSet::singleton(id, v);
        let mut gap = f64::INFINITY;
        for k in 0..=max_iter {
            let x = active.point();
            let grad = self.gradient(x)?;
            let f = self.value(x)?;
            let (_, s) = polytope.lmo(&grad)?;
            gap = (grad.dot(x) - grad.dot(s)).max(0.0);
            if gap <= REFERENCE_GAP_TOL * f.abs().max(1.0) {
                return Ok(ReferenceSolution {
                    x_star: x.clone(),
                    f_star: f,
                    certified_gap: gap,
                    iterations: k,
                });
            }
            if k == max_iter {
                break;
            }
            active = away_fw_step(&active, &grad, polytope, self.lipschitz)?.0;
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            gap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    #[test]
    fn value_examples() {
        let q = QuadraticObjective::new(&[1.0, 1.0], None, pt(&[0.0, 0.0])).unwrap();
        assert_eq!(q.value(&pt(&[3.0, 4.0])).unwrap(), 12.5);
        let q = QuadraticObjective::new(
            &[2.0, 5.0, 1.0],
            Some(random_rotation(3, 4)),
            pt(&[0.1, 0.2, 0.3]),
        )
        .unwrap();
        assert!(q.value(q.center()).unwrap().abs() < 1e-30);
        assert!(matches!(
            q.value(&pt(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_examples() {
        let q = QuadraticObjective::new(&[1.0, 2.0], None, pt(&[0.0, 0.0])).unwrap();
        assert_eq!(q.gradient(&pt(&[1.0, 1.0])).unwrap(), pt(&[1.0, 2.0]));
        assert_eq!(q.gradient(&pt(&[0.0, 0.0])).unwrap(), pt(&[0.0, 0.0]));
        assert!(matches!(
            q.gradient(&pt(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_eigenvalues() {
        assert!(matches!(
            QuadraticObjective::new(&[1.0, 0.0], None, pt(&[0.0, 0.0])),
            Err(Error::NotStronglyConvex(_))
        ));
    }

    #[test]
    fn rotation_is_orthogonal() {
        let r = random_rotation(5, 11);
        let err = (&r * r.transpose() - DMatrix::<f64>::identity(5, 5)).amax();
        assert!(err < 1e-13);
    }

    #[test]
    fn reference_interior_and_clamped() {
        let bx = Polytope::unit_box(2);
        let q = QuadraticObjective::new(&[1.0, 3.0], None, pt(&[0.3, 0.6])).unwrap();
        let r = q.reference_solution(&bx).unwrap();
        assert_eq!(
            (r.x_star.clone(), r.f_star, r.certified_gap),
            (pt(&[0.3, 0.6]), 0.0, 0.0)
        );

        let q = QuadraticObjective::new(&[1.0, 1.0], None, pt(&[2.0, 2.0])).unwrap();
        let r = q.reference_solution(&bx).unwrap();
        assert!((&r.x_star - pt(&[1.0, 1.0])).norm() < 1e-12);
        assert!((r.f_star - 1.0).abs() < 1e-12);
        assert!(r.certified_gap <= 1e-12);
    }

    #[test]
    fn m_is_at_least_one() {
        let q = QuadraticObjective::new(&[1.0, 1.0], None, pt(&[0.5, 0.5])).unwrap();
        assert_eq!(q.max_abs_value(&Polytope::unit_box(2)).unwrap(), 1.0);
        let q = QuadraticObjective::new(&[4.0, 4.0], None, pt(&[0.0, 0.0])).unwrap();
        assert_eq!(q.max_abs_value(&Polytope::unit_box(2)).unwrap(), 4.0);
    }

    #[test]
    fn eigenbasis_value() {
        // f(z + R e_i) = λ_i / 2.
        let r = random_rotation(3, 21);
        let z = pt(&[0.2, -0.4, 1.0]);
        let q = QuadraticObjective::new(&[0.5, 2.0, 7.0], Some(r.clone()), z.clone()).unwrap();
        for (i, l) in [0.5, 2.0, 7.0].iter().enumerate() {
            let x = &z + r.column(i);
            assert!((q.value(&x).unwrap() - l / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let q = QuadraticObjective::new(
            &[1.0, 3.0, 0.2, 5.0],
            Some(random_rotation(4, 2)),
            pt(&[0.1, 0.0, -0.3, 0.4]),
        )
        .unwrap();
        let x = pt(&[0.7, -1.1, 0.25, 2.0]);
        let g = q.gradient(&x).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            let mut e = Point::zeros(4);
            e[i] = h;
            let fd = (q.value(&(&x + &e)).unwrap() - q.value(&(&x - &e)).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "coordinate {i}");
        }
    }

    #[test]
    fn reference_matches_grid_search() {
        // Q = diag(1, 4), z = (1.5, 0.5): minimizer (0.7, 0.3), f* = 0.4.
        let q = QuadraticObjective::new(&[1.0, 4.0], None, pt(&[1.5, 0.5])).unwrap();
        let simplex = Polytope::unit_simplex(2);
        let steps = 1000;
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let x = pt(&[i as f64 / steps as f64, j as f64 / steps as f64]);
                let f = q.value(&x).unwrap();
                if f < best.0 {
                    best = (f, i, j);
                }
            }
        }
        assert_eq!((best.1, best.2), (700, 300));
        assert!((best.0 - 0.4).abs() < 1e-12);
        let r = q.reference_solution(&simplex).unwrap();
        assert!((&r.x_star - pt(&[0.7, 0.3])).norm() < 1e-6);
        assert!((r.f_star - 0.4).abs() < 1e-10);
        assert!(r.f_star <= best.0 + 1e-12);
    }
}
