//! Bounded polytopes in H-form `{x : Ax ≤ b}`.
//!
//! A [`Polytope`] checks boundedness on construction and caches its vertex
//! list in lexicographic order; vertex ids are indices into that list. The
//! linear minimization oracle scans the list, with a Bland-rule simplex
//! solver available as an enumeration-free alternative.

mod simplex_lp;

use std::collections::BTreeSet;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use simplex_lp::minimize as simplex_minimize;

pub type Point = DVector<f64>;

/// Base feasibility / activity tolerance, scaled per row by `1 + |b_i|`.
pub const FEAS_TOL: f64 = 1e-9;
/// Two candidate vertices closer than this are the same vertex.
pub const DEDUP_TOL: f64 = 1e-8;
const MAX_SUBSETS: u128 = 1_000_000;

#[derive(Debug, Clone)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    row_norms: Vec<f64>,
    vertices: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConstants {
    /// Euclidean diameter `D`.
    pub diameter: f64,
    pub n_vertices: usize,
    /// Smallest positive slack of any vertex in any row.
    pub zeta: f64,
    /// Largest row norm among rows not active at every vertex.
    pub phi: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Simplex,
    ProbabilitySimplex,
    Box,
}

/// JSON form of a polytope: explicit rows or a named preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolytopeSpec {
    Explicit {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Preset {
        preset: Preset,
        dim: usize,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl PolytopeSpec {
    pub fn build(&self) -> Result<Polytope> {
        match self {
            PolytopeSpec::Explicit { a, b } => Polytope::from_rows(a, b),
            PolytopeSpec::Preset { preset, dim, scale } => {
                if *dim == 0 || !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::UnboundedOrEmpty);
                }
                Ok(match preset {
                    Preset::Simplex => Polytope::simplex(*dim, *scale),
                    Preset::ProbabilitySimplex => Polytope::probability_simplex(*dim, *scale),
                    Preset::Box => Polytope::cube(*dim, *scale),
                })
            }
        }
    }
}

fn row_tol(bi: f64) -> f64 {
    FEAS_TOL * (1.0 + bi.abs())
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// All basic feasible solutions of `Ax ≤ b`, deduplicated and sorted
/// lexicographically.
pub fn enumerate_vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<Point>> {
    let (m, d) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    if d == 0 || m < d {
        return Err(Error::UnboundedOrEmpty);
    }
    let subsets = binomial(m, d);
    if subsets > MAX_SUBSETS {
        return Err(Error::TooManySubsets(subsets));
    }

    let mut found: Vec<Point> = Vec::new();
    for rows in (0..m).combinations(d) {
        let sub = DMatrix::from_fn(d, d, |i, j| a[(rows[i], j)]);
        let sv = sub.clone().singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if hi == 0.0 || lo <= 1e-12 * hi {
            continue;
        }
        let rhs = DVector::from_fn(d, |i, _| b[rows[i]]);
        let Some(x) = sub.lu().solve(&rhs) else {
            continue;
        };
        let ax = a * &x;
        let feasible = (0..m).all(|i| ax[i] <= b[i] + row_tol(b[i]));
        if feasible && !found.iter().any(|v| (v - &x).norm() <= DEDUP_TOL) {
            found.push(x);
        }
    }
    if found.is_empty() {
        return Err(Error::UnboundedOrEmpty);
    }
    found.sort_by(lex_cmp);
    Ok(found)
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let (m, d) = a.shape();
        if b.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: b.len(),
            });
        }
        if d == 0 || a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::UnboundedOrEmpty);
        }
        // Bounded iff every coordinate is bounded in both directions.
        for j in 0..d {
            for sign in [1.0, -1.0] {
                let mut c = DVector::zeros(d);
                c[j] = sign;
                match simplex_lp::minimize(&a, &b, &c) {
                    Ok(_) => {}
                    Err(Error::Unbounded) | Err(Error::Infeasible) => {
                        return Err(Error::UnboundedOrEmpty)
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let vertices = enumerate_vertices(&a, &b)?;
        let row_norms = a.row_iter().map(|r| r.norm()).collect();
        Ok(Self {
            a,
            b,
            row_norms,
            vertices,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::UnboundedOrEmpty);
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        if b.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: b.len(),
            });
        }
        let a = DMatrix::from_fn(m, d, |i, j| rows[i][j]);
        Self::new(a, DVector::from_column_slice(b))
    }

    /// `{x ≥ 0, 1ᵀx ≤ scale}`; rows are `−x_i ≤ 0` for each `i`, then the sum row.
    pub fn simplex(d: usize, scale: f64) -> Self {
        let mut a = DMatrix::zeros(d + 1, d);
        let mut b = DVector::zeros(d + 1);
        for i in 0..d {
            a[(i, i)] = -1.0;
            a[(d, i)] = 1.0;
        }
        b[d] = scale;
        Self::new(a, b).expect("scaled simplex is a bounded polytope")
    }

    pub fn unit_simplex(d: usize) -> Self {
        Self::simplex(d, 1.0)
    }

    /// `{x ≥ 0, 1ᵀx = scale}` with the equality written as the pair
    /// `1ᵀx ≤ scale`, `−1ᵀx ≤ −scale`. Vertices are `scale·e_i`.
    pub fn probability_simplex(d: usize, scale: f64) -> Self {
        let mut a = DMatrix::zeros(d + 2, d);
        let mut b = DVector::zeros(d + 2);
        for i in 0..d {
            a[(i, i)] = -1.0;
            a[(d, i)] = 1.0;
            a[(d + 1, i)] = -1.0;
        }
        b[d] = scale;
        b[d + 1] = -scale;
        Self::new(a, b).expect("probability simplex is a bounded polytope")
    }

    /// `[0, scale]^d`; rows are `x_i ≤ scale` for each `i`, then `−x_i ≤ 0`.
    pub fn cube(d: usize, scale: f64) -> Self {
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for i in 0..d {
            a[(i, i)] = 1.0;
            b[i] = scale;
            a[(d + i, i)] = -1.0;
        }
        Self::new(a, b).expect("box is a bounded polytope")
    }

    pub fn unit_box(d: usize) -> Self {
        Self::cube(d, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, id: usize) -> Result<&Point> {
        self.vertices.get(id).ok_or(Error::UnknownVertexId(id))
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

    /// Largest row violation `max_i (A_i x − b_i)`, negative when strictly inside.
    pub fn max_violation(&self, x: &Point) -> f64 {
        let ax = &self.a * x;
        (0..self.n_rows())
            .map(|i| ax[i] - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &Point) -> bool {
        let ax = &self.a * x;
        (0..self.n_rows()).all(|i| ax[i] <= self.b[i] + row_tol(self.b[i]))
    }

    /// Vertex minimizing `gᵀs`; ties go to the smallest vertex id.
    pub fn lmo(&self, g: &Point) -> Result<(usize, &Point)> {
        self.check_dim(g)?;
        let mut best: Option<(usize, f64)> = None;
        for (id, v) in self.vertices.iter().enumerate() {
            let val = g.dot(v);
            if best.is_none_or(|(_, b)| val < b) {
                best = Some((id, val));
            }
        }
        let (id, _) = best.ok_or(Error::EmptyVertexList)?;
        Ok((id, &self.vertices[id]))
    }

    /// Solves the same linear program by the simplex method, without the
    /// vertex list.
    pub fn lmo_simplex_method(&self, g: &Point) -> Result<Point> {
        self.check_dim(g)?;
        simplex_lp::minimize(&self.a, &self.b, g)
    }

    /// Rows with `|A_i x − b_i| ≤ tol·(1 + |b_i|)`.
    pub fn active_index_set(&self, x: &Point, tol: f64) -> Result<BTreeSet<usize>> {
        self.check_dim(x)?;
        let ax = &self.a * x;
        let mut active = BTreeSet::new();
        for i in 0..self.n_rows() {
            let t = tol * (1.0 + self.b[i].abs());
            let r = ax[i] - self.b[i];
            if r > t {
                return Err(Error::InfeasiblePoint {
                    row: i,
                    violation: r,
                });
            }
            if r.abs() <= t {
                active.insert(i);
            }
        }
        Ok(active)
    }

    /// Rows active at every vertex in `ids`.
    pub fn active_index_set_of_vertex_set(&self, ids: &[usize]) -> Result<BTreeSet<usize>> {
        let mut iter = ids.iter();
        let first = iter.next().ok_or(Error::EmptyVertexList)?;
        let mut acc = self.active_index_set(self.vertex(*first)?, FEAS_TOL)?;
        for &id in iter {
            let next = self.active_index_set(self.vertex(id)?, FEAS_TOL)?;
            acc = acc.intersection(&next).copied().collect();
        }
        Ok(acc)
    }

    pub fn geometry_constants(&self) -> Result<GeometryConstants> {
        let verts = &self.vertices;
        if verts.is_empty() {
            return Err(Error::EmptyVertexList);
        }
        let mut diameter: f64 = 0.0;
        for (i, u) in verts.iter().enumerate() {
            for v in &verts[i + 1..] {
                diameter = diameter.max((u - v).norm());
            }
        }

        let mut zeta = f64::INFINITY;
        let mut phi: f64 = 0.0;
        let mut any_inactive = false;
        for i in 0..self.n_rows() {
            let ai = self.a.row(i);
            let tol = row_tol(self.b[i]);
            let mut active_everywhere = true;
            for v in verts {
                let slack = self.b[i] - (ai * v)[0];
                if slack > tol {
                    active_everywhere = false;
                    zeta = zeta.min(slack);
                }
            }
            if !active_everywhere {
                any_inactive = true;
                phi = phi.max(self.row_norms[i]);
            }
        }
        if !any_inactive || phi == 0.0 {
            return Err(Error::DegeneratePolytope);
        }
        Ok(GeometryConstants {
            diameter,
            n_vertices: verts.len(),
            zeta,
            phi,
            omega: zeta / phi,
        })
    }
}

/// Outcome of comparing the two LMO implementations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmoCheck {
    pub trials: usize,
    /// Directions where the objective values differ by more than `1e-8`.
    pub mismatches: usize,
    /// Directions where the simplex method returned an error.
    pub errors: usize,
    pub worst_difference: f64,
}

impl LmoCheck {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.errors == 0
    }
}

/// Compares `lmo` and `lmo_simplex_method` on `trials` directions drawn
/// uniformly from `[−1, 1]^d`.
pub fn lmo_check(p: &Polytope, trials: usize, seed: u64) -> LmoCheck {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = LmoCheck {
        trials,
        mismatches: 0,
        errors: 0,
        worst_difference: 0.0,
    };
    for _ in 0..trials {
        let g = Point::from_fn(p.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let (_, v) = p.lmo(&g).expect("direction has the polytope's dimension");
        match p.lmo_simplex_method(&g) {
            Ok(x) => {
                let diff = (g.dot(&x) - g.dot(v)).abs();
                out.worst_difference = out.worst_difference.max(diff);
                if diff > 1e-8 {
                    out.mismatches += 1;
                }
            }
            Err(_) => out.errors += 1,
        }
    }
    out
}

/// Random bounded polytope in `ℝ^d` with `m` rows: unit normals from a
/// Gaussian, offsets in `[0.5, 1.5]`. Redraws until bounded.
pub fn random_polytope<R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> Polytope {
    assert!(m > d, "need at least d + 1 rows for a bounded polytope");
    loop {
        let mut a = DMatrix::zeros(m, d);
        for i in 0..m {
            let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..d {
                a[(i, j)] = row[j] / n;
            }
        }
        let b = DVector::from_fn(m, |_, _| rng.gen_range(0.5..1.5));
        if let Ok(p) = Polytope::new(a, b) {
            return p;
        }
    }
}
