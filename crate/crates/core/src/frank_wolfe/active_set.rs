use std::collections::BTreeMap;

use crate::geometry::{Point, Polytope};

/// Weights at or below this are purged and the remaining mass renormalized.
pub const DROP_TOL: f64 = 1e-12;

/// Convex-combination representation of the current iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    weights: BTreeMap<usize, f64>,
    point: Point,
}

/// Invariant residuals of an [`ActiveSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSetHealth {
    pub weight_sum_error: f64,
    pub min_weight: f64,
    pub reconstruction_error: f64,
}

impl ActiveSetHealth {
    pub fn is_valid(&self) -> bool {
        self.weight_sum_error <= 1e-10 && self.min_weight > 0.0 && self.reconstruction_error <= 1e-8
    }
}

impl ActiveSet {
    pub fn singleton(id: usize, vertex: &Point) -> Self {
        Self {
            weights: BTreeMap::from([(id, 1.0)]),
            point: vertex.clone(),
        }
    }

    pub fn point(&self) -> &Point {
        &self.point
    }

    pub fn weights(&self) -> &BTreeMap<usize, f64> {
        &self.weights
    }

    pub fn weight(&self, id: usize) -> f64 {
        self.weights.get(&id).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.weights.keys().copied().collect()
    }

    /// `Σ α_v v` recomputed from the weights.
    pub fn reconstruct(&self, polytope: &Polytope) -> Point {
        let mut x = Point::zeros(polytope.dim());
        for (&id, &w) in &self.weights {
            x.axpy(w, &polytope.vertices()[id], 1.0);
        }
        x
    }

    pub fn health(&self, polytope: &Polytope) -> ActiveSetHealth {
        let sum: f64 = self.weights.values().sum();
        let min_weight = self.weights.values().copied().fold(f64::INFINITY, f64::min);
        ActiveSetHealth {
            weight_sum_error: (sum - 1.0).abs(),
            min_weight,
            reconstruction_error: (self.reconstruct(polytope) - &self.point).norm(),
        }
    }

    /// Frank-Wolfe move toward vertex `s` with step `gamma`, landing on `x_next`.
    pub(crate) fn apply_fw(&mut self, s: usize, gamma: f64, x_next: Point) {
        if gamma >= 1.0 {
            self.weights.clear();
            self.weights.insert(s, 1.0);
        } else {
            for w in self.weights.values_mut() {
                *w *= 1.0 - gamma;
            }
            *self.weights.entry(s).or_insert(0.0) += gamma;
        }
        self.point = x_next;
        self.purge();
    }

    /// Away move from vertex `v`; `drop` removes `v` outright.
    pub(crate) fn apply_away(&mut self, v: usize, gamma: f64, drop: bool, x_next: Point) {
        let alpha_v = self.weight(v);
        for w in self.weights.values_mut() {
            *w *= 1.0 + gamma;
        }
        if drop {
            self.weights.remove(&v);
        } else {
            self.weights.insert(v, (1.0 + gamma) * alpha_v - gamma);
        }
        self.point = x_next;
        self.purge();
    }

    fn purge(&mut self) {
        self.weights.retain(|_, w| *w > DROP_TOL);
        let sum: f64 = self.weights.values().sum();
        if sum != 1.0 {
            for w in self.weights.values_mut() {
                *w /= sum;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn away_update_formula() {
        let p = Polytope::unit_simplex(2);
        // vertices: (0,0)=0, (0,1)=1, (1,0)=2
        let mut a = ActiveSet::singleton(0, &p.vertices()[0]);
        a.weights = BTreeMap::from([(0, 0.25), (1, 0.35), (2, 0.40)]);
        a.point = a.reconstruct(&p);
        let x = a.point.clone();
        let gamma = 0.2;
        let x_next = &x + gamma * (&x - &p.vertices()[0]);
        a.apply_away(0, gamma, false, x_next);
        assert!((a.weight(0) - 0.1).abs() < 1e-15);
        assert!((a.weight(1) - 0.42).abs() < 1e-15);
        assert!((a.weight(2) - 0.48).abs() < 1e-15);
        assert!(a.health(&p).is_valid());
    }

    #[test]
    fn drop_update_rescales_to_one() {
        let p = Polytope::unit_simplex(2);
        let mut a = ActiveSet::singleton(0, &p.vertices()[0]);
        a.weights = BTreeMap::from([(0, 0.2), (1, 0.5), (2, 0.3)]);
        a.point = a.reconstruct(&p);
        let gamma = 0.2 / 0.8;
        let x_next = &a.point + gamma * (&a.point - &p.vertices()[0]);
        a.apply_away(0, gamma, true, x_next);
        assert_eq!(a.len(), 2);
        assert!((a.weight(1) - 0.625).abs() < 1e-15);
        assert!((a.weight(2) - 0.375).abs() < 1e-15);
        assert!(a.health(&p).is_valid());
    }

    #[test]
    fn full_fw_step_collapses_to_vertex() {
        let p = Polytope::unit_box(2);
        let mut a = ActiveSet::singleton(0, &p.vertices()[0]);
        a.apply_fw(3, 0.5, Point::from_vec(vec![0.5, 0.5]));
        assert_eq!(a.len(), 2);
        a.apply_fw(1, 1.0, p.vertices()[1].clone());
        assert_eq!(a.ids(), vec![1]);
        assert!(a.health(&p).is_valid());
    }
}
