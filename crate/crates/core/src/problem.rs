use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeometryConstants, Polytope, PolytopeSpec};
use crate::objectives::{ObjectiveSpec, QuadraticObjective, ReferenceSolution};

/// A polytope, an objective over it, and everything precomputed from the
/// pair that the algorithms and diagnostics need.
#[derive(Debug, Clone)]
pub struct Problem {
    pub polytope: Polytope,
    pub objective: QuadraticObjective,
    pub geometry: GeometryConstants,
    pub reference: ReferenceSolution,
    /// `M = max{max_{x∈𝒳} |f(x)|, 1}`.
    pub m_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub objective: ObjectiveSpec,
    pub polytope: PolytopeSpec,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        let polytope = self
            .polytope
            .build()
            .map_err(|e| Error::config("problem.polytope", e.to_string()))?;
        let objective = self
            .objective
            .build()
            .map_err(|e| Error::config("problem.objective", e.to_string()))?;
        Problem::new(polytope, objective)
    }
}

impl Problem {
    pub fn new(polytope: Polytope, objective: QuadraticObjective) -> Result<Self> {
        if polytope.dim() != objective.dim() {
            return Err(Error::DimensionMismatch {
                expected: polytope.dim(),
                found: objective.dim(),
            });
        }
        let geometry = polytope.geometry_constants()?;
        let reference = objective.reference_solution(&polytope)?;
        let m_bound = objective.max_abs_value(&polytope)?;
        Ok(Self {
            polytope,
            objective,
            geometry,
            reference,
            m_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim()
    }

    /// `f(x) − f*` against the certified reference value.
    pub fn gap(&self, x: &crate::geometry::Point) -> Result<f64> {
        Ok(self.objective.value(x)? - self.reference.f_star)
    }
}
