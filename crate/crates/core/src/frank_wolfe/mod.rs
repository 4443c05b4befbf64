//! Standard (fixed-step) and away-step Frank-Wolfe.

mod active_set;
mod run;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polytope};

pub use active_set::{ActiveSet, ActiveSetHealth, DROP_TOL};
pub use run::{
    initial_vertex, run, run_observed, Algorithm, IterateView, IterationRecord, RunSettings,
    RunTrace,
};

/// Directions shorter than this are treated as no direction at all.
pub const MIN_DIRECTION_NORM: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Frank-Wolfe step shorter than the maximal one.
    Fw,
    /// Away step that keeps the away vertex.
    Away,
    /// Frank-Wolfe step of length 1, landing on a vertex.
    FwMax,
    /// Maximal away step; the away vertex leaves the active set.
    AwayDrop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub kind: StepKind,
    pub gamma: f64,
    pub gamma_max: f64,
    pub fw_vertex: usize,
    pub away_vertex: Option<usize>,
    /// `gᵀ(v − s)`, the estimated pairwise gap; zero for standard steps.
    pub pair_gap: f64,
}

/// Fixed step `γ = min{1, ε/(2LD²)}`.
pub fn standard_step_size(epsilon: f64, lipschitz: f64, diameter: f64) -> f64 {
    (epsilon / (2.0 * lipschitz * diameter * diameter)).min(1.0)
}

/// One step of standard Frank-Wolfe with the fixed step rule.
pub fn standard_fw_step(
    x: &Point,
    g: &Point,
    polytope: &Polytope,
    epsilon: f64,
    lipschitz: f64,
    diameter: f64,
) -> Result<(Point, StepInfo)> {
    let (s_id, s) = polytope.lmo(g)?;
    let gamma = standard_step_size(epsilon, lipschitz, diameter);
    let (x_next, kind) = if gamma >= 1.0 {
        (s.clone(), StepKind::FwMax)
    } else {
        (x + gamma * (s - x), StepKind::Fw)
    };
    Ok((
        x_next,
        StepInfo {
            kind,
            gamma,
            gamma_max: 1.0,
            fw_vertex: s_id,
            away_vertex: None,
            pair_gap: 0.0,
        },
    ))
}

/// Active vertex maximizing `gᵀu`; ties go to the smallest id.
pub fn away_vertex(active: &ActiveSet, g: &Point, polytope: &Polytope) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for &id in active.weights().keys() {
        let val = g.dot(&polytope.vertices()[id]);
        if best.is_none_or(|(_, b)| val > b) {
            best = Some((id, val));
        }
    }
    best.expect("active set is never empty").0
}

/// One step of away-step Frank-Wolfe with active-set bookkeeping.
pub fn away_fw_step(
    active: &ActiveSet,
    g: &Point,
    polytope: &Polytope,
    lipschitz: f64,
) -> Result<(ActiveSet, StepInfo)> {
    let x = active.point();
    let (s_id, s) = polytope.lmo(g)?;
    let v_id = away_vertex(active, g, polytope);
    let v = &polytope.vertices()[v_id];

    let gx = g.dot(x);
    let gs = g.dot(s);
    let gv = g.dot(v);
    let fw_decrease = gx - gs;
    let away_decrease = gv - gx;

    let take_fw = fw_decrease >= away_decrease;
    let (direction, decrease, gamma_max) = if take_fw {
        (s - x, fw_decrease, 1.0)
    } else {
        let alpha_v = active.weight(v_id);
        // With α_v = 1 the iterate is v itself, so the away decrease is 0 and
        // the FW branch always wins.
        assert!(alpha_v < 1.0, "away branch selected with α_v = 1");
        (x - v, away_decrease, alpha_v / (1.0 - alpha_v))
    };
    let norm_sq = direction.norm_squared();
    if norm_sq.sqrt() <= MIN_DIRECTION_NORM {
        return Err(Error::DegenerateDirection(norm_sq.sqrt()));
    }
    // The selected direction always satisfies −gᵀd ≥ 0 up to rounding.
    debug_assert!(
        decrease >= -1e-9 * (1.0 + gx.abs()),
        "ascent direction chosen"
    );
    let unconstrained = decrease.max(0.0) / (lipschitz * norm_sq);
    let at_max = unconstrained >= gamma_max;
    let gamma = if at_max { gamma_max } else { unconstrained };

    let mut next = active.clone();
    let kind = if take_fw {
        let x_next = if at_max {
            s.clone()
        } else {
            x + gamma * &direction
        };
        next.apply_fw(s_id, gamma, x_next);
        if at_max {
            StepKind::FwMax
        } else {
            StepKind::Fw
        }
    } else {
        let x_next = x + gamma * &direction;
        next.apply_away(v_id, gamma, at_max, x_next);
        if at_max {
            StepKind::AwayDrop
        } else {
            StepKind::Away
        }
    };
    Ok((
        next,
        StepInfo {
            kind,
            gamma,
            gamma_max,
            fw_vertex: s_id,
            away_vertex: Some(v_id),
            pair_gap: gv - gs,
        },
    ))
}
