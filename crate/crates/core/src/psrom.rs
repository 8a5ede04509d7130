//! Predictor-corrector solve of the reduced model.
//!
//! Each outer iteration freezes the edge resistances at the previous flows,
//! accumulates net downstream resistance from the outlets to the ostium
//! (series along segments, parallel at bifurcations), updates the ostial flow
//! from the aortic pressure and redistributes it from the ostium to the
//! outlets with the γ-corrected inverse-resistance rule. Iteration stops once
//! the ostial flow changes by at most `tol2` relative to the previous iterate.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{BoundaryConditionSet, HemodynamicSolution};
use crate::surface::{coefficients_for_geometry, EdgeCoefficients, ResponseSurface};
use crate::tree::CenterlineTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative ostial-flow change accepted as converged.
    pub tol2: f64,
    pub max_iterations: usize,
    pub bc_scaling_enabled: bool,
    /// Use `R·P_current/P_anchor` instead of `R·P_anchor/P_current`.
    #[serde(default)]
    pub invert_bc_ratio: bool,
    #[serde(default)]
    pub floor: ResistanceFloor,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol2: 0.02,
            max_iterations: 100,
            bc_scaling_enabled: true,
            invert_bc_ratio: false,
            floor: ResistanceFloor::default(),
        }
    }
}

/// Guard against non-physical amplification by negative-slope edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResistanceFloor {
    /// Every edge resistance is clamped to `max(0, a + b·Q)`.
    Edge,
    /// Edges may recover pressure; an edge is clamped only where it would
    /// drive the resistance below it to `DOWNSTREAM_FLOOR` of its outlet-side
    /// value, which keeps every pressure positive.
    #[default]
    Downstream,
}

/// Smallest admissible ratio of `R_eff` above an edge to `R_eff` below it.
pub const DOWNSTREAM_FLOOR: f64 = 0.01;

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol2 > 0.0 && self.tol2 < 0.5) {
            return Err(Error::InvalidParameter {
                name: "tol2",
                reason: format!("must lie in (0, 0.5), got {}", self.tol2),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter { name: "max_iterations", reason: "must be at least 1".into() });
        }
        Ok(())
    }

    pub fn without_bc_scaling(mut self) -> Self {
        self.bc_scaling_enabled = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveResistanceField {
    /// Net downstream resistance per point, dyn·s/cm⁵.
    pub values: Vec<f64>,
}

/// `a + b·Q` per edge, clamped at zero under [`ResistanceFloor::Edge`];
/// slot 0 is zero.
pub fn edge_resistances(coeffs: &[EdgeCoefficients], flows: &[f64], floor: ResistanceFloor) -> Vec<f64> {
    let lower = match floor {
        ResistanceFloor::Edge => 0.0,
        ResistanceFloor::Downstream => f64::NEG_INFINITY,
    };
    let mut r: Vec<f64> = coeffs.iter().zip(flows).map(|(c, &q)| c.resistance(q).max(lower)).collect();
    r[0] = 0.0;
    r
}

/// Leaf-to-ostium accumulation. `outlet_resistances` is dense per point.
/// Negative edges that would leave less than [`DOWNSTREAM_FLOOR`] of the
/// downstream resistance are raised in place.
pub fn rbfs_effective_resistance(
    tree: &CenterlineTree,
    edge_r: &mut [f64],
    outlet_resistances: &[f64],
) -> Result<EffectiveResistanceField> {
    let n = tree.len();
    let mut values = vec![0.0; n];
    for m in (0..n).rev() {
        for &k in tree.children(m) {
            edge_r[k] = edge_r[k].max((DOWNSTREAM_FLOOR - 1.0) * values[k]);
        }
        values[m] = match tree.children(m) {
            [] => outlet_resistances[m],
            [k] => edge_r[*k] + values[*k],
            children => {
                let local: f64 = children.iter().map(|&k| 1.0 / (edge_r[k] + values[k])).sum();
                1.0 / local
            }
        };
        if !(values[m] > 0.0) || !values[m].is_finite() {
            return Err(Error::InvalidParameter {
                name: "effective_resistance",
                reason: format!("non-positive value {} at point {m}", values[m]),
            });
        }
    }
    Ok(EffectiveResistanceField { values })
}

/// Ostium-to-leaf flow distribution. Daughter flows follow
/// `Q_m · R_eff,m / R_d · γ_d` with `R_d` the daughter branch resistance
/// (edge plus downstream), then are rescaled to sum to `Q_m`.
pub fn dfs_flow_distribution(
    tree: &CenterlineTree,
    edge_r: &[f64],
    reff: &EffectiveResistanceField,
    gamma: &[f64],
    ostial_flow: f64,
) -> Vec<f64> {
    let n = tree.len();
    let mut flows = vec![0.0; n];
    flows[0] = ostial_flow;
    for m in 0..n {
        match tree.children(m) {
            [] => {}
            [k] => flows[*k] = flows[m],
            &[d1, d2] => {
                let qm = flows[m];
                let raw = |d: usize| qm * reff.values[m] / (edge_r[d] + reff.values[d]) * gamma[d];
                let (q1, q2) = (raw(d1), raw(d2));
                let scale = qm / (q1 + q2);
                flows[d1] = q1 * scale;
                flows[d2] = qm - flows[d1];
            }
            _ => unreachable!("trees are validated to bifurcations"),
        }
    }
    flows
}

/// Per outlet `R·P_anchor/P_current` (a pressure rise dilates the bed).
pub fn scale_boundary_conditions(
    bc: &BoundaryConditionSet,
    current: &BTreeMap<usize, f64>,
    anchor: &BTreeMap<usize, f64>,
    config: &SolverConfig,
) -> BoundaryConditionSet {
    let mut scaled = bc.clone();
    if !config.bc_scaling_enabled {
        return scaled;
    }
    for (id, r) in scaled.outlet_resistances.iter_mut() {
        let ratio = anchor[id] / current[id];
        *r *= if config.invert_bc_ratio { ratio.recip() } else { ratio };
    }
    scaled
}

/// Solve on `modified` with the surface's hyperemic boundary conditions.
pub fn solve(
    surface: &ResponseSurface,
    modified: &CenterlineTree,
    modified_edges: &BTreeSet<usize>,
    config: &SolverConfig,
) -> Result<HemodynamicSolution> {
    solve_with_bc(surface, modified, modified_edges, &surface.bc_hyperemia, config)
}

pub fn solve_with_bc(
    surface: &ResponseSurface,
    modified: &CenterlineTree,
    modified_edges: &BTreeSet<usize>,
    bc: &BoundaryConditionSet,
    config: &SolverConfig,
) -> Result<HemodynamicSolution> {
    let coeffs = coefficients_for_geometry(surface, modified, modified_edges)?;
    solve_with_coefficients(surface, modified, &coeffs, bc, config)
}

/// The iteration proper, for callers that already hold edge coefficients.
pub fn solve_with_coefficients(
    surface: &ResponseSurface,
    tree: &CenterlineTree,
    coeffs: &[EdgeCoefficients],
    bc: &BoundaryConditionSet,
    config: &SolverConfig,
) -> Result<HemodynamicSolution> {
    config.validate()?;
    bc.validate(tree)?;
    let n = tree.len();
    let anchor = &surface.anchors.patient_hyperemia;
    let outlets = tree.outlets();
    let base_outlet_r = bc.dense_resistances(n);

    let mut flows = anchor.flows.clone();
    let mut pressures = anchor.pressures.clone();
    let mut previous_ostial = anchor.ostial_flow;
    let mut outlet_r = base_outlet_r.clone();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut edge_r = edge_resistances(coeffs, &flows, config.floor);
        if config.bc_scaling_enabled {
            for &o in &outlets {
                let ratio = anchor.pressures[o] / pressures[o];
                outlet_r[o] = base_outlet_r[o] * if config.invert_bc_ratio { ratio.recip() } else { ratio };
            }
        }
        let reff = rbfs_effective_resistance(tree, &mut edge_r, &outlet_r)?;
        let ostial = bc.aortic_pressure / reff.values[0];
        flows = dfs_flow_distribution(tree, &edge_r, &reff, &surface.gamma, ostial);

        pressures[0] = bc.aortic_pressure;
        for k in 1..n {
            let parent = tree.parent(k).expect("non-root");
            pressures[k] = pressures[parent] - edge_r[k] * flows[k];
        }

        if (ostial - previous_ostial).abs() <= config.tol2 * previous_ostial {
            converged = true;
            break;
        }
        previous_ostial = ostial;
    }
    Ok(HemodynamicSolution::from_parts(pressures, flows, bc.aortic_pressure, converged, iterations))
}

/// `(arc length from ostium, FFR)` along a path.
pub fn ffr_trace(tree: &CenterlineTree, solution: &HemodynamicSolution, path: &[usize]) -> Vec<(f64, f64)> {
    path.iter().map(|&id| (tree.arc_from_root(id), solution.ffr[id])).collect()
}
