//! Full-order steady network solver used to generate anchor states and
//! ground truth.
//!
//! Every edge carries a viscous loss `a·Q` and a convective loss `b·Q²`:
//!
//! ```text
//! a = 8 μ L / (π r̄⁴),   r̄ = (r_prox + r_dist) / 2
//! b = (ρ/2) (1/A_d² − 1/A_p²)        contraction (A_d < A_p)
//! b = κ (ρ/2) (1/A_d² − 1/A_p²)      expansion: partial recovery, b < 0
//! ```
//!
//! Outlets obey `P = R·Q`; the inlet is held at the aortic pressure. The
//! nonlinear system is solved by damped fixed-point iteration: freeze each
//! edge resistance `a + b·Q` at the current flows, solve the resulting linear
//! resistor tree exactly, relax the flows toward that solution and repeat.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecutionMode;
use crate::tree::{CenterlineTree, SegmentGeometry};
use crate::{DEFAULT_AORTIC_PRESSURE, DEFAULT_DENSITY, DEFAULT_VISCOSITY, SUPEREMIA_RESISTANCE_FACTOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditionSet {
    /// dyn/cm²
    pub aortic_pressure: f64,
    /// Outlet id to terminal resistance, dyn·s/cm⁵.
    pub outlet_resistances: BTreeMap<usize, f64>,
    /// Poise.
    pub viscosity: f64,
    /// g/cm³
    pub density: f64,
}

impl BoundaryConditionSet {
    pub fn new(outlet_resistances: BTreeMap<usize, f64>) -> Self {
        BoundaryConditionSet {
            aortic_pressure: DEFAULT_AORTIC_PRESSURE,
            outlet_resistances,
            viscosity: DEFAULT_VISCOSITY,
            density: DEFAULT_DENSITY,
        }
    }

    pub fn validate(&self, tree: &CenterlineTree) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("must be positive, got {v}") })
            }
        };
        positive("aortic_pressure", self.aortic_pressure)?;
        positive("viscosity", self.viscosity)?;
        positive("density", self.density)?;
        let outlets = tree.outlets();
        if outlets.len() != self.outlet_resistances.len()
            || outlets.iter().any(|o| !self.outlet_resistances.contains_key(o))
        {
            return Err(Error::BoundaryMismatch(format!(
                "tree outlets {:?} vs resistances for {:?}",
                outlets,
                self.outlet_resistances.keys().collect::<Vec<_>>()
            )));
        }
        for (&id, &r) in &self.outlet_resistances {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::NonPositive { id, field: "outlet_resistance", value: r });
            }
        }
        Ok(())
    }

    /// Every outlet resistance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut bc = self.clone();
        bc.outlet_resistances.values_mut().for_each(|r| *r *= factor);
        bc
    }

    /// Microvascular resistance reduced by 40%.
    pub fn superemic(&self) -> Self {
        self.scaled(SUPEREMIA_RESISTANCE_FACTOR)
    }

    /// Dense per-point view; non-outlet slots are zero.
    pub(crate) fn dense_resistances(&self, n: usize) -> Vec<f64> {
        let mut dense = vec![0.0; n];
        for (&id, &r) in &self.outlet_resistances {
            dense[id] = r;
        }
        dense
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemodynamicSolution {
    /// Per point, dyn/cm².
    pub pressures: Vec<f64>,
    /// Per edge, indexed by distal point id; slot 0 holds the ostial inflow.
    pub flows: Vec<f64>,
    /// Per point, `pressure / aortic_pressure`.
    pub ffr: Vec<f64>,
    pub ostial_flow: f64,
    pub aortic_pressure: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl HemodynamicSolution {
    pub(crate) fn from_parts(
        pressures: Vec<f64>,
        flows: Vec<f64>,
        aortic_pressure: f64,
        converged: bool,
        iterations: usize,
    ) -> Self {
        let ffr = pressures.iter().map(|p| p / aortic_pressure).collect();
        HemodynamicSolution { ostial_flow: flows[0], pressures, flows, ffr, aortic_pressure, converged, iterations }
    }

    pub fn outlet_pressures(&self, tree: &CenterlineTree) -> BTreeMap<usize, f64> {
        tree.outlets().into_iter().map(|o| (o, self.pressures[o])).collect()
    }

    /// Largest relative mass-conservation defect over interior points.
    pub fn conservation_residual(&self, tree: &CenterlineTree) -> f64 {
        (0..tree.len())
            .filter(|&v| !tree.is_outlet(v))
            .map(|v| {
                let inflow = self.flows[v];
                let outflow: f64 = tree.children(v).iter().map(|&c| self.flows[c]).sum();
                (inflow - outflow).abs() / inflow.abs().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// Largest relative defect of `P = R·Q` over outlets.
    pub fn outlet_residual(&self, tree: &CenterlineTree, resistances: &BTreeMap<usize, f64>) -> f64 {
        tree.outlets()
            .into_iter()
            .map(|o| {
                let expected = resistances[&o] * self.flows[o];
                (self.pressures[o] - expected).abs() / expected.abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Flow-independent and flow-proportional resistance of a segment:
/// `ΔP = a·Q + b·Q²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub a: f64,
    pub b: f64,
}

pub fn poiseuille_resistance(geometry: &SegmentGeometry, viscosity: f64) -> f64 {
    let r = geometry.mean_radius();
    8.0 * viscosity * geometry.length / (PI * r.powi(4))
}

/// Convective coefficient `(ρ/2)(1/A_d² − 1/A_p²)`, signed.
pub fn bernoulli_coefficient(geometry: &SegmentGeometry, density: f64) -> f64 {
    0.5 * density * (1.0 / geometry.area_distal.powi(2) - 1.0 / geometry.area_proximal.powi(2))
}

pub fn loss_coefficients(
    geometry: &SegmentGeometry,
    viscosity: f64,
    density: f64,
    recovery_efficiency: f64,
) -> LossCoefficients {
    let bernoulli = bernoulli_coefficient(geometry, density);
    let b = if bernoulli >= 0.0 { bernoulli } else { recovery_efficiency * bernoulli };
    LossCoefficients { a: poiseuille_resistance(geometry, viscosity), b }
}

/// Pressure drop across a segment at flow `q ≥ 0`.
pub fn segment_loss(geometry: &SegmentGeometry, q: f64, viscosity: f64, density: f64, recovery_efficiency: f64) -> f64 {
    let c = loss_coefficients(geometry, viscosity, density, recovery_efficiency);
    c.a * q + c.b * q * q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Fraction κ of the convective drop recovered across an expansion.
    pub recovery_efficiency: f64,
    /// Relaxation weight given to each new linear solve.
    pub damping: f64,
    /// Largest relative edge-flow change accepted as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { recovery_efficiency: 0.7, damping: 0.5, tolerance: 1e-10, max_iterations: 200 }
    }
}

/// How outlet resistances respond to the solved state.
#[derive(Debug, Clone, PartialEq)]
pub enum OutletModel {
    /// `P = R·Q` with the resistances of the boundary set.
    Fixed,
    /// Passive microvasculature: `R = R₀·P_ref/P`, so a rise in outlet
    /// pressure dilates the downstream bed.
    PressureScaled { reference_pressures: BTreeMap<usize, f64> },
}

/// Steady state with fixed outlet resistances.
pub fn solve_steady(
    tree: &CenterlineTree,
    bc: &BoundaryConditionSet,
    config: &OracleConfig,
) -> Result<HemodynamicSolution> {
    solve_network(tree, bc, &OutletModel::Fixed, config)
}

pub fn solve_network(
    tree: &CenterlineTree,
    bc: &BoundaryConditionSet,
    outlets: &OutletModel,
    config: &OracleConfig,
) -> Result<HemodynamicSolution> {
    bc.validate(tree)?;
    let n = tree.len();
    let coeffs: Vec<LossCoefficients> = (0..n)
        .map(|k| {
            if k == 0 {
                LossCoefficients { a: 0.0, b: 0.0 }
            } else {
                loss_coefficients(&tree.segment(k), bc.viscosity, bc.density, config.recovery_efficiency)
            }
        })
        .collect();

    let base_outlets = bc.dense_resistances(n);
    let reference = match outlets {
        OutletModel::Fixed => None,
        OutletModel::PressureScaled { reference_pressures } => {
            let mut dense = vec![0.0; n];
            for o in tree.outlets() {
                let p = *reference_pressures
                    .get(&o)
                    .ok_or_else(|| Error::BoundaryMismatch(format!("missing reference pressure for outlet {o}")))?;
                if !(p > 0.0) {
                    return Err(Error::NonPositive { id: o, field: "reference_pressure", value: p });
                }
                dense[o] = p;
            }
            Some(dense)
        }
    };

    let mut outlet_r = base_outlets.clone();
    let mut edge_r: Vec<f64> = coeffs.iter().map(|c| c.a).collect();
    let mut network = LinearTree::new(n);
    network.solve(tree, &edge_r, &outlet_r, bc.aortic_pressure)?;
    let mut flows = network.flows.clone();

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        #[allow(clippy::needless_range_loop)]
        for k in 1..n {
            edge_r[k] = coeffs[k].a + coeffs[k].b * flows[k];
        }
        if let Some(reference) = &reference {
            for o in tree.outlets() {
                outlet_r[o] = base_outlets[o] * reference[o] / network.pressures[o];
            }
        }
        network.solve(tree, &edge_r, &outlet_r, bc.aortic_pressure)?;

        let mut change: f64 = 0.0;
        for (q, &q_lin) in flows.iter_mut().zip(&network.flows) {
            let relaxed = (1.0 - config.damping) * *q + config.damping * q_lin;
            change = change.max((relaxed - *q).abs() / q.abs().max(f64::MIN_POSITIVE));
            *q = relaxed;
        }
        if change < config.tolerance {
            converged = true;
            break;
        }
    }

    // Integrate the loss law along the final flows so the reported state is
    // self-consistent edge by edge.
    let mut pressures = vec![0.0; n];
    pressures[0] = bc.aortic_pressure;
    for k in 1..n {
        let parent = tree.parent(k).expect("non-root");
        let c = coeffs[k];
        pressures[k] = pressures[parent] - (c.a + c.b * flows[k]) * flows[k];
    }
    Ok(HemodynamicSolution::from_parts(pressures, flows, bc.aortic_pressure, converged, iterations))
}

/// Exact solve of a tree of fixed resistors by series/parallel reduction.
struct LinearTree {
    effective: Vec<f64>,
    pressures: Vec<f64>,
    flows: Vec<f64>,
}

impl LinearTree {
    fn new(n: usize) -> Self {
        LinearTree { effective: vec![0.0; n], pressures: vec![0.0; n], flows: vec![0.0; n] }
    }

    fn solve(&mut self, tree: &CenterlineTree, edge_r: &[f64], outlet_r: &[f64], p_in: f64) -> Result<()> {
        let n = tree.len();
        for v in (0..n).rev() {
            let children = tree.children(v);
            self.effective[v] = match children {
                [] => outlet_r[v],
                [c] => edge_r[*c] + self.effective[*c],
                _ => 1.0 / children.iter().map(|&c| 1.0 / (edge_r[c] + self.effective[c])).sum::<f64>(),
            };
            if !(self.effective[v] > 0.0) {
                return Err(Error::NegativePressure { id: v });
            }
        }
        self.pressures[0] = p_in;
        self.flows[0] = p_in / self.effective[0];
        #[allow(clippy::needless_range_loop)]
        for k in 1..n {
            let parent = tree.parent(k).expect("non-root");
            let branch_r = edge_r[k] + self.effective[k];
            self.flows[k] = self.pressures[parent] / branch_r;
            self.pressures[k] = self.pressures[parent] * self.effective[k] / branch_r;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorLabel {
    PatientHyperemia,
    PatientSuperemia,
    IdealHyperemia,
    IdealSuperemia,
}

impl AnchorLabel {
    pub const ALL: [AnchorLabel; 4] = [
        AnchorLabel::PatientHyperemia,
        AnchorLabel::PatientSuperemia,
        AnchorLabel::IdealHyperemia,
        AnchorLabel::IdealSuperemia,
    ];

    pub fn is_ideal(self) -> bool {
        matches!(self, AnchorLabel::IdealHyperemia | AnchorLabel::IdealSuperemia)
    }

    pub fn is_superemic(self) -> bool {
        matches!(self, AnchorLabel::PatientSuperemia | AnchorLabel::IdealSuperemia)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnchorLabel::PatientHyperemia => "patient_hyperemia",
            AnchorLabel::PatientSuperemia => "patient_superemia",
            AnchorLabel::IdealHyperemia => "ideal_hyperemia",
            AnchorLabel::IdealSuperemia => "ideal_superemia",
        }
    }
}

impl std::fmt::Display for AnchorLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four full-order states spanning the exploration space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub patient_hyperemia: HemodynamicSolution,
    pub patient_superemia: HemodynamicSolution,
    pub ideal_hyperemia: HemodynamicSolution,
    pub ideal_superemia: HemodynamicSolution,
}

impl AnchorSet {
    pub fn get(&self, label: AnchorLabel) -> &HemodynamicSolution {
        match label {
            AnchorLabel::PatientHyperemia => &self.patient_hyperemia,
            AnchorLabel::PatientSuperemia => &self.patient_superemia,
            AnchorLabel::IdealHyperemia => &self.ideal_hyperemia,
            AnchorLabel::IdealSuperemia => &self.ideal_superemia,
        }
    }
}

pub fn run_anchors(
    patient: &CenterlineTree,
    ideal: &CenterlineTree,
    bc_hyperemia: &BoundaryConditionSet,
    config: &OracleConfig,
    mode: ExecutionMode,
) -> Result<AnchorSet> {
    if !patient.same_topology(ideal) {
        return Err(Error::TopologyMismatch("patient and ideal trees differ".into()));
    }
    let bc_superemia = bc_hyperemia.superemic();
    let mut solved = mode
        .map(&AnchorLabel::ALL, |&label| {
            let tree = if label.is_ideal() { ideal } else { patient };
            let bc = if label.is_superemic() { &bc_superemia } else { bc_hyperemia };
            let sol = solve_steady(tree, bc, config)?;
            if !sol.converged {
                return Err(Error::NotConverged { label: label.to_string(), iterations: sol.iterations });
            }
            Ok(sol)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ideal_superemia = solved.pop().expect("four anchors");
    let ideal_hyperemia = solved.pop().expect("four anchors");
    let patient_superemia = solved.pop().expect("four anchors");
    let patient_hyperemia = solved.pop().expect("four anchors");
    Ok(AnchorSet { patient_hyperemia, patient_superemia, ideal_hyperemia, ideal_superemia })
}

/// Point table (`id,pressure,ffr`) and edge table (`proximal_id,distal_id,flow`).
pub fn solution_tables(tree: &CenterlineTree, sol: &HemodynamicSolution) -> (String, String) {
    let mut points = String::from("id,pressure,ffr\n");
    for id in 0..tree.len() {
        let _ = writeln!(points, "{id},{},{}", sol.pressures[id], sol.ffr[id]);
    }
    let mut edges = String::from("proximal_id,distal_id,flow\n");
    for k in tree.edges() {
        let _ = writeln!(edges, "{},{k},{}", tree.parent(k).expect("non-root"), sol.flows[k]);
    }
    (points, edges)
}
