//! Patient-specific response surface.
//!
//! Each edge carries an affine resistance law `R = a + b·Q`. The law is fitted
//! at both corners of the exploration space (patient and ideal geometry) from
//! a hyperemic/superemic pair of full-order states, then interpolated to any
//! intermediate lumen: `a` with a weight that is exact for Poiseuille
//! (`∝ 1/r⁴`) losses and `b` with a weight that is exact for Bernoulli
//! (`∝ (1/A³)·dA/dz`) losses.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecutionMode;
use crate::ideal::IdealProfile;
use crate::oracle::{
    bernoulli_coefficient, poiseuille_resistance, run_anchors, AnchorSet, BoundaryConditionSet, HemodynamicSolution,
    OracleConfig,
};
use crate::psrom::{edge_resistances, rbfs_effective_resistance, ResistanceFloor};
use crate::tree::{CenterlineTree, SegmentGeometry};
use crate::RECOVERY_ZONE_LENGTH;

const ENVELOPE_TOLERANCE: f64 = 1e-9;
const DEGENERATE_RADIUS_GAP: f64 = 1e-6;
const DEGENERATE_GRADIENT_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    Fitted,
    PoiseuilleFallback,
    RecoveryPoiseuille,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCoefficients {
    /// dyn·s/cm⁵
    pub a: f64,
    /// dyn·s²/cm⁸
    pub b: f64,
    pub source: CoefficientSource,
}

impl EdgeCoefficients {
    pub fn resistance(&self, q: f64) -> f64 {
        self.a + self.b * q
    }

    fn unused() -> Self {
        EdgeCoefficients { a: 0.0, b: 0.0, source: CoefficientSource::Fitted }
    }
}

/// Which sign of `dA/dz` counts as "negative" in the recovery rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientConvention {
    /// Area decreasing from proximal to distal.
    ProximalToDistal,
    /// Area decreasing from distal to proximal, i.e. the lumen widens
    /// downstream and pressure recovers.
    #[default]
    DistalToProximal,
}

impl GradientConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            GradientConvention::ProximalToDistal => "proximal-to-distal",
            GradientConvention::DistalToProximal => "distal-to-proximal",
        }
    }

    fn is_negative(self, geometry: &SegmentGeometry) -> bool {
        match self {
            GradientConvention::ProximalToDistal => geometry.area_gradient < 0.0,
            GradientConvention::DistalToProximal => geometry.area_gradient > 0.0,
        }
    }
}

impl std::str::FromStr for GradientConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [GradientConvention::ProximalToDistal, GradientConvention::DistalToProximal]
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "gradient_convention",
                reason: format!("unknown value {s}"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    /// Minimum relative superemic flow gain for a fitted law.
    pub tol1: f64,
    /// cm
    pub recovery_zone_length: f64,
    pub gradient_convention: GradientConvention,
    #[serde(default)]
    pub fallback: FallbackLaw,
}

/// Coefficients of an edge whose superemic flow gain is too small to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackLaw {
    /// `a` from Poiseuille on the mean radius, `b` from the Bernoulli
    /// contraction term.
    Analytic,
    /// Bernoulli `b` as above, with `a` chosen so that the law passes through
    /// the hyperemic anchor.
    #[default]
    AnchorConsistent,
}

impl FallbackLaw {
    pub fn as_str(self) -> &'static str {
        match self {
            FallbackLaw::Analytic => "analytic",
            FallbackLaw::AnchorConsistent => "anchor-consistent",
        }
    }
}

impl std::str::FromStr for FallbackLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [FallbackLaw::Analytic, FallbackLaw::AnchorConsistent]
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter { name: "fallback", reason: format!("unknown value {s}") })
    }
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            tol1: 0.1,
            recovery_zone_length: RECOVERY_ZONE_LENGTH,
            gradient_convention: GradientConvention::default(),
            fallback: FallbackLaw::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface {
    pub patient_tree: CenterlineTree,
    pub ideal_tree: CenterlineTree,
    pub bc_hyperemia: BoundaryConditionSet,
    pub anchors: AnchorSet,
    /// Indexed by edge (distal point id); slot 0 is unused.
    pub patient_coeffs: Vec<EdgeCoefficients>,
    pub ideal_coeffs: Vec<EdgeCoefficients>,
    /// Flow-split correction per daughter point; 1 for every other point.
    pub gamma: Vec<f64>,
    pub config: SurfaceConfig,
}

/// Fit `R = a + b·Q` on one edge from a hyperemic/superemic pair, falling
/// back to analytic coefficients when the superemic flow gain is at most
/// `tol1` of the hyperemic flow.
pub fn fit_edge_coefficients(
    tree: &CenterlineTree,
    anchor_h: &HemodynamicSolution,
    anchor_s: &HemodynamicSolution,
    edge: usize,
    bc: &BoundaryConditionSet,
    config: &SurfaceConfig,
) -> Result<EdgeCoefficients> {
    let parent = tree.parent(edge).expect("edge ids are non-root points");
    let (qh, qs) = (anchor_h.flows[edge], anchor_s.flows[edge]);
    for q in [qh, qs] {
        if !(q > 0.0) {
            return Err(Error::NonPositiveFlow { edge, flow: q });
        }
    }
    let dph = anchor_h.pressures[parent] - anchor_h.pressures[edge];
    if qs - qh <= config.tol1 * qh {
        let geometry = tree.segment(edge);
        let b = bernoulli_coefficient(&geometry, bc.density).max(0.0);
        let a = match config.fallback {
            FallbackLaw::Analytic => poiseuille_resistance(&geometry, bc.viscosity),
            FallbackLaw::AnchorConsistent => dph / qh - b * qh,
        };
        return Ok(EdgeCoefficients { a, b, source: CoefficientSource::PoiseuilleFallback });
    }
    let dps = anchor_s.pressures[parent] - anchor_s.pressures[edge];
    let b = (dps / qs - dph / qh) / (qs - qh);
    let a = (dps * qh / qs - dph * qs / qh) / (qh - qs);
    Ok(EdgeCoefficients { a, b, source: CoefficientSource::Fitted })
}

fn fit_all(
    tree: &CenterlineTree,
    anchor_h: &HemodynamicSolution,
    anchor_s: &HemodynamicSolution,
    bc: &BoundaryConditionSet,
    config: &SurfaceConfig,
) -> Result<Vec<EdgeCoefficients>> {
    let mut coeffs = vec![EdgeCoefficients::unused(); tree.len()];
    for k in tree.edges() {
        coeffs[k] = fit_edge_coefficients(tree, anchor_h, anchor_s, k, bc, config)?;
    }
    Ok(coeffs)
}

/// Per-daughter correction to the inverse-resistance split rule, such that
/// splitting the patient-hyperemia anchor flows with it is exact.
pub fn extract_gamma(
    tree: &CenterlineTree,
    anchor_h: &HemodynamicSolution,
    patient_coeffs: &[EdgeCoefficients],
    bc: &BoundaryConditionSet,
) -> Result<Vec<f64>> {
    let mut edge_r = edge_resistances(patient_coeffs, &anchor_h.flows, ResistanceFloor::Downstream);
    let reff = rbfs_effective_resistance(tree, &mut edge_r, &bc.dense_resistances(tree.len()))?;
    let mut gamma = vec![1.0; tree.len()];
    for m in tree.branch_points() {
        let qm = anchor_h.flows[m];
        if !(qm > 0.0) {
            return Err(Error::NonPositiveFlow { edge: m, flow: qm });
        }
        for &d in tree.children(m) {
            let predicted = qm * reff.values[m] / (edge_r[d] + reff.values[d]);
            gamma[d] = anchor_h.flows[d] / predicted;
        }
    }
    Ok(gamma)
}

/// Poiseuille-consistent weight: 1 at `r_orig`, 0 at `r_ideal`, `∝ 1/r⁴`.
pub fn alpha(r: f64, r_orig: f64, r_ideal: f64) -> f64 {
    let (o4, i4) = (r_orig.powi(4), r_ideal.powi(4));
    if (r_ideal - r_orig).abs() < DEGENERATE_RADIUS_GAP * r_orig {
        return 1.0;
    }
    let alpha0 = i4 * o4 / (i4 - o4);
    let alpha1 = -o4 / (i4 - o4);
    alpha0 / r.powi(4) + alpha1
}

fn gradients_degenerate(g_orig: f64, g_ideal: f64) -> bool {
    let scale = g_orig.abs().max(g_ideal.abs());
    (g_orig - g_ideal).abs() < DEGENERATE_GRADIENT_GAP.max(1e-9 * scale)
}

/// Bernoulli-consistent weight `(g − g_ideal)/(g_orig − g_ideal)` with
/// `g = (1/A³)·dA/dz`; `None` when the two corner gradients coincide.
pub fn beta(area: f64, area_gradient: f64, orig: &SegmentGeometry, ideal: &SegmentGeometry) -> Option<f64> {
    let g = area_gradient / area.powi(3);
    let (go, gi) = (orig.bernoulli_gradient(), ideal.bernoulli_gradient());
    if gradients_degenerate(go, gi) {
        return None;
    }
    Some((g - gi) / (go - gi))
}

/// The same weight in the `β₀·g + β₁` form; needs a non-zero ideal gradient.
pub fn beta_printed_form(
    area: f64,
    area_gradient: f64,
    orig: &SegmentGeometry,
    ideal: &SegmentGeometry,
) -> Option<f64> {
    let (ao, ai) = (orig.bernoulli_area(), ideal.bernoulli_area());
    let (dao, dai) = (orig.area_gradient, ideal.area_gradient);
    let go = dao / ao.powi(3);
    let gi = dai / ai.powi(3);
    if dai == 0.0 || gradients_degenerate(go, gi) {
        return None;
    }
    let beta0 = 1.0 / (go - gi);
    let beta1 = 1.0 / (1.0 - (ai / ao).powi(3) * dao / dai);
    Some(beta0 / area.powi(3) * area_gradient + beta1)
}

/// Edges (by distal id) whose proximal point lies within `length` of arc
/// distal to the end of a modified edge, excluding modified edges.
pub fn recovery_zone(tree: &CenterlineTree, modified_edges: &BTreeSet<usize>, length: f64) -> Vec<bool> {
    let n = tree.len();
    let mut since_modified = vec![f64::INFINITY; n];
    let mut zone = vec![false; n];
    for k in tree.edges() {
        let parent = tree.parent(k).expect("non-root");
        if modified_edges.contains(&k) {
            since_modified[k] = 0.0;
        } else {
            zone[k] = since_modified[parent] <= length + 1e-9;
            since_modified[k] = since_modified[parent] + tree.point(k).arc_length_from_parent;
        }
    }
    zone
}

fn check_envelope(surface: &ResponseSurface, modified: &CenterlineTree) -> Result<()> {
    if !modified.same_topology(&surface.patient_tree) {
        return Err(Error::TopologyMismatch("modified tree differs from patient tree".into()));
    }
    for id in 0..modified.len() {
        let r = modified.radius(id);
        let lower = surface.patient_tree.radius(id);
        let upper = surface.ideal_tree.radius(id);
        if r < lower - ENVELOPE_TOLERANCE || r > upper + ENVELOPE_TOLERANCE {
            return Err(Error::OutsideEnvelope { id, radius: r, lower, upper });
        }
    }
    Ok(())
}

fn same_segment(a: &SegmentGeometry, b: &SegmentGeometry) -> bool {
    a.radius_proximal == b.radius_proximal && a.radius_distal == b.radius_distal
}

fn interpolate(
    modified: &SegmentGeometry,
    orig: &SegmentGeometry,
    ideal: &SegmentGeometry,
    c_orig: &EdgeCoefficients,
    c_ideal: &EdgeCoefficients,
) -> EdgeCoefficients {
    let wa = alpha(modified.mean_radius(), orig.mean_radius(), ideal.mean_radius());
    let wb = beta(modified.bernoulli_area(), modified.area_gradient, orig, ideal).unwrap_or(wa);
    let source = if c_orig.source == CoefficientSource::Fitted && c_ideal.source == CoefficientSource::Fitted {
        CoefficientSource::Fitted
    } else {
        CoefficientSource::PoiseuilleFallback
    };
    EdgeCoefficients { a: wa * c_orig.a + (1.0 - wa) * c_ideal.a, b: wb * c_orig.b + (1.0 - wb) * c_ideal.b, source }
}

/// Coefficients for a geometry inside the patient/ideal envelope.
pub fn coefficients_for_geometry(
    surface: &ResponseSurface,
    modified: &CenterlineTree,
    modified_edges: &BTreeSet<usize>,
) -> Result<Vec<EdgeCoefficients>> {
    check_envelope(surface, modified)?;
    let zone = recovery_zone(modified, modified_edges, surface.config.recovery_zone_length);
    let mut coeffs = vec![EdgeCoefficients::unused(); modified.len()];
    for k in modified.edges() {
        let geo = modified.segment(k);
        let orig = surface.patient_tree.segment(k);
        let ideal = surface.ideal_tree.segment(k);
        coeffs[k] = if zone[k] && surface.config.gradient_convention.is_negative(&geo) {
            EdgeCoefficients {
                a: poiseuille_resistance(&geo, surface.bc_hyperemia.viscosity),
                b: 0.0,
                source: CoefficientSource::RecoveryPoiseuille,
            }
        } else if same_segment(&geo, &orig) || same_segment(&orig, &ideal) {
            surface.patient_coeffs[k]
        } else if same_segment(&geo, &ideal) {
            surface.ideal_coeffs[k]
        } else {
            interpolate(&geo, &orig, &ideal, &surface.patient_coeffs[k], &surface.ideal_coeffs[k])
        };
    }
    Ok(coeffs)
}

/// Run the four anchors and assemble the surface.
pub fn build_surface(
    patient: &CenterlineTree,
    ideal: &IdealProfile,
    bc_hyperemia: &BoundaryConditionSet,
    oracle: &OracleConfig,
    config: &SurfaceConfig,
    mode: ExecutionMode,
) -> Result<ResponseSurface> {
    let ideal_tree = patient.with_radii(&ideal.radius_ideal)?.renamed(format!("{}-ideal", patient.name()));
    let anchors = run_anchors(patient, &ideal_tree, bc_hyperemia, oracle, mode)?;
    let (patient_coeffs, ideal_coeffs) = mode.join(
        || fit_all(patient, &anchors.patient_hyperemia, &anchors.patient_superemia, bc_hyperemia, config),
        || fit_all(&ideal_tree, &anchors.ideal_hyperemia, &anchors.ideal_superemia, bc_hyperemia, config),
    );
    let patient_coeffs = patient_coeffs?;
    let ideal_coeffs = ideal_coeffs?;
    let gamma = extract_gamma(patient, &anchors.patient_hyperemia, &patient_coeffs, bc_hyperemia)?;
    Ok(ResponseSurface {
        patient_tree: patient.clone(),
        ideal_tree,
        bc_hyperemia: bc_hyperemia.clone(),
        anchors,
        patient_coeffs,
        ideal_coeffs,
        gamma,
        config: *config,
    })
}

pub fn save_surface(surface: &ResponseSurface, sink: impl Write) -> Result<()> {
    serde_json::to_writer(sink, surface)?;
    Ok(())
}

pub fn load_surface(source: impl Read) -> Result<ResponseSurface> {
    Ok(serde_json::from_reader(source)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_steady;
    use crate::tree::fixtures::{bifurcation, point, tube};
    use crate::DEFAULT_AORTIC_PRESSURE;

    fn state(pressures: Vec<f64>, flows: Vec<f64>) -> HemodynamicSolution {
        HemodynamicSolution::from_parts(pressures, flows, 13_332.0, true, 1)
    }

    #[test]
    fn fits_two_by_two_system() {
        let tree = tube(2, 1.0, 0.2);
        let bc = BoundaryConditionSet::new([(1, 1e4)].into());
        let h = state(vec![13_332.0, 12_332.0], vec![1.0, 1.0]);
        let s = state(vec![13_332.0, 10_932.0], vec![2.0, 2.0]);
        let c = fit_edge_coefficients(&tree, &h, &s, 1, &bc, &SurfaceConfig::default()).unwrap();
        assert_eq!(c.source, CoefficientSource::Fitted);
        assert!((c.b - 200.0).abs() < 1e-9);
        assert!((c.a - 800.0).abs() < 1e-9);
    }

    #[test]
    fn flow_limited_edge_falls_back() {
        let tree = tube(2, 1.0, 0.2);
        let bc = BoundaryConditionSet::new([(1, 1e4)].into());
        let h = state(vec![13_332.0, 12_332.0], vec![1.0, 1.0]);
        let analytic = SurfaceConfig { fallback: FallbackLaw::Analytic, ..SurfaceConfig::default() };
        let c = fit_edge_coefficients(&tree, &h, &h, 1, &bc, &analytic).unwrap();
        assert_eq!(c.source, CoefficientSource::PoiseuilleFallback);
        assert!((c.a - poiseuille_resistance(&tree.segment(1), bc.viscosity)).abs() < 1e-12);
        assert_eq!(c.b, 0.0);

        let c = fit_edge_coefficients(&tree, &h, &h, 1, &bc, &SurfaceConfig::default()).unwrap();
        assert_eq!(c.source, CoefficientSource::PoiseuilleFallback);
        assert!((c.resistance(1.0) - 1000.0).abs() < 1e-9, "{c:?}");

        let zero = state(vec![13_332.0, 13_332.0], vec![0.0, 0.0]);
        assert!(matches!(
            fit_edge_coefficients(&tree, &zero, &h, 1, &bc, &SurfaceConfig::default()),
            Err(Error::NonPositiveFlow { edge: 1, .. })
        ));
    }

    #[test]
    fn healthy_tube_fits_poiseuille() {
        let tree = tube(6, 0.2, 0.15);
        let bc = BoundaryConditionSet::new([(5, 60_000.0)].into());
        let cfg = OracleConfig::default();
        let h = solve_steady(&tree, &bc, &cfg).unwrap();
        let s = solve_steady(&tree, &bc.superemic(), &cfg).unwrap();
        let c = fit_edge_coefficients(&tree, &h, &s, 3, &bc, &SurfaceConfig::default()).unwrap();
        assert_eq!(c.source, CoefficientSource::Fitted);
        let expected = poiseuille_resistance(&tree.segment(3), bc.viscosity);
        assert!((c.a - expected).abs() < 1e-6 * expected, "a = {} vs {expected}", c.a);
        assert!(c.b.abs() < 1e-4 * expected);
    }

    #[test]
    fn alpha_values() {
        assert!((alpha(0.1, 0.1, 0.2) - 1.0).abs() < 1e-12);
        assert!(alpha(0.2, 0.1, 0.2).abs() < 1e-12);
        // independent route: normalized 1/r⁴
        let direct = (0.15f64.powi(-4) - 0.2f64.powi(-4)) / (0.1f64.powi(-4) - 0.2f64.powi(-4));
        assert!((alpha(0.15, 0.1, 0.2) - direct).abs() < 1e-12);
        assert!((alpha(0.15, 0.1, 0.2) - 0.144_03).abs() < 1e-5);
        assert_eq!(alpha(0.2, 0.2, 0.2), 1.0);
    }

    #[test]
    fn beta_values() {
        let orig = SegmentGeometry::new(0, 1, 0.5, 0.2, 0.12);
        let ideal = SegmentGeometry::new(0, 1, 0.5, 0.2, 0.2);
        let at_orig = beta(orig.bernoulli_area(), orig.area_gradient, &orig, &ideal).unwrap();
        let at_ideal = beta(ideal.bernoulli_area(), ideal.area_gradient, &orig, &ideal).unwrap();
        assert!((at_orig - 1.0).abs() < 1e-12);
        assert!(at_ideal.abs() < 1e-12);
        // ideal gradient zero: the printed form is undefined
        assert!(beta_printed_form(orig.bernoulli_area(), orig.area_gradient, &orig, &ideal).is_none());
        // uniform dilation of a uniform segment: both gradients vanish
        let flat = SegmentGeometry::new(0, 1, 0.5, 0.1, 0.1);
        assert!(beta(flat.bernoulli_area(), 0.0, &flat, &ideal).is_none());
    }

    #[test]
    fn beta_half_way_in_gradient() {
        // g_orig = −0.4, g_ideal = 0, g = −0.2  →  0.5
        let g = |seg: &SegmentGeometry| seg.bernoulli_gradient();
        let orig = SegmentGeometry::new(0, 1, 1.0, 1.0, 0.99);
        let ideal = SegmentGeometry::new(0, 1, 1.0, 1.0, 1.0);
        let (go, gi) = (g(&orig), g(&ideal));
        let target = go / 2.0;
        let value = beta(1.0, target, &orig, &ideal).unwrap();
        assert!((value - (target - gi) / (go - gi)).abs() < 1e-12);
        assert!((value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn recovery_zone_boundary() {
        // 61 points at 0.1 cm: modified edges end at arc 1.0
        let tree = tube(61, 0.1, 0.2);
        let modified: BTreeSet<usize> = (1..=10).collect();
        let zone = recovery_zone(&tree, &modified, 2.0);
        assert!(!zone[10]);
        assert!(zone[11]);
        // edge with proximal point at arc 2.5 (= s₀ + 1.5)
        assert!(zone[26]);
        // proximal point at arc 3.0 is exactly 2.0 distal: inclusive
        assert!(zone[31]);
        // proximal point at arc 3.5 (= s₀ + 2.5)
        assert!(!zone[36]);
    }

    #[test]
    fn surface_reproduces_patient_anchor() {
        let pts = vec![
            point(0, None, 0.0, 0.2, false),
            point(1, Some(0), 0.5, 0.2, false),
            point(2, Some(1), 0.3, 0.1, false),
            point(3, Some(2), 0.3, 0.19, false),
            point(4, Some(3), 0.5, 0.19, false),
            point(5, Some(4), 1.0, 0.14, false),
            point(6, Some(5), 1.0, 0.14, true),
            point(7, Some(4), 1.0, 0.12, false),
            point(8, Some(7), 1.0, 0.12, true),
        ];
        let patient = CenterlineTree::new("p", pts).unwrap();
        let profile = crate::fit_ideal(&crate::IdealFitProblem::new(&patient)).unwrap();
        let mut bc = BoundaryConditionSet::new([(6, 60_000.0), (8, 90_000.0)].into());
        bc.aortic_pressure = DEFAULT_AORTIC_PRESSURE;
        let surface = build_surface(
            &patient,
            &profile,
            &bc,
            &OracleConfig::default(),
            &SurfaceConfig::default(),
            ExecutionMode::Sequential,
        )
        .unwrap();
        let h = &surface.anchors.patient_hyperemia;
        for k in patient.edges() {
            let c = surface.patient_coeffs[k];
            if c.source == CoefficientSource::Fitted {
                let parent = patient.parent(k).unwrap();
                let dp = h.pressures[parent] - h.pressures[k];
                assert!((c.resistance(h.flows[k]) * h.flows[k] - dp).abs() <= 1e-6 * dp.abs().max(1e-12));
            }
        }
        for d in [5, 7] {
            assert!((surface.gamma[d] - 1.0).abs() < 1e-9, "gamma {}", surface.gamma[d]);
        }

        let none = BTreeSet::new();
        let at_patient = coefficients_for_geometry(&surface, &patient, &none).unwrap();
        assert_eq!(&at_patient[1..], &surface.patient_coeffs[1..]);
        let at_ideal = coefficients_for_geometry(&surface, &surface.ideal_tree, &none).unwrap();
        for k in patient.edges() {
            let expected = if patient.segment(k) == surface.ideal_tree.segment(k) {
                surface.patient_coeffs[k]
            } else {
                surface.ideal_coeffs[k]
            };
            assert_eq!(at_ideal[k], expected, "edge {k}");
        }

        let too_big = patient.with_radii(&vec![0.3; patient.len()]).unwrap();
        assert!(matches!(coefficients_for_geometry(&surface, &too_big, &none), Err(Error::OutsideEnvelope { .. })));

        let mut buf = Vec::new();
        save_surface(&surface, &mut buf).unwrap();
        assert_eq!(load_surface(buf.as_slice()).unwrap(), surface);
    }

    #[test]
    fn gamma_symmetric_bifurcation() {
        let tree = bifurcation(0.2, 0.15, 0.15);
        let bc = BoundaryConditionSet::new([(4, 50_000.0), (6, 50_000.0)].into());
        let h = solve_steady(&tree, &bc, &OracleConfig::default()).unwrap();
        let s = solve_steady(&tree, &bc.superemic(), &OracleConfig::default()).unwrap();
        let coeffs = fit_all(&tree, &h, &s, &bc, &SurfaceConfig::default()).unwrap();
        let gamma = extract_gamma(&tree, &h, &coeffs, &bc).unwrap();
        assert!((gamma[3] - 1.0).abs() < 1e-9 && (gamma[5] - 1.0).abs() < 1e-9);
    }
}
