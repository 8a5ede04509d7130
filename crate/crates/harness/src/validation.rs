//! Modify → ground truth → reduced model → compare.

use std::collections::BTreeSet;
use std::time::Instant;

use psrom_core::intervention::{suggested_plan, EvaluationConfig, LesionConfig};
use psrom_core::psrom::solve_with_bc;
use psrom_core::surface::coefficients_for_geometry;
use psrom_core::{
    apply_modification, build_surface, detect_lesions, fit_ideal, select_evaluation_points, solve_network, AnchorLabel,
    ExecutionMode, IdealFitProblem, LesionKind, OracleConfig, OutletModel, ResponseSurface, SolverConfig,
    SurfaceConfig,
};
use serde::{Deserialize, Serialize};

use crate::synth::{generate, SynthConfig, SyntheticPatient};

/// FFR above this is reported but flagged as pressure-recovery overshoot.
pub const FFR_OVERSHOOT_LIMIT: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ValidationConfig {
    pub oracle: OracleConfig,
    pub surface: SurfaceConfig,
    pub solver: SolverConfig,
    pub lesion: LesionConfig,
    pub evaluation: EvaluationConfig,
    pub blend_length: BlendLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendLength(pub f64);

impl Default for BlendLength {
    fn default() -> Self {
        BlendLength(0.2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub case_id: usize,
    pub lesion_index: usize,
    pub lesion_kind: LesionKind,
    pub point_id: usize,
    pub ffr_oracle: f64,
    pub ffr_psrom: f64,
    pub delta: f64,
    pub ffr_pre_modification: f64,
    /// Seconds spent in the reduced-model predict step for this lesion.
    pub psrom_runtime: f64,
    /// Either FFR exceeds 1 (recovery overshoot).
    pub overshoot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaseOutcome {
    Completed(Vec<ComparisonRecord>),
    Dropped { case_id: usize, reason: String },
}

fn drop_case(case_id: usize, reason: impl ToString) -> CaseOutcome {
    CaseOutcome::Dropped { case_id, reason: reason.to_string() }
}

/// Surface construction shared by the validation run and the anchor check.
pub fn prepare(patient: &SyntheticPatient, config: &ValidationConfig) -> psrom_core::Result<ResponseSurface> {
    let profile = fit_ideal(&IdealFitProblem::new(&patient.tree))?;
    build_surface(&patient.tree, &profile, &patient.bc, &config.oracle, &config.surface, ExecutionMode::Sequential)
}

pub fn run_case(patient: &SyntheticPatient, config: &ValidationConfig) -> CaseOutcome {
    let case_id = patient.case_id;
    let surface = match prepare(patient, config) {
        Ok(s) => s,
        Err(e) => return drop_case(case_id, e),
    };
    let tree = &patient.tree;
    let ideal = surface.ideal_tree.radii();
    let lesions = match detect_lesions(tree, &ideal, &config.lesion) {
        Ok(l) => l,
        Err(e) => return drop_case(case_id, e),
    };
    let pre = &surface.anchors.patient_hyperemia;
    let passive = OutletModel::PressureScaled { reference_pressures: pre.outlet_pressures(tree) };

    let mut records = Vec::new();
    for (lesion_index, lesion) in lesions.iter().enumerate() {
        let plan = suggested_plan(tree, lesion, config.blend_length.0);
        let (modified, edges) = match apply_modification(tree, &ideal, &plan) {
            Ok(m) => m,
            Err(e) => return drop_case(case_id, e),
        };
        let truth = match solve_network(&modified, &patient.bc, &passive, &config.oracle) {
            Ok(t) if t.converged => t,
            Ok(t) => {
                return drop_case(case_id, format!("ground truth did not converge in {} iterations", t.iterations))
            }
            Err(e) => return drop_case(case_id, e),
        };
        let start = Instant::now();
        let predicted = solve_with_bc(&surface, &modified, &edges, &patient.bc, &config.solver);
        let runtime = start.elapsed().as_secs_f64();
        let predicted = match predicted {
            Ok(p) => p,
            Err(e) => return drop_case(case_id, e),
        };
        for point_id in select_evaluation_points(&modified, &edges, &config.evaluation) {
            let (ffr_oracle, ffr_psrom) = (truth.ffr[point_id], predicted.ffr[point_id]);
            records.push(ComparisonRecord {
                case_id,
                lesion_index,
                lesion_kind: lesion.kind,
                point_id,
                ffr_oracle,
                ffr_psrom,
                delta: ffr_psrom - ffr_oracle,
                ffr_pre_modification: pre.ffr[point_id],
                psrom_runtime: runtime,
                overshoot: ffr_oracle > 1.0 || ffr_psrom > 1.0,
            });
        }
    }
    CaseOutcome::Completed(records)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchResult {
    /// Ordered by case, lesion and point.
    pub records: Vec<ComparisonRecord>,
    pub dropped: Vec<(usize, String)>,
    pub cases: usize,
}

pub fn run_batch(
    seed: u64,
    cases: usize,
    synth: &SynthConfig,
    config: &ValidationConfig,
    mode: ExecutionMode,
) -> BatchResult {
    let outcomes = mode.map_range(0..cases, |case_id| run_case(&generate(seed, case_id, synth), config));
    let mut result = BatchResult { cases, ..BatchResult::default() };
    for outcome in outcomes {
        match outcome {
            CaseOutcome::Completed(records) => result.records.extend(records),
            CaseOutcome::Dropped { case_id, reason } => {
                log::warn!("case {case_id} dropped: {reason}");
                result.dropped.push((case_id, reason));
            }
        }
    }
    result
}

/// Ostial-flow tolerance for the anchor check, tight enough that the
/// stopping rule does not mask the accuracy of the surface.
pub const ANCHOR_CHECK_TOL2: f64 = 1e-6;

/// Worst pointwise FFR error of the reduced model at each anchor
/// configuration, solved with the outlet law the anchors were computed with.
pub fn anchor_reproduction(surface: &ResponseSurface, config: &ValidationConfig) -> psrom_core::Result<[f64; 4]> {
    let fixed = SolverConfig { tol2: ANCHOR_CHECK_TOL2, max_iterations: 1000, ..config.solver.without_bc_scaling() };
    let mut worst = [0.0; 4];
    for (slot, label) in AnchorLabel::ALL.into_iter().enumerate() {
        let geometry = if label.is_ideal() { &surface.ideal_tree } else { &surface.patient_tree };
        let bc = if label.is_superemic() { surface.bc_hyperemia.superemic() } else { surface.bc_hyperemia.clone() };
        let sol = solve_with_bc(surface, geometry, &BTreeSet::new(), &bc, &fixed)?;
        let anchor = surface.anchors.get(label);
        worst[slot] = sol.ffr.iter().zip(&anchor.ffr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    }
    Ok(worst)
}

/// Predict-step wall time for an arbitrary modification, seconds.
pub fn time_predict(
    surface: &ResponseSurface,
    modified: &psrom_core::CenterlineTree,
    edges: &BTreeSet<usize>,
    solver: &SolverConfig,
) -> psrom_core::Result<f64> {
    let start = Instant::now();
    let coeffs = coefficients_for_geometry(surface, modified, edges)?;
    psrom_core::psrom::solve_with_coefficients(surface, modified, &coeffs, &surface.bc_hyperemia, solver)?;
    Ok(start.elapsed().as_secs_f64())
}
