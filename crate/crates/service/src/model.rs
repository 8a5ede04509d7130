//! Model sessions and the request/response bodies built from them.

use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use psrom_core::intervention::{suggested_plan, EvaluationConfig, LesionConfig};
use psrom_core::tree::TreeDocument;
use psrom_core::{
    apply_modification, build_surface, detect_lesions, fit_ideal, root_to_leaf_paths, select_evaluation_points, solve,
    AnchorLabel, BoundaryConditionSet, CenterlineTree, ExecutionMode, IdealFitProblem, IdealProfile, Lesion,
    LesionKind, ModificationPlan, OracleConfig, ResponseSurface, SolverConfig, SurfaceConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ApiError;

/// Total hyperemic outlet resistance used when a request carries no
/// boundary conditions, dyn·s/cm⁵.
pub const DEFAULT_BED_RESISTANCE: f64 = 45_000.0;

/// Everything that shapes a surface build; part of the model id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct BuildConfig {
    pub oracle: OracleConfig,
    pub surface: SurfaceConfig,
    pub lesion: LesionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateModelRequest {
    pub tree: TreeDocument,
    /// Outlet resistances split in proportion to `r³` at each outlet when omitted.
    #[serde(default)]
    pub boundary_conditions: Option<BoundaryConditionSet>,
}

/// Outlet resistances splitting [`DEFAULT_BED_RESISTANCE`] by Murray's law.
pub fn default_boundary_conditions(tree: &CenterlineTree) -> BoundaryConditionSet {
    let outlets = tree.outlets();
    let weight: f64 = outlets.iter().map(|&o| tree.radius(o).powi(3)).sum();
    BoundaryConditionSet::new(
        outlets.iter().map(|&o| (o, DEFAULT_BED_RESISTANCE * weight / tree.radius(o).powi(3))).collect(),
    )
}

/// Validated inputs of a build, with the content hash that names the model.
#[derive(Debug, Clone)]
pub struct BuildInput {
    pub model_id: String,
    pub tree: CenterlineTree,
    pub bc: BoundaryConditionSet,
    pub config: BuildConfig,
}

impl BuildInput {
    pub fn from_request(request: CreateModelRequest, config: BuildConfig) -> Result<Self, ApiError> {
        let tree = CenterlineTree::try_from(request.tree).map_err(ApiError::invalid_tree)?;
        let bc = request.boundary_conditions.unwrap_or_else(|| default_boundary_conditions(&tree));
        bc.validate(&tree).map_err(ApiError::invalid_boundary_conditions)?;
        let model_id = content_id(&tree, &bc, &config);
        Ok(BuildInput { model_id, tree, bc, config })
    }
}

/// SHA-256 over the canonical JSON of tree, boundary conditions and build
/// configuration, lower-case hex.
pub fn content_id(tree: &CenterlineTree, bc: &BoundaryConditionSet, config: &BuildConfig) -> String {
    let mut hasher = Sha256::new();
    for part in [
        serde_json::to_vec(tree).expect("tree serializes"),
        serde_json::to_vec(bc).expect("boundary conditions serialize"),
        serde_json::to_vec(config).expect("config serializes"),
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(&part);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A built model. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSession {
    pub model_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub build_seconds: f64,
    pub config: BuildConfig,
    pub profile: IdealProfile,
    pub surface: ResponseSurface,
    pub lesions: Vec<Lesion>,
}

impl ModelSession {
    /// Fit the ideal profile, run the four anchors and build the surface.
    /// Slow path: seconds on large trees.
    pub fn build(input: BuildInput) -> Result<Self, ApiError> {
        let start = Instant::now();
        let BuildInput { model_id, tree, bc, config } = input;
        let profile = fit_ideal(&IdealFitProblem::new(&tree)).map_err(ApiError::build_failed)?;
        let surface = build_surface(&tree, &profile, &bc, &config.oracle, &config.surface, ExecutionMode::Parallel)
            .map_err(ApiError::build_failed)?;
        let lesions = detect_lesions(&tree, &profile.radius_ideal, &config.lesion).map_err(ApiError::build_failed)?;
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(ModelSession {
            model_id,
            created_at,
            build_seconds: start.elapsed().as_secs_f64(),
            config,
            profile,
            surface,
            lesions,
        })
    }

    /// The stored surface matches the id and the patient/ideal pair it was
    /// built from.
    pub fn verify(&self) -> bool {
        let s = &self.surface;
        content_id(&s.patient_tree, &s.bc_hyperemia, &self.config) == self.model_id
            && s.ideal_tree.same_topology(&s.patient_tree)
            && s.ideal_tree.radii() == self.profile.radius_ideal
    }

    pub fn summary(&self, built: bool) -> BuildSummary {
        let tree = &self.surface.patient_tree;
        let anchors = AnchorLabel::ALL
            .into_iter()
            .map(|label| {
                let sol = self.surface.anchors.get(label);
                AnchorSummary {
                    label: label.as_str().to_string(),
                    converged: sol.converged,
                    iterations: sol.iterations,
                    outlet_ffr: tree.outlets().into_iter().map(|o| (o, sol.ffr[o])).collect(),
                }
            })
            .collect();
        BuildSummary {
            model_id: self.model_id.clone(),
            built,
            build_seconds: self.build_seconds,
            points: tree.len(),
            outlets: tree.outlets().len(),
            lesions: self.lesions.len(),
            anchors,
        }
    }

    pub fn lesion_report(&self) -> LesionReport {
        let tree = &self.surface.patient_tree;
        let lesions = self
            .lesions
            .iter()
            .enumerate()
            .map(|(index, l)| LesionEntry {
                index,
                path_id: l.path_id,
                arc_start: l.interval.0,
                arc_end: l.interval.1,
                max_narrowing: l.max_narrowing,
                kind: l.kind,
                point_ids: l.member_point_ids.clone(),
                suggested_plan: suggested_plan(tree, l, ModificationPlan::default().blend_length),
            })
            .collect();
        LesionReport { model_id: self.model_id.clone(), lesions }
    }

    pub fn anchor_traces(&self, path: Option<usize>) -> Result<TraceReport, ApiError> {
        let tree = &self.surface.patient_tree;
        let traces = selected_paths(tree, path.map(|p| vec![p]))?
            .into_iter()
            .map(|(path_id, ids)| AnchorTrace {
                path_id,
                arc: ids.iter().map(|&id| tree.arc_from_root(id)).collect(),
                ffr: AnchorLabel::ALL
                    .into_iter()
                    .map(|label| {
                        let sol = self.surface.anchors.get(label);
                        (label.as_str().to_string(), ids.iter().map(|&id| sol.ffr[id]).collect())
                    })
                    .collect(),
                point_ids: ids,
            })
            .collect();
        Ok(TraceReport { model_id: self.model_id.clone(), traces })
    }

    /// Apply a plan and solve the reduced model. Pure: identical requests
    /// give identical results apart from the timing field.
    pub fn evaluate(&self, request: &EvaluateRequest, solver: &SolverConfig) -> Result<EvaluateResponse, ApiError> {
        let tree = &self.surface.patient_tree;
        let paths = selected_paths(tree, request.paths.clone())?;
        let (modified, edges) =
            apply_modification(tree, &self.profile.radius_ideal, &request.plan).map_err(ApiError::plan)?;
        let start = Instant::now();
        let post = solve(&self.surface, &modified, &edges, solver).map_err(ApiError::plan)?;
        let psrom_seconds = start.elapsed().as_secs_f64();
        let pre = &self.surface.anchors.patient_hyperemia;

        let evaluation_points = select_evaluation_points(&modified, &edges, &EvaluationConfig::default())
            .into_iter()
            .map(|id| PointValue {
                point_id: id,
                arc: tree.arc_from_root(id),
                ffr_pre: pre.ffr[id],
                ffr_post: post.ffr[id],
            })
            .collect();
        let traces = paths
            .into_iter()
            .map(|(path_id, ids)| PathTrace {
                path_id,
                arc: ids.iter().map(|&id| tree.arc_from_root(id)).collect(),
                ffr_pre: ids.iter().map(|&id| pre.ffr[id]).collect(),
                ffr_post: ids.iter().map(|&id| post.ffr[id]).collect(),
                point_ids: ids,
            })
            .collect();
        Ok(EvaluateResponse {
            model_id: self.model_id.clone(),
            converged: post.converged,
            iterations: post.iterations,
            modified_edges: edges.len(),
            evaluation_points,
            traces,
            timing: Timing { psrom_seconds },
        })
    }
}

/// `(path_id, point ids)` for the requested paths, all paths when `None`.
fn selected_paths(tree: &CenterlineTree, wanted: Option<Vec<usize>>) -> Result<Vec<(usize, Vec<usize>)>, ApiError> {
    let all = root_to_leaf_paths(tree);
    match wanted {
        None => Ok(all.into_iter().enumerate().collect()),
        Some(ids) => ids
            .into_iter()
            .map(|p| all.get(p).cloned().map(|ids| (p, ids)).ok_or(psrom_core::Error::UnknownPath(p)))
            .collect::<Result<_, _>>()
            .map_err(ApiError::plan),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSummary {
    pub label: String,
    pub converged: bool,
    pub iterations: usize,
    pub outlet_ffr: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub model_id: String,
    /// False when the model already existed or another request built it.
    pub built: bool,
    pub build_seconds: f64,
    pub points: usize,
    pub outlets: usize,
    pub lesions: usize,
    pub anchors: Vec<AnchorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionEntry {
    pub index: usize,
    pub path_id: usize,
    pub arc_start: f64,
    pub arc_end: f64,
    pub max_narrowing: f64,
    pub kind: LesionKind,
    pub point_ids: Vec<usize>,
    /// Full idealization of this lesion.
    pub suggested_plan: ModificationPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionReport {
    pub model_id: String,
    pub lesions: Vec<LesionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorTrace {
    pub path_id: usize,
    pub point_ids: Vec<usize>,
    /// cm from the ostium.
    pub arc: Vec<f64>,
    /// Anchor label to FFR along the path.
    pub ffr: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub model_id: String,
    pub traces: Vec<AnchorTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub plan: ModificationPlan,
    /// Paths to return traces for; all when omitted.
    #[serde(default)]
    pub paths: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    pub point_id: usize,
    pub arc: f64,
    pub ffr_pre: f64,
    pub ffr_post: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub path_id: usize,
    pub point_ids: Vec<usize>,
    pub arc: Vec<f64>,
    /// Patient hyperemia.
    pub ffr_pre: Vec<f64>,
    /// Reduced-model solution for the plan.
    pub ffr_post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub psrom_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub model_id: String,
    /// Non-convergence is reported here, not as an error.
    pub converged: bool,
    pub iterations: usize,
    pub modified_edges: usize,
    pub evaluation_points: Vec<PointValue>,
    pub traces: Vec<PathTrace>,
    pub timing: Timing,
}
