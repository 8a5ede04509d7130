//! Real-time "what-if" coronary hemodynamics on centerline trees.
//!
//! A patient tree and its fitted healthy envelope span an exploration space
//! of lumen geometries. Four full-order solutions at the corners of that space
//! (two geometries × two microvascular states) yield per-edge affine
//! resistance laws `R = a + b·Q`. Any geometry between the two corners is then
//! solved in milliseconds by interpolating those laws and running a
//! predictor-corrector sweep over the tree.
//!
//! Module map:
//!
//! - [`tree`]: centerline trees, serialization, geometric queries
//! - [`ideal`]: monotone healthy-profile fit
//! - [`oracle`]: full-order steady network solver and anchor generation
//! - [`surface`]: per-edge coefficients, flow-split corrections, interpolation
//! - [`psrom`]: the predictor-corrector solver
//! - [`intervention`]: lesion detection and virtual stenting
//! - [`exec`]: parallel/sequential execution switch

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod ideal;
pub mod intervention;
pub mod oracle;
pub mod psrom;
pub mod surface;
pub mod tree;

pub use error::{Error, Result};
pub use exec::ExecutionMode;
pub use ideal::{brute_force_ideal, dilated_tree, fit_ideal, IdealFitProblem, IdealProfile};
pub use intervention::{
    apply_modification, classify_lesion, detect_lesions, select_evaluation_points, Lesion, LesionKind,
    ModificationPlan, PlanInterval,
};
pub use oracle::{
    run_anchors, segment_loss, solve_network, solve_steady, AnchorLabel, AnchorSet, BoundaryConditionSet,
    HemodynamicSolution, OracleConfig, OutletModel,
};
pub use psrom::{ffr_trace, solve, SolverConfig};
pub use surface::{build_surface, EdgeCoefficients, FallbackLaw, ResponseSurface, SurfaceConfig};
pub use tree::{
    load_tree, root_to_leaf_paths, save_tree, segment_geometries, CenterlinePoint, CenterlineTree, SegmentGeometry,
};

/// dyn/cm² per mmHg.
pub const MMHG: f64 = 1333.22;
/// 100 mmHg.
pub const DEFAULT_AORTIC_PRESSURE: f64 = 100.0 * MMHG;
/// Poise.
pub const DEFAULT_VISCOSITY: f64 = 0.04;
/// g/cm³
pub const DEFAULT_DENSITY: f64 = 1.06;
/// Superemia multiplies every outlet resistance by this factor.
pub const SUPEREMIA_RESISTANCE_FACTOR: f64 = 0.6;
/// Length of the pressure-recovery zone distal to a modification, cm.
pub const RECOVERY_ZONE_LENGTH: f64 = 2.0;
