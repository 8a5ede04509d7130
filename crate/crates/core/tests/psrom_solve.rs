mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{murray_outlets, point, stenosed_bifurcation};
use psrom_core::intervention::suggested_plan;
use psrom_core::surface::{coefficients_for_geometry, CoefficientSource};
use psrom_core::{
    apply_modification, build_surface, detect_lesions, fit_ideal, solve, solve_network, solve_steady, AnchorLabel,
    BoundaryConditionSet, CenterlineTree, ExecutionMode, IdealFitProblem, OracleConfig, OutletModel, SolverConfig,
    SurfaceConfig,
};

fn surface_for(tree: &CenterlineTree, bc: &BoundaryConditionSet) -> psrom_core::ResponseSurface {
    let profile = fit_ideal(&IdealFitProblem::new(tree)).unwrap();
    build_surface(tree, &profile, bc, &OracleConfig::default(), &SurfaceConfig::default(), ExecutionMode::Parallel)
        .unwrap()
}

#[test]
fn anchors_are_reproduced() {
    let tree = stenosed_bifurcation(0.6, 1.5, 1.0);
    let bc = murray_outlets(&tree, 45_000.0);
    let surface = surface_for(&tree, &bc);
    let fixed = SolverConfig::default().without_bc_scaling();
    for label in AnchorLabel::ALL {
        let geometry = if label.is_ideal() { &surface.ideal_tree } else { &surface.patient_tree };
        let anchor_bc = if label.is_superemic() { bc.superemic() } else { bc.clone() };
        let sol = psrom_core::psrom::solve_with_bc(&surface, geometry, &BTreeSet::new(), &anchor_bc, &fixed).unwrap();
        assert!(sol.converged, "{label}");
        let anchor = surface.anchors.get(label);
        let worst = sol.ffr.iter().zip(&anchor.ffr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 0.005, "{label}: {worst}");
    }
}

#[test]
fn single_tube_closed_form() {
    // r_p = 0.25 and r_d chosen so that b = 200; viscosity chosen so that a = 800
    let density = 1.06;
    let ap = std::f64::consts::PI * 0.25f64.powi(2);
    let ad = (2.0 * 200.0 / density + ap.powi(-2)).powf(-0.5);
    let rd = (ad / std::f64::consts::PI).sqrt();
    let mean = (0.25 + rd) / 2.0;
    let viscosity = 800.0 * std::f64::consts::PI * mean.powi(4) / 8.0;
    let tree =
        CenterlineTree::new("tube", vec![point(0, None, 0.0, 0.25, false), point(1, Some(0), 1.0, rd, true)]).unwrap();
    let mut bc = BoundaryConditionSet::new(BTreeMap::from([(1, 10_000.0)]));
    bc.aortic_pressure = 13_332.0;
    bc.viscosity = viscosity;
    bc.density = density;

    let q = (-10_800.0 + (10_800.0f64.powi(2) + 4.0 * 200.0 * 13_332.0).sqrt()) / 400.0;
    let ffr = 10_000.0 * q / 13_332.0;
    assert!((q - 1.2074).abs() < 1e-3 * 1.2074);
    assert!((ffr - 0.9057).abs() < 1e-3 * 0.9057);

    let oracle = solve_steady(&tree, &bc, &OracleConfig::default()).unwrap();
    assert!((oracle.ostial_flow - q).abs() < 1e-9 * q);
    assert!((oracle.ffr[1] - ffr).abs() < 1e-9);

    let surface = surface_for(&tree, &bc);
    let c = surface.patient_coeffs[1];
    assert_eq!(c.source, CoefficientSource::Fitted);
    assert!((c.a - 800.0).abs() < 1e-6 && (c.b - 200.0).abs() < 1e-6, "{c:?}");
    let sol = solve(&surface, &tree, &BTreeSet::new(), &SolverConfig::default()).unwrap();
    assert!((sol.ostial_flow - q).abs() < 1e-3 * q);
    assert!((sol.ffr[1] - ffr).abs() < 1e-3 * ffr);
}

#[test]
fn idealized_lesion_matches_passive_oracle() {
    let tree = stenosed_bifurcation(0.65, 1.5, 1.0);
    let bc = murray_outlets(&tree, 45_000.0);
    let surface = surface_for(&tree, &bc);
    let ideal = surface.ideal_tree.radii();
    let lesions = detect_lesions(&tree, &ideal, &Default::default()).unwrap();
    assert_eq!(lesions.len(), 1);
    let plan = suggested_plan(&tree, &lesions[0], 0.2);
    let (modified, edges) = apply_modification(&tree, &ideal, &plan).unwrap();

    let truth = solve_network(
        &modified,
        &bc,
        &OutletModel::PressureScaled { reference_pressures: surface.anchors.patient_hyperemia.outlet_pressures(&tree) },
        &OracleConfig::default(),
    )
    .unwrap();
    let sol = solve(&surface, &modified, &edges, &SolverConfig::default()).unwrap();
    assert!(sol.converged);
    for o in tree.outlets() {
        assert!((sol.ffr[o] - truth.ffr[o]).abs() < 0.02, "outlet {o}: {} vs {}", sol.ffr[o], truth.ffr[o]);
        assert!(sol.ffr[o] > surface.anchors.patient_hyperemia.ffr[o]);
    }
}

#[test]
fn partial_stent_lies_between_corners() {
    let tree = stenosed_bifurcation(0.6, 1.5, 1.0);
    let bc = murray_outlets(&tree, 45_000.0);
    let surface = surface_for(&tree, &bc);
    let ideal = surface.ideal_tree.radii();
    let lesion = detect_lesions(&tree, &ideal, &Default::default()).unwrap().remove(0);
    let outlet = tree.outlets()[0];
    let mut last = surface.anchors.patient_hyperemia.ffr[outlet] - 1e-12;
    for fraction in [0.25, 0.5, 0.75, 1.0] {
        let mut plan = suggested_plan(&tree, &lesion, 0.2);
        for interval in &mut plan.intervals {
            interval.target_fraction = fraction;
        }
        let (modified, edges) = apply_modification(&tree, &ideal, &plan).unwrap();
        coefficients_for_geometry(&surface, &modified, &edges).unwrap();
        let sol = solve(&surface, &modified, &edges, &SolverConfig::default()).unwrap();
        assert!(sol.ffr[outlet] > last, "fraction {fraction}");
        last = sol.ffr[outlet];
    }
}

#[test]
fn solves_are_pure() {
    let tree = stenosed_bifurcation(0.6, 1.5, 1.0);
    let bc = murray_outlets(&tree, 45_000.0);
    let surface = surface_for(&tree, &bc);
    let sequential = {
        let profile = fit_ideal(&IdealFitProblem::new(&tree)).unwrap();
        build_surface(
            &tree,
            &profile,
            &bc,
            &OracleConfig::default(),
            &SurfaceConfig::default(),
            ExecutionMode::Sequential,
        )
        .unwrap()
    };
    assert_eq!(surface, sequential);
    let a = solve(&surface, &tree, &BTreeSet::new(), &SolverConfig::default()).unwrap();
    let b = solve(&surface, &tree, &BTreeSet::new(), &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
}
