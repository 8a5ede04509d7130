#![allow(dead_code)]

use std::collections::BTreeMap;

use psrom_core::{BoundaryConditionSet, CenterlinePoint, CenterlineTree};
use rand::Rng;

pub fn point(id: usize, parent: Option<usize>, len: f64, radius: f64, is_outlet: bool) -> CenterlinePoint {
    CenterlinePoint { id, parent, arc_length_from_parent: len, radius, is_outlet }
}

/// Random bifurcating topology. `choices[i]` picks the parent of point `i`
/// among the earlier points that can still take a child.
pub fn random_topology(radii: &[f64], choices: &[usize], spacing: f64) -> CenterlineTree {
    let n = radii.len();
    assert!(n >= 2);
    let mut parents = vec![None, Some(0)];
    let mut child_count = vec![1usize, 0];
    for i in 2..n {
        let open: Vec<usize> = (1..i).filter(|&p| child_count[p] < 2).collect();
        let p = open[choices[i % choices.len()] % open.len()];
        child_count[p] += 1;
        child_count.push(0);
        parents.push(Some(p));
    }
    let pts = (0..n)
        .map(|i| point(i, parents[i], if i == 0 { 0.0 } else { spacing }, radii[i], i > 0 && child_count[i] == 0))
        .collect();
    CenterlineTree::new("random", pts).unwrap()
}

pub fn random_tree(rng: &mut impl Rng, n: usize, r_min: f64, r_max: f64) -> CenterlineTree {
    let radii: Vec<f64> = (0..n).map(|_| rng.random_range(r_min..r_max)).collect();
    let choices: Vec<usize> = (0..n).map(|_| rng.random_range(0..usize::MAX)).collect();
    random_topology(&radii, &choices, 0.1)
}

/// Outlet resistances splitting flow in proportion to `r³` at the outlet,
/// scaled so the whole bed totals `total`.
pub fn murray_outlets(tree: &CenterlineTree, total: f64) -> BoundaryConditionSet {
    let outlets = tree.outlets();
    let weight: f64 = outlets.iter().map(|&o| tree.radius(o).powi(3)).sum();
    let map: BTreeMap<usize, f64> = outlets.iter().map(|&o| (o, total * weight / tree.radius(o).powi(3))).collect();
    BoundaryConditionSet::new(map)
}

/// Tapered two-level tree, 0.05 cm spacing, with a stenosis of the given
/// severity centered on `lesion_arc` in the main branch. Trunk 3 cm, each
/// daughter 4 cm.
pub fn stenosed_bifurcation(severity: f64, lesion_arc: f64, lesion_length: f64) -> CenterlineTree {
    let h = 0.05;
    let narrowing = |s: f64| {
        let d = (s - lesion_arc).abs() / (lesion_length / 2.0);
        if d < 1.0 {
            1.0 - severity * 0.5 * (1.0 + (std::f64::consts::PI * d).cos())
        } else {
            1.0
        }
    };
    let mut pts = Vec::new();
    let trunk = 60;
    for i in 0..=trunk {
        let s = i as f64 * h;
        pts.push(point(i, i.checked_sub(1), if i == 0 { 0.0 } else { h }, (0.2 - 0.005 * s) * narrowing(s), false));
    }
    let daughters = [(0.17, true), (0.13, false)];
    let mut next = trunk + 1;
    for (r0, main) in daughters {
        for j in 0..80 {
            let s = (trunk + 1 + j) as f64 * h;
            let parent = if j == 0 { trunk } else { next - 1 };
            let mut r = r0 - 0.01 * (j as f64 * h);
            if main {
                r *= narrowing(s);
            }
            pts.push(point(next, Some(parent), h, r, j == 79));
            next += 1;
        }
    }
    CenterlineTree::new("stenosed", pts).unwrap()
}
