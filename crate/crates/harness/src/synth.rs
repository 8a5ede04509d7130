//! Seeded synthetic patients: binary trees of tapering vessels with
//! Murray-law daughter radii and cosine-shaped stenoses.

use std::collections::BTreeMap;

use psrom_core::tree::root_to_leaf_paths;
use psrom_core::{BoundaryConditionSet, CenterlinePoint, CenterlineTree, LesionKind, DEFAULT_AORTIC_PRESSURE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Bifurcation levels on the deepest path, inclusive range.
    pub depth: (usize, usize),
    pub root_radius: (f64, f64),
    pub min_radius: f64,
    /// Point spacing, cm.
    pub spacing: f64,
    pub lesions: (usize, usize),
    pub narrowing: (f64, f64),
    /// cm
    pub lesion_length: (f64, f64),
    /// Total hyperemic outlet resistance, dyn·s/cm⁵.
    pub bed_resistance: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            depth: (2, 4),
            root_radius: (0.18, 0.25),
            min_radius: 0.05,
            spacing: 0.05,
            lesions: (1, 4),
            narrowing: (0.3, 0.8),
            lesion_length: (0.5, 2.0),
            bed_resistance: (40_000.0, 70_000.0),
        }
    }
}

/// A stenosis as placed by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionLabel {
    pub kind: LesionKind,
    /// Outlet of the path the lesion was placed on.
    pub outlet: usize,
    pub center_arc: f64,
    pub length: f64,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPatient {
    pub case_id: usize,
    pub seed: u64,
    pub tree: CenterlineTree,
    /// Radii before any stenosis was applied.
    pub healthy_radii: Vec<f64>,
    pub bc: BoundaryConditionSet,
    pub labels: Vec<LesionLabel>,
}

struct Vessel {
    points: Vec<usize>,
    level: usize,
}

/// Uniform on `[lo, hi)`; `lo` when the range is empty.
fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn case_rng(seed: u64, case_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case_id as u64);
    rng
}

fn mark_outlets(points: &mut [CenterlinePoint]) {
    let mut has_child = vec![false; points.len()];
    for p in points.iter() {
        if let Some(parent) = p.parent {
            has_child[parent] = true;
        }
    }
    for p in points.iter_mut().skip(1) {
        p.is_outlet = !has_child[p.id];
    }
}

fn healthy_tree(rng: &mut ChaCha8Rng, config: &SynthConfig) -> (Vec<CenterlinePoint>, Vec<Vessel>) {
    let depth = rng.random_range(config.depth.0..=config.depth.1);
    let h = config.spacing;
    let mut points = vec![CenterlinePoint {
        id: 0,
        parent: None,
        arc_length_from_parent: 0.0,
        radius: uniform(rng, config.root_radius),
        is_outlet: false,
    }];
    let mut vessels = Vec::new();
    // (attach point, starting radius, level, on the main path)
    let mut pending = vec![(0usize, points[0].radius, 0usize, true)];
    while let Some((attach, r_start, level, main)) = pending.pop() {
        let length = if level == 0 {
            rng.random_range(3.0..5.0)
        } else {
            rng.random_range(2.0..4.0) * 0.85f64.powi(level as i32 - 1)
        };
        let taper = rng.random_range(0.05..0.15);
        let n = (length / h).round() as usize;
        let mut ids = Vec::with_capacity(n);
        let mut parent = attach;
        for j in 1..=n {
            let r = (r_start * (1.0 - taper * j as f64 / n as f64)).max(config.min_radius);
            let id = points.len();
            points.push(CenterlinePoint {
                id,
                parent: Some(parent),
                arc_length_from_parent: h,
                radius: r,
                is_outlet: false,
            });
            ids.push(id);
            parent = id;
        }
        let r_end = points[parent].radius;
        vessels.push(Vessel { points: ids, level });
        let branch = level < depth && (main || rng.random_bool(0.6));
        if branch && r_end * 0.6f64.cbrt() > config.min_radius {
            let split = rng.random_range(0.55..0.8);
            let r_major = (r_end * f64::cbrt(split)).max(config.min_radius);
            let r_minor = (r_end * f64::cbrt(1.0 - split)).max(config.min_radius);
            pending.push((parent, r_minor, level + 1, false));
            pending.push((parent, r_major, level + 1, main));
        }
    }
    mark_outlets(&mut points);
    (points, vessels)
}

/// Radius multiplier of a cosine stenosis at normalized distance `d ∈ [0, 1)`.
fn bump(severity: f64, d: f64) -> f64 {
    1.0 - severity * 0.5 * (1.0 + (std::f64::consts::PI * d).cos())
}

struct Placement<'a> {
    tree: &'a CenterlineTree,
    paths: Vec<Vec<usize>>,
    multiplier: Vec<f64>,
    taken: Vec<bool>,
    branch_arcs: Vec<usize>,
}

impl Placement<'_> {
    /// Points affected by a lesion centered at `center` on the path to
    /// `outlet`; with `whole_subtree`, also every point distal of `anchor`.
    fn footprint(&self, outlet: usize, center: f64, length: f64, anchor: Option<usize>) -> Vec<usize> {
        (0..self.tree.len())
            .filter(|&id| {
                let on_path = id == outlet || self.tree.is_distal(outlet, id);
                let below = anchor.is_some_and(|a| self.tree.is_distal(id, a));
                (on_path || below) && (self.tree.arc_from_root(id) - center).abs() < length / 2.0
            })
            .collect()
    }

    fn clear_of_branches(&self, outlet: usize, center: f64, length: f64) -> bool {
        self.branch_arcs
            .iter()
            .filter(|&&b| self.tree.is_distal(outlet, b))
            .all(|&b| (self.tree.arc_from_root(b) - center).abs() > length / 2.0 + 0.3)
    }

    /// Reserve the footprint plus a 0.5 cm margin; false if it overlaps.
    fn place(&mut self, ids: &[usize], center: f64, length: f64, severity: f64) -> bool {
        if ids.is_empty() {
            return false;
        }
        let margin: Vec<usize> = (0..self.tree.len())
            .filter(|&id| {
                ids.iter().any(|&m| self.tree.is_distal(m, id) || self.tree.is_distal(id, m) || id == m)
                    && (self.tree.arc_from_root(id) - center).abs() < length / 2.0 + 0.5
            })
            .collect();
        if margin.iter().any(|&id| self.taken[id]) {
            return false;
        }
        for id in margin {
            self.taken[id] = true;
        }
        for &id in ids {
            let d = (self.tree.arc_from_root(id) - center).abs() / (length / 2.0);
            self.multiplier[id] = self.multiplier[id].min(bump(severity, d));
        }
        true
    }
}

pub fn generate(seed: u64, case_id: usize, config: &SynthConfig) -> SyntheticPatient {
    let mut rng = case_rng(seed, case_id);
    let (points, vessels) = healthy_tree(&mut rng, config);
    let healthy_radii: Vec<f64> = points.iter().map(|p| p.radius).collect();
    let healthy = CenterlineTree::new("healthy", points.clone()).expect("generator builds valid trees");

    let paths = root_to_leaf_paths(&healthy);
    let mut placement = Placement {
        tree: &healthy,
        multiplier: vec![1.0; healthy.len()],
        taken: vec![false; healthy.len()],
        branch_arcs: healthy.branch_points(),
        paths,
    };
    let mut labels = Vec::new();
    let count = rng.random_range(config.lesions.0..=config.lesions.1);
    let serial = count >= 3 && rng.random_bool(0.4);
    if serial {
        place_serial(&mut rng, &mut placement, config, &mut labels);
    }
    let mut attempts = 0;
    while labels.len() < count && attempts < 40 {
        attempts += 1;
        let kind = match rng.random_range(0..3) {
            0 => LesionKind::Focal,
            1 => LesionKind::Ostial,
            _ => LesionKind::Bifurcation,
        };
        let severity = uniform(&mut rng, config.narrowing);
        let length = uniform(&mut rng, config.lesion_length);
        let label = match kind {
            LesionKind::Ostial => {
                let outlet = *placement.paths[0].last().unwrap();
                let start = rng.random_range(0.1..0.5);
                let center = start + length / 2.0;
                let ids = placement.footprint(outlet, center, length, None);
                (placement.clear_of_branches(outlet, center, length) && placement.place(&ids, center, length, severity))
                    .then_some(LesionLabel { kind, outlet, center_arc: center, length, severity })
            }
            LesionKind::Bifurcation => {
                let branch = placement.branch_arcs[rng.random_range(0..placement.branch_arcs.len())];
                let outlet = *placement.paths.iter().find(|p| p.contains(&branch)).unwrap().last().unwrap();
                let center = healthy.arc_from_root(branch);
                let ids = placement.footprint(outlet, center, length, Some(branch));
                placement.place(&ids, center, length, severity).then_some(LesionLabel {
                    kind,
                    outlet,
                    center_arc: center,
                    length,
                    severity,
                })
            }
            _ => {
                let vessel = &vessels[rng.random_range(0..vessels.len())];
                let (first, last) = (vessel.points[0], *vessel.points.last().unwrap());
                let mut lo = healthy.arc_from_root(first) + length / 2.0 + 0.3;
                if vessel.level == 0 {
                    // keep trunk lesions out of the ostial zone
                    lo = lo.max(1.05 + length / 2.0);
                }
                let hi = healthy.arc_from_root(last) - length / 2.0 - 0.3;
                if lo >= hi {
                    None
                } else {
                    let center = rng.random_range(lo..hi);
                    let outlet = *placement.paths.iter().find(|p| p.contains(&last)).unwrap().last().unwrap();
                    let ids = placement.footprint(outlet, center, length, None);
                    placement.place(&ids, center, length, severity).then_some(LesionLabel {
                        kind: LesionKind::Focal,
                        outlet,
                        center_arc: center,
                        length,
                        severity,
                    })
                }
            }
        };
        labels.extend(label);
    }

    let radii: Vec<f64> = healthy_radii.iter().zip(&placement.multiplier).map(|(r, m)| r * m).collect();
    let tree = healthy
        .with_radii(&radii)
        .expect("stenosed radii stay positive")
        .renamed(format!("synthetic-{seed}-{case_id}"));

    let bed = uniform(&mut rng, config.bed_resistance);
    let outlets = tree.outlets();
    let weight: f64 = outlets.iter().map(|&o| healthy_radii[o].powi(3)).sum();
    let resistances: BTreeMap<usize, f64> =
        outlets.iter().map(|&o| (o, bed * weight / healthy_radii[o].powi(3))).collect();
    let mut bc = BoundaryConditionSet::new(resistances);
    bc.aortic_pressure = DEFAULT_AORTIC_PRESSURE;
    labels.sort_by(|a, b| a.center_arc.total_cmp(&b.center_arc));
    SyntheticPatient { case_id, seed, tree, healthy_radii, bc, labels }
}

/// Three short lesions in tandem along the longest path.
fn place_serial(rng: &mut ChaCha8Rng, placement: &mut Placement, config: &SynthConfig, labels: &mut Vec<LesionLabel>) {
    let tree = placement.tree;
    let path = placement
        .paths
        .iter()
        .max_by(|a, b| tree.arc_from_root(*a.last().unwrap()).total_cmp(&tree.arc_from_root(*b.last().unwrap())))
        .unwrap()
        .clone();
    let outlet = *path.last().unwrap();
    let total = tree.arc_from_root(outlet);
    let length = rng.random_range(config.lesion_length.0..config.lesion_length.0 + 0.3);
    let mut center = rng.random_range(1.2..1.6) + length / 2.0;
    let mut placed = Vec::new();
    while placed.len() < 3 && center + length / 2.0 < total - 0.5 {
        let severity = uniform(rng, (config.narrowing.0.max(0.4), config.narrowing.1.min(0.65)));
        if placement.clear_of_branches(outlet, center, length) {
            let ids = placement.footprint(outlet, center, length, None);
            if placement.place(&ids, center, length, severity) {
                placed.push(LesionLabel {
                    kind: LesionKind::SerialMember,
                    outlet,
                    center_arc: center,
                    length,
                    severity,
                });
                center += length + rng.random_range(0.6..1.0);
                continue;
            }
        }
        center += 0.1;
    }
    if placed.len() == 3 {
        labels.extend(placed);
    } else {
        // too short for a tandem run: keep what fits as focal lesions
        labels.extend(placed.into_iter().map(|l| LesionLabel { kind: LesionKind::Focal, ..l }));
    }
}
