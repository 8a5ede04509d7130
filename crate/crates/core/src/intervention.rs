//! Lesion detection, classification and virtual stenting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{root_to_leaf_paths, CenterlineTree};
use crate::RECOVERY_ZONE_LENGTH;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionConfig {
    /// Minimum narrowing `1 − r/r_ideal` of a lesion.
    pub threshold: f64,
    /// Runs separated by less than this arc length (cm) are merged.
    pub merge_gap: f64,
    /// A lesion starting within this arc length of the ostium is ostial, cm.
    pub ostial_zone: f64,
}

impl Default for LesionConfig {
    fn default() -> Self {
        LesionConfig { threshold: 0.30, merge_gap: 0.2, ostial_zone: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LesionKind {
    Focal,
    Ostial,
    Bifurcation,
    SerialMember,
}

impl LesionKind {
    pub const ALL: [LesionKind; 4] =
        [LesionKind::Focal, LesionKind::Ostial, LesionKind::Bifurcation, LesionKind::SerialMember];

    pub fn as_str(self) -> &'static str {
        match self {
            LesionKind::Focal => "focal",
            LesionKind::Ostial => "ostial",
            LesionKind::Bifurcation => "bifurcation",
            LesionKind::SerialMember => "serial-member",
        }
    }
}

impl std::fmt::Display for LesionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A connected region of narrowing. `interval` is the arc-length span of the
/// members lying on the representative path `path_id`; a lesion that crosses
/// a bifurcation has members on several paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub path_id: usize,
    pub interval: (f64, f64),
    pub max_narrowing: f64,
    pub kind: LesionKind,
    pub member_point_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInterval {
    pub path_id: usize,
    pub arc_start: f64,
    pub arc_end: f64,
    pub target_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationPlan {
    pub intervals: Vec<PlanInterval>,
    /// cm
    #[serde(default = "default_blend")]
    pub blend_length: f64,
}

fn default_blend() -> f64 {
    0.2
}

impl Default for ModificationPlan {
    fn default() -> Self {
        ModificationPlan { intervals: Vec::new(), blend_length: default_blend() }
    }
}

pub fn narrowing(tree: &CenterlineTree, ideal_radii: &[f64]) -> Vec<f64> {
    tree.points().iter().zip(ideal_radii).map(|(p, &ideal)| 1.0 - p.radius / ideal).collect()
}

fn on_path(tree: &CenterlineTree, outlet: usize, id: usize) -> bool {
    id == outlet || tree.is_distal(outlet, id)
}

/// Detect and classify every lesion. Lesions are ordered by their most
/// proximal member.
pub fn detect_lesions(tree: &CenterlineTree, ideal_radii: &[f64], config: &LesionConfig) -> Result<Vec<Lesion>> {
    if ideal_radii.len() != tree.len() {
        return Err(Error::ProfileMismatch { profile: ideal_radii.len(), tree: tree.len() });
    }
    let nu = narrowing(tree, ideal_radii);
    let mut mask: Vec<bool> = nu.iter().map(|&v| v >= config.threshold - 1e-12).collect();
    let paths = root_to_leaf_paths(tree);

    // close short sub-threshold gaps along each path
    let mut fill = Vec::new();
    for path in &paths {
        let mut last_in: Option<usize> = None;
        for (pos, &id) in path.iter().enumerate() {
            if !mask[id] {
                continue;
            }
            if let Some(prev) = last_in {
                let gap = tree.arc_from_root(id) - tree.arc_from_root(path[prev]);
                if pos > prev + 1 && gap < config.merge_gap {
                    fill.extend_from_slice(&path[prev + 1..pos]);
                }
            }
            last_in = Some(pos);
        }
    }
    for id in fill {
        mask[id] = true;
    }

    // connected components over parent links, in id order
    let mut component = vec![usize::MAX; tree.len()];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for id in 0..tree.len() {
        if !mask[id] {
            continue;
        }
        let c = match tree.parent(id) {
            Some(p) if mask[p] => component[p],
            _ => {
                members.push(Vec::new());
                members.len() - 1
            }
        };
        component[id] = c;
        members[c].push(id);
    }

    let mut lesions: Vec<Lesion> = members
        .into_iter()
        .map(|ids| {
            let (path_id, outlet) = paths
                .iter()
                .enumerate()
                .find(|(_, p)| ids.iter().any(|&m| on_path(tree, *p.last().unwrap(), m)))
                .map(|(i, p)| (i, *p.last().unwrap()))
                .expect("every point lies on some path");
            let arcs: Vec<f64> =
                ids.iter().filter(|&&m| on_path(tree, outlet, m)).map(|&m| tree.arc_from_root(m)).collect();
            let interval = (
                arcs.iter().copied().fold(f64::INFINITY, f64::min),
                arcs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            );
            let max_narrowing = ids.iter().map(|&m| nu[m]).fold(f64::NEG_INFINITY, f64::max);
            Lesion { path_id, interval, max_narrowing, kind: LesionKind::Focal, member_point_ids: ids }
        })
        .collect();

    let kinds: Vec<LesionKind> = lesions.iter().map(|l| classify_lesion(tree, l, &lesions, config)).collect();
    for (lesion, kind) in lesions.iter_mut().zip(kinds) {
        lesion.kind = kind;
    }
    Ok(lesions)
}

/// Precedence: serial-member > bifurcation > ostial > focal.
pub fn classify_lesion(tree: &CenterlineTree, lesion: &Lesion, all: &[Lesion], config: &LesionConfig) -> LesionKind {
    let outlets = tree.outlets();
    let touches = |l: &Lesion, outlet: usize| l.member_point_ids.iter().any(|&m| on_path(tree, outlet, m));
    let serial =
        outlets.iter().filter(|&&o| touches(lesion, o)).any(|&o| all.iter().filter(|l| touches(l, o)).count() >= 3);
    if serial {
        return LesionKind::SerialMember;
    }
    let members: BTreeSet<usize> = lesion.member_point_ids.iter().copied().collect();
    let crosses_branch =
        members.iter().any(|&m| tree.is_branch(m) && tree.children(m).iter().any(|c| members.contains(c)));
    if crosses_branch {
        return LesionKind::Bifurcation;
    }
    let start = members.iter().map(|&m| tree.arc_from_root(m)).fold(f64::INFINITY, f64::min);
    if start <= config.ostial_zone {
        return LesionKind::Ostial;
    }
    LesionKind::Focal
}

/// Full idealization of one lesion: one interval per path it touches.
pub fn suggested_plan(tree: &CenterlineTree, lesion: &Lesion, blend_length: f64) -> ModificationPlan {
    let intervals = root_to_leaf_paths(tree)
        .iter()
        .enumerate()
        .filter_map(|(path_id, path)| {
            let outlet = *path.last().unwrap();
            let arcs: Vec<f64> = lesion
                .member_point_ids
                .iter()
                .filter(|&&m| on_path(tree, outlet, m))
                .map(|&m| tree.arc_from_root(m))
                .collect();
            (!arcs.is_empty()).then(|| PlanInterval {
                path_id,
                arc_start: arcs.iter().copied().fold(f64::INFINITY, f64::min),
                arc_end: arcs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                target_fraction: 1.0,
            })
        })
        .collect();
    ModificationPlan { intervals, blend_length }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Fraction of the target applied at arc `s` inside `[start, end]`.
pub fn blend_weight(s: f64, start: f64, end: f64, blend_length: f64) -> f64 {
    if blend_length <= 0.0 {
        return 1.0;
    }
    smoothstep((s - start) / blend_length).min(smoothstep((end - s) / blend_length))
}

/// Returns the modified tree and the edges (by distal id) whose geometry changed.
pub fn apply_modification(
    patient: &CenterlineTree,
    ideal_radii: &[f64],
    plan: &ModificationPlan,
) -> Result<(CenterlineTree, BTreeSet<usize>)> {
    if ideal_radii.len() != patient.len() {
        return Err(Error::ProfileMismatch { profile: ideal_radii.len(), tree: patient.len() });
    }
    if !(plan.blend_length >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "blend_length",
            reason: format!("must be non-negative, got {}", plan.blend_length),
        });
    }
    let paths = root_to_leaf_paths(patient);
    // point -> (fraction, requested target)
    let mut applied: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for (index, interval) in plan.intervals.iter().enumerate() {
        let path = paths.get(interval.path_id).ok_or(Error::UnknownPath(interval.path_id))?;
        if !(0.0..=1.0).contains(&interval.target_fraction) {
            return Err(Error::InvalidInterval {
                index,
                reason: format!(
                    "target fraction {} leaves the patient/ideal envelope [0, 1]",
                    interval.target_fraction
                ),
            });
        }
        if !(interval.arc_start <= interval.arc_end) {
            return Err(Error::InvalidInterval {
                index,
                reason: format!("empty arc range [{}, {}]", interval.arc_start, interval.arc_end),
            });
        }
        for &id in path {
            let s = patient.arc_from_root(id);
            if s < interval.arc_start || s > interval.arc_end {
                continue;
            }
            let f = interval.target_fraction * blend_weight(s, interval.arc_start, interval.arc_end, plan.blend_length);
            match applied.get_mut(&id) {
                Some((existing, target)) => {
                    if *target != interval.target_fraction {
                        return Err(Error::ConflictingIntervals {
                            id,
                            first: *target,
                            second: interval.target_fraction,
                        });
                    }
                    *existing = existing.max(f);
                }
                None => {
                    applied.insert(id, (f, interval.target_fraction));
                }
            }
        }
    }

    let mut radii = patient.radii();
    for (&id, &(f, _)) in &applied {
        radii[id] += f * (ideal_radii[id] - radii[id]);
    }
    let modified = patient.with_radii(&radii)?;
    let changed: Vec<bool> = (0..patient.len()).map(|id| radii[id] != patient.radius(id)).collect();
    let edges = patient.edges().filter(|&k| changed[k] || changed[patient.parent(k).expect("non-root")]).collect();
    Ok((modified, edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// Minimum arc length distal of the last modified edge, cm.
    pub recovery_zone_length: f64,
    /// Minimum arc distance from any branch point on the path, cm.
    pub branch_clearance: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { recovery_zone_length: RECOVERY_ZONE_LENGTH, branch_clearance: 0.3 }
    }
}

/// One point per downstream path, clear of the recovery zone, branch points
/// and the outlet. Sorted and de-duplicated.
pub fn select_evaluation_points(
    tree: &CenterlineTree,
    modified_edges: &BTreeSet<usize>,
    config: &EvaluationConfig,
) -> Vec<usize> {
    let mut selected = BTreeSet::new();
    for path in root_to_leaf_paths(tree) {
        let Some(last) = path.iter().rposition(|id| modified_edges.contains(id)) else {
            continue;
        };
        let end = tree.arc_from_root(path[last]);
        let branch_arcs: Vec<f64> =
            path.iter().filter(|&&id| tree.is_branch(id)).map(|&id| tree.arc_from_root(id)).collect();
        let outlet = *path.last().unwrap();
        let found = path[last + 1..].iter().copied().find(|&id| {
            let s = tree.arc_from_root(id);
            id != outlet
                && s - end > config.recovery_zone_length
                && branch_arcs.iter().all(|b| (s - b).abs() >= config.branch_clearance)
        });
        if let Some(id) = found {
            selected.insert(id);
        }
    }
    selected.into_iter().collect()
}

/// `path_id,arc_start,arc_end,max_narrowing,kind,n_points`
pub fn lesion_table(lesions: &[Lesion]) -> String {
    let mut out = String::from("lesion,path_id,arc_start,arc_end,max_narrowing,kind,n_points\n");
    for (i, l) in lesions.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            l.path_id,
            l.interval.0,
            l.interval.1,
            l.max_narrowing,
            l.kind,
            l.member_point_ids.len()
        );
    }
    out
}
