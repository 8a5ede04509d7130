//! Rooted centerline trees with pointwise radii.
//!
//! A tree is a set of centerline points linked to their parents. Point ids are
//! dense and topologically ordered (`parent < child`), so the ostium is always
//! point 0 and a reverse sweep over ids visits every child before its parent.
//! Each non-root point `k` owns exactly one edge, `parent(k) -> k`; edges are
//! therefore addressed by their distal point id throughout the crate.
//!
//! All quantities are CGS: cm, cm², dyn/cm², dyn·s/cm⁵.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const UNITS: &str = "CGS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterlinePoint {
    pub id: usize,
    pub parent: Option<usize>,
    /// Arc length of the edge from the parent, cm. Zero for the ostium.
    #[serde(default)]
    pub arc_length_from_parent: f64,
    pub radius: f64,
    pub is_outlet: bool,
}

/// On-disk and on-wire form of a tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDocument {
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
    #[serde(default = "default_units")]
    pub units: String,
    pub points: Vec<CenterlinePoint>,
}

fn default_units() -> String {
    UNITS.to_string()
}

/// Validated, immutable centerline tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TreeDocument", into = "TreeDocument")]
pub struct CenterlineTree {
    name: String,
    source: String,
    points: Vec<CenterlinePoint>,
    children: Vec<Vec<usize>>,
    arc_from_root: Vec<f64>,
    // Euler-tour entry/exit stamps for O(1) ancestry queries.
    enter: Vec<usize>,
    exit: Vec<usize>,
}

impl PartialEq for CenterlineTree {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.source == other.source && self.points == other.points
    }
}

impl TryFrom<TreeDocument> for CenterlineTree {
    type Error = Error;

    fn try_from(doc: TreeDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.units != UNITS {
            return Err(Error::Unsupported(format!("units {:?} (expected {UNITS})", doc.units)));
        }
        CenterlineTree::with_source(doc.name, doc.source, doc.points)
    }
}

impl From<CenterlineTree> for TreeDocument {
    fn from(tree: CenterlineTree) -> Self {
        TreeDocument {
            format_version: FORMAT_VERSION,
            name: tree.name,
            source: tree.source,
            units: UNITS.to_string(),
            points: tree.points,
        }
    }
}

impl CenterlineTree {
    pub fn new(name: impl Into<String>, points: Vec<CenterlinePoint>) -> Result<Self> {
        Self::with_source(name.into(), String::new(), points)
    }

    pub fn with_source(name: String, source: String, mut points: Vec<CenterlinePoint>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Malformed("tree has no points".into()));
        }
        points.sort_by_key(|p| p.id);
        for (expected, p) in points.iter().enumerate() {
            if p.id != expected {
                return Err(Error::NonDenseIds { expected: n, found: p.id });
            }
        }
        for p in &points {
            if let Some(parent) = p.parent {
                if parent >= n {
                    return Err(Error::DanglingParent { id: p.id, parent });
                }
            }
        }
        detect_cycle(&points)?;

        let roots = points.iter().filter(|p| p.parent.is_none()).count();
        if roots != 1 {
            return Err(Error::RootCount(roots));
        }
        for p in &points {
            if let Some(parent) = p.parent {
                if parent >= p.id {
                    return Err(Error::NotTopological { id: p.id, parent });
                }
            }
        }

        let mut children = vec![Vec::new(); n];
        for p in &points {
            if let Some(parent) = p.parent {
                children[parent].push(p.id);
            }
        }
        for (id, c) in children.iter().enumerate() {
            if c.len() > 2 {
                return Err(Error::TooManyChildren { id, children: c.len() });
            }
        }
        if children[0].len() != 1 {
            return Err(Error::OstiumDegree(children[0].len()));
        }

        for p in &points {
            let leaf = children[p.id].is_empty();
            if leaf && !p.is_outlet {
                return Err(Error::OutletFlag { id: p.id, reason: "leaf point must be an outlet" });
            }
            if !leaf && p.is_outlet {
                return Err(Error::OutletFlag { id: p.id, reason: "interior point cannot be an outlet" });
            }
            if !(p.radius > 0.0) || !p.radius.is_finite() {
                return Err(Error::NonPositive { id: p.id, field: "radius", value: p.radius });
            }
            if p.parent.is_some() && (!(p.arc_length_from_parent > 0.0) || !p.arc_length_from_parent.is_finite()) {
                return Err(Error::NonPositive {
                    id: p.id,
                    field: "arc_length_from_parent",
                    value: p.arc_length_from_parent,
                });
            }
        }

        let mut arc_from_root = vec![0.0; n];
        for p in &points[1..] {
            let parent = p.parent.expect("validated non-root");
            arc_from_root[p.id] = arc_from_root[parent] + p.arc_length_from_parent;
        }

        let (enter, exit) = euler_tour(&children);
        Ok(CenterlineTree { name, source, points, children, arc_from_root, enter, exit })
    }

    /// Same topology and lengths with a new radius profile.
    pub fn with_radii(&self, radii: &[f64]) -> Result<Self> {
        if radii.len() != self.len() {
            return Err(Error::ProfileMismatch { profile: radii.len(), tree: self.len() });
        }
        let mut tree = self.clone();
        for (p, &r) in tree.points.iter_mut().zip(radii) {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::NonPositive { id: p.id, field: "radius", value: r });
            }
            p.radius = r;
        }
        Ok(tree)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[CenterlinePoint] {
        &self.points
    }

    pub fn point(&self, id: usize) -> &CenterlinePoint {
        &self.points[id]
    }

    pub fn radius(&self, id: usize) -> f64 {
        self.points[id].radius
    }

    pub fn radii(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.radius).collect()
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.points[id].parent
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn is_branch(&self, id: usize) -> bool {
        self.children[id].len() == 2
    }

    pub fn is_outlet(&self, id: usize) -> bool {
        self.points[id].is_outlet
    }

    pub fn outlets(&self) -> Vec<usize> {
        self.points.iter().filter(|p| p.is_outlet).map(|p| p.id).collect()
    }

    pub fn branch_points(&self) -> Vec<usize> {
        (0..self.len()).filter(|&id| self.is_branch(id)).collect()
    }

    /// Cumulative arc length from the ostium, cm.
    pub fn arc_from_root(&self, id: usize) -> f64 {
        self.arc_from_root[id]
    }

    /// Edge ids (distal point ids) in topological order.
    pub fn edges(&self) -> std::ops::Range<usize> {
        1..self.len()
    }

    pub fn segment(&self, edge: usize) -> SegmentGeometry {
        let distal = &self.points[edge];
        let proximal = &self.points[distal.parent.expect("edge ids are non-root points")];
        SegmentGeometry::new(proximal.id, distal.id, distal.arc_length_from_parent, proximal.radius, distal.radius)
    }

    /// True iff `j` lies strictly proximal to `i` on the path from the ostium.
    pub fn is_distal(&self, i: usize, j: usize) -> bool {
        i != j && self.enter[j] < self.enter[i] && self.exit[i] <= self.exit[j]
    }

    /// True when both trees share ids, parent links, arc lengths and outlet flags.
    pub fn same_topology(&self, other: &CenterlineTree) -> bool {
        self.len() == other.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| {
                a.parent == b.parent
                    && a.is_outlet == b.is_outlet
                    && a.arc_length_from_parent == b.arc_length_from_parent
            })
    }

    pub fn to_document(&self) -> TreeDocument {
        self.clone().into()
    }
}

fn detect_cycle(points: &[CenterlinePoint]) -> Result<()> {
    // 0 = unvisited, 1 = on current walk, 2 = known to reach a root
    let mut state = vec![0u8; points.len()];
    for start in 0..points.len() {
        let mut walk = Vec::new();
        let mut cur = Some(start);
        while let Some(id) = cur {
            match state[id] {
                2 => break,
                1 => {
                    let pos = walk.iter().position(|&w| w == id).unwrap_or(0);
                    let mut cycle = walk[pos..].to_vec();
                    cycle.sort_unstable();
                    return Err(Error::Cycle(cycle));
                }
                _ => {
                    state[id] = 1;
                    walk.push(id);
                    cur = points[id].parent;
                }
            }
        }
        for id in walk {
            state[id] = 2;
        }
    }
    Ok(())
}

fn euler_tour(children: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let n = children.len();
    let mut enter = vec![0; n];
    let mut exit = vec![0; n];
    let mut clock = 0;
    let mut stack = vec![(0usize, false)];
    while let Some((id, done)) = stack.pop() {
        if done {
            exit[id] = clock;
            clock += 1;
            continue;
        }
        enter[id] = clock;
        clock += 1;
        stack.push((id, true));
        for &c in children[id].iter().rev() {
            stack.push((c, false));
        }
    }
    (enter, exit)
}

/// Geometry of one parent-child edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentGeometry {
    pub proximal_id: usize,
    pub distal_id: usize,
    pub length: f64,
    pub radius_proximal: f64,
    pub radius_distal: f64,
    pub area_proximal: f64,
    pub area_distal: f64,
    /// (A_distal - A_proximal) / length, cm²/cm.
    pub area_gradient: f64,
}

impl SegmentGeometry {
    pub fn new(proximal_id: usize, distal_id: usize, length: f64, r_prox: f64, r_dist: f64) -> Self {
        let area_proximal = PI * r_prox * r_prox;
        let area_distal = PI * r_dist * r_dist;
        SegmentGeometry {
            proximal_id,
            distal_id,
            length,
            radius_proximal: r_prox,
            radius_distal: r_dist,
            area_proximal,
            area_distal,
            area_gradient: (area_distal - area_proximal) / length,
        }
    }

    pub fn mean_radius(&self) -> f64 {
        0.5 * (self.radius_proximal + self.radius_distal)
    }

    /// Representative area `A` for which `(1/A³)·dA/dz` reproduces the
    /// secant Bernoulli term `-(1/A_d² - 1/A_p²) / (2L)` exactly.
    /// Equals the common area on a uniform segment.
    pub fn bernoulli_area(&self) -> f64 {
        let (ap, ad) = (self.area_proximal, self.area_distal);
        (2.0 * ap * ap * ad * ad / (ap + ad)).cbrt()
    }

    /// `(1/A³)·dA/dz` with `A` the Bernoulli-consistent area.
    pub fn bernoulli_gradient(&self) -> f64 {
        let a = self.bernoulli_area();
        self.area_gradient / (a * a * a)
    }
}

pub fn load_tree(mut source: impl Read) -> Result<CenterlineTree> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let doc: TreeDocument = serde_json::from_str(&text).map_err(|e| Error::Malformed(e.to_string()))?;
    CenterlineTree::try_from(doc)
}

pub fn save_tree(tree: &CenterlineTree, mut sink: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut sink, &tree.to_document())?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn tree_to_string(tree: &CenterlineTree) -> String {
    let mut buf = Vec::new();
    save_tree(tree, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

/// One path per outlet, ordered by outlet id; each runs ostium to outlet.
pub fn root_to_leaf_paths(tree: &CenterlineTree) -> Vec<Vec<usize>> {
    tree.outlets()
        .into_iter()
        .map(|leaf| {
            let mut path = vec![leaf];
            let mut cur = leaf;
            while let Some(p) = tree.parent(cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            path
        })
        .collect()
}

/// One entry per edge, ordered by distal id.
pub fn segment_geometries(tree: &CenterlineTree) -> Vec<SegmentGeometry> {
    tree.edges().map(|e| tree.segment(e)).collect()
}

pub fn is_distal(tree: &CenterlineTree, i: usize, j: usize) -> bool {
    tree.is_distal(i, j)
}
