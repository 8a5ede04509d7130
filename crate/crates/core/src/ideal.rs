//! Idealized ("healthy") radius profiles.
//!
//! The ideal profile is the radius assignment, non-increasing from the ostium
//! toward every outlet and bounded below pointwise, that minimizes
//! `Σ |r*ᵢ − rᵢ|^½`. The concave penalty makes this a robust fit: a few large
//! local corrections (filling a stenosis) are cheaper than many small ones.
//!
//! [`fit_ideal`] solves the problem exactly over a finite candidate grid with
//! a bottom-up dynamic program; [`brute_force_ideal`] enumerates the same
//! grid and exists to check it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::CenterlineTree;

pub const DEFAULT_GRID_RESOLUTION: f64 = 0.0025;
pub const MONOTONE_TOLERANCE: f64 = 1e-9;

const BRUTE_FORCE_MAX_POINTS: usize = 10;
const BRUTE_FORCE_MAX_GRID: usize = 12;

#[derive(Debug, Clone)]
pub struct IdealFitProblem<'a> {
    pub tree: &'a CenterlineTree,
    /// Pointwise minimum radius; defaults to the patient radius.
    pub lower_bounds: Option<Vec<f64>>,
    /// Spacing of extra candidate values between the smallest and largest
    /// input value. `None` restricts candidates to input radii and bounds.
    pub radius_grid_resolution: Option<f64>,
}

impl<'a> IdealFitProblem<'a> {
    pub fn new(tree: &'a CenterlineTree) -> Self {
        IdealFitProblem { tree, lower_bounds: None, radius_grid_resolution: Some(DEFAULT_GRID_RESOLUTION) }
    }

    pub fn without_refinement(mut self) -> Self {
        self.radius_grid_resolution = None;
        self
    }

    pub fn with_lower_bounds(mut self, bounds: Vec<f64>) -> Self {
        self.lower_bounds = Some(bounds);
        self
    }

    fn bounds(&self) -> Result<Vec<f64>> {
        match &self.lower_bounds {
            None => Ok(self.tree.radii()),
            Some(m) => {
                if m.len() != self.tree.len() {
                    return Err(Error::ProfileMismatch { profile: m.len(), tree: self.tree.len() });
                }
                if let Some((id, &v)) = m.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
                    return Err(Error::NonPositive { id, field: "lower_bound", value: v });
                }
                Ok(m.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealProfile {
    pub radius_ideal: Vec<f64>,
    pub objective_value: f64,
}

impl IdealProfile {
    /// Largest violation of the non-increasing constraint over all edges.
    pub fn max_monotone_violation(&self, tree: &CenterlineTree) -> f64 {
        tree.edges()
            .map(|k| {
                let parent = tree.parent(k).expect("edge has a parent");
                (self.radius_ideal[k] - self.radius_ideal[parent]).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Sorted, de-duplicated candidate values shared by every point.
pub fn candidate_grid(problem: &IdealFitProblem) -> Result<Vec<f64>> {
    let bounds = problem.bounds()?;
    let mut grid: Vec<f64> = problem.tree.radii();
    grid.extend_from_slice(&bounds);
    if let Some(step) = problem.radius_grid_resolution {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter {
                name: "radius_grid_resolution",
                reason: format!("must be positive, got {step}"),
            });
        }
        let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let steps = ((hi - lo) / step).floor() as usize;
        grid.extend((1..=steps).map(|k| lo + k as f64 * step));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

fn point_cost(value: f64, radius: f64) -> f64 {
    (value - radius).abs().sqrt()
}

/// Prefix-argmin of a child's cost table, stored as breakpoints
/// `(first grid index, argmin index)`; ties resolve toward the larger value.
struct ArgminSteps(Vec<(u32, u32)>);

impl ArgminSteps {
    fn lookup(&self, x: usize) -> usize {
        let pos = self.0.partition_point(|&(start, _)| start as usize <= x);
        self.0[pos - 1].1 as usize
    }
}

/// Global optimum over [`candidate_grid`] by dynamic programming on the tree.
pub fn fit_ideal(problem: &IdealFitProblem) -> Result<IdealProfile> {
    let tree = problem.tree;
    let n = tree.len();
    let bounds = problem.bounds()?;
    let grid = candidate_grid(problem)?;
    let g = grid.len();

    // prefix-min tables of children awaiting their parent
    let mut pending: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut steps: Vec<Option<ArgminSteps>> = (0..n).map(|_| None).collect();
    let mut root_table = Vec::new();

    for v in (0..n).rev() {
        let r = tree.radius(v);
        let first = grid.partition_point(|&x| x < bounds[v]);
        let mut table = vec![f64::INFINITY; g];
        for x in first..g {
            table[x] = point_cost(grid[x], r);
        }
        for &c in tree.children(v) {
            let child = pending[c].take().expect("children are processed first");
            for (t, cm) in table.iter_mut().zip(&child) {
                *t += cm;
            }
        }

        if tree.parent(v).is_none() {
            root_table = table;
            continue;
        }
        let mut prefix = vec![f64::INFINITY; g];
        let mut breaks = Vec::new();
        let mut best = f64::INFINITY;
        let mut arg = usize::MAX;
        for x in 0..g {
            if table[x] <= best && table[x].is_finite() {
                best = table[x];
                if arg != x {
                    arg = x;
                    breaks.push((x as u32, x as u32));
                }
            }
            prefix[x] = best;
        }
        if breaks.is_empty() {
            return Err(Error::InfeasibleBounds { id: v, bound: bounds[v] });
        }
        pending[v] = Some(prefix);
        steps[v] = Some(ArgminSteps(breaks));
    }

    let mut best = f64::INFINITY;
    let mut arg = None;
    for (x, &c) in root_table.iter().enumerate() {
        if c.is_finite() && c <= best {
            best = c;
            arg = Some(x);
        }
    }
    let root_choice = arg.ok_or(Error::InfeasibleBounds { id: 0, bound: bounds[0] })?;

    let mut choice = vec![0usize; n];
    choice[0] = root_choice;
    for v in 1..n {
        let parent = tree.parent(v).expect("non-root");
        choice[v] = steps[v].as_ref().expect("table built").lookup(choice[parent]);
    }
    let radius_ideal: Vec<f64> = choice.iter().map(|&x| grid[x]).collect();
    let objective_value = radius_ideal.iter().zip(tree.points()).map(|(&x, p)| point_cost(x, p.radius)).sum();
    Ok(IdealProfile { radius_ideal, objective_value })
}

/// Exhaustive search over the candidate grid, for small instances.
pub fn brute_force_ideal(problem: &IdealFitProblem) -> Result<IdealProfile> {
    let tree = problem.tree;
    let n = tree.len();
    let bounds = problem.bounds()?;
    let grid = candidate_grid(problem)?;
    if n > BRUTE_FORCE_MAX_POINTS || grid.len() > BRUTE_FORCE_MAX_GRID {
        return Err(Error::TooLarge(format!(
            "{n} points and {} candidate values (limits {BRUTE_FORCE_MAX_POINTS} and {BRUTE_FORCE_MAX_GRID})",
            grid.len()
        )));
    }

    struct Search<'s> {
        tree: &'s CenterlineTree,
        bounds: &'s [f64],
        grid: &'s [f64],
        current: Vec<f64>,
        best: Option<(f64, Vec<f64>)>,
    }

    impl Search<'_> {
        fn assign(&mut self, v: usize, cost: f64) {
            if v == self.tree.len() {
                if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    self.best = Some((cost, self.current.clone()));
                }
                return;
            }
            let cap = self.tree.parent(v).map(|p| self.current[p]);
            for &x in self.grid.iter().rev() {
                if x < self.bounds[v] || cap.is_some_and(|c| x > c) {
                    continue;
                }
                self.current[v] = x;
                self.assign(v + 1, cost + point_cost(x, self.tree.radius(v)));
            }
        }
    }

    let mut search = Search { tree, bounds: &bounds, grid: &grid, current: vec![0.0; n], best: None };
    search.assign(0, 0.0);
    let (objective_value, radius_ideal) = search.best.ok_or(Error::InfeasibleBounds { id: 0, bound: bounds[0] })?;
    Ok(IdealProfile { radius_ideal, objective_value })
}

/// Pointwise blend `r_orig + fraction·(r_ideal − r_orig)`.
pub fn dilated_tree(tree: &CenterlineTree, profile: &IdealProfile, fraction: f64) -> Result<CenterlineTree> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter {
            name: "fraction",
            reason: format!("must lie in [0, 1], got {fraction}"),
        });
    }
    if profile.radius_ideal.len() != tree.len() {
        return Err(Error::ProfileMismatch { profile: profile.radius_ideal.len(), tree: tree.len() });
    }
    let radii: Vec<f64> = tree
        .points()
        .iter()
        .zip(&profile.radius_ideal)
        .map(|(p, &ideal)| p.radius + fraction * (ideal - p.radius))
        .collect();
    tree.with_radii(&radii)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::fixtures::{point, tube};
    use crate::tree::CenterlinePoint;

    fn path_tree(radii: &[f64]) -> CenterlineTree {
        let pts: Vec<CenterlinePoint> = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| point(i, i.checked_sub(1), if i == 0 { 0.0 } else { 0.1 }, r, i + 1 == radii.len()))
            .collect();
        CenterlineTree::new("path", pts).unwrap()
    }

    #[test]
    fn fills_dip_on_path() {
        let tree = path_tree(&[0.30, 0.20, 0.25, 0.20]);
        let problem = IdealFitProblem::new(&tree).without_refinement();
        let fit = fit_ideal(&problem).unwrap();
        assert_eq!(fit.radius_ideal, vec![0.30, 0.25, 0.25, 0.20]);
        assert!((fit.objective_value - 0.05f64.sqrt()).abs() < 1e-12);
        let brute = brute_force_ideal(&problem).unwrap();
        assert!((brute.objective_value - fit.objective_value).abs() < 1e-9);
    }

    #[test]
    fn refinement_does_not_change_simple_optimum() {
        let tree = path_tree(&[0.30, 0.20, 0.25, 0.20]);
        let fit = fit_ideal(&IdealFitProblem::new(&tree)).unwrap();
        assert!((fit.objective_value - 0.05f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn monotone_input_is_its_own_optimum() {
        let tree = path_tree(&[0.30, 0.25, 0.20]);
        let fit = fit_ideal(&IdealFitProblem::new(&tree)).unwrap();
        assert_eq!(fit.radius_ideal, tree.radii());
        assert_eq!(fit.objective_value, 0.0);
    }

    #[test]
    fn parent_raised_to_larger_daughter() {
        let pts = vec![
            point(0, None, 0.0, 0.20, false),
            point(1, Some(0), 0.5, 0.20, false),
            point(2, Some(1), 0.5, 0.25, true),
            point(3, Some(1), 0.5, 0.15, true),
        ];
        let tree = CenterlineTree::new("bif", pts).unwrap();
        let problem = IdealFitProblem::new(&tree).without_refinement();
        let fit = fit_ideal(&problem).unwrap();
        assert_eq!(fit.radius_ideal, vec![0.25, 0.25, 0.25, 0.15]);
        let brute = brute_force_ideal(&problem).unwrap();
        assert_eq!(brute.radius_ideal, fit.radius_ideal);
    }

    #[test]
    fn brute_force_small_cases() {
        let single_like = path_tree(&[0.2, 0.2]);
        let bounds = vec![0.25, 0.1];
        let problem = IdealFitProblem::new(&single_like).without_refinement().with_lower_bounds(bounds);
        let fit = brute_force_ideal(&problem).unwrap();
        assert_eq!(fit.radius_ideal[0], 0.25);

        // distal larger: both end at the distal value
        let two = path_tree(&[0.1, 0.2]);
        let fit = brute_force_ideal(&IdealFitProblem::new(&two).without_refinement()).unwrap();
        assert_eq!(fit.radius_ideal, vec![0.2, 0.2]);
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let tree = tube(11, 0.1, 0.2);
        assert!(matches!(
            brute_force_ideal(&IdealFitProblem::new(&tree).without_refinement()),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn idempotent() {
        let tree = path_tree(&[0.3, 0.22, 0.27, 0.2, 0.24, 0.18]);
        let fit = fit_ideal(&IdealFitProblem::new(&tree)).unwrap();
        let ideal_tree = tree.with_radii(&fit.radius_ideal).unwrap();
        let again = fit_ideal(&IdealFitProblem::new(&ideal_tree)).unwrap();
        assert_eq!(again.radius_ideal, fit.radius_ideal);
        assert_eq!(again.objective_value, 0.0);
    }

    #[test]
    fn dilation_blends() {
        let tree = path_tree(&[0.3, 0.2, 0.25, 0.2]);
        let profile = IdealProfile { radius_ideal: vec![0.3, 0.3, 0.25, 0.2], objective_value: 0.0 };
        assert_eq!(dilated_tree(&tree, &profile, 0.0).unwrap().radii(), tree.radii());
        assert_eq!(dilated_tree(&tree, &profile, 1.0).unwrap().radii(), profile.radius_ideal);
        assert!((dilated_tree(&tree, &profile, 0.5).unwrap().radius(1) - 0.25).abs() < 1e-15);
        assert!(dilated_tree(&tree, &profile, 1.5).is_err());
    }
}
