//! Optimal constrained assignment of weighted colored points to fixed centers.
//!
//! A weight-`w` entry is `w` unit points that may go to different centers, so
//! every problem here is an integral min-cost flow: entries supply their
//! weight, clusters (or cluster/color cells) carry lower and upper bounds.

use crate::constraints::{
    compositions, composition_count, ColorMatrix, ConstraintFamily, FamilyKind, LowerBoundMode,
    DEFAULT_ENUMERATION_CAP,
};
use crate::coreset::Coreset;
use crate::error::{Error, Result};
use crate::flow::{EdgeId, FlowNetwork};
use crate::geometry::{CenterSet, MetricConfig, PointSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Flow {
    pub entry: usize,
    pub center: usize,
    pub mass: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Sorted by `(entry, center)`; zero flows are omitted.
    pub flows: Vec<Flow>,
    /// `sum mass * dist^m` over every flow.
    pub total_cost: f64,
    /// The minimized value: `total_cost` minus the contribution of free
    /// (outlier) clusters.
    pub objective: f64,
    /// `k x l` counts of points of color `j` in cluster `i`.
    pub realized_matrix: ColorMatrix,
}

/// Recomputes `sum mass * dist^m`, checking that each entry's outflow equals its weight.
pub fn assignment_cost(
    alpha: &Assignment,
    points: &PointSet,
    centers: &CenterSet,
    cfg: MetricConfig,
) -> Result<f64> {
    let mut out = vec![0u64; points.len()];
    let mut cost = 0.0;
    for f in &alpha.flows {
        if f.entry >= points.len() || f.center >= centers.len() {
            return Err(Error::invalid("flow references a missing entry or center"));
        }
        out[f.entry] += f.mass;
        cost += f.mass as f64 * cfg.cost(&points.entries()[f.entry].point, &centers.centers()[f.center]);
    }
    for (i, e) in points.iter().enumerate() {
        if out[i] != e.weight {
            return Err(Error::invalid(format!(
                "entry {i} assigns {} of its weight {}",
                out[i], e.weight
            )));
        }
    }
    Ok(cost)
}

/// `dist^m` from every entry to every center.
struct CostTable {
    k: usize,
    raw: Vec<f64>,
}

impl CostTable {
    fn new(points: &PointSet, centers: &CenterSet, cfg: MetricConfig) -> Self {
        let k = centers.len();
        let mut raw = Vec::with_capacity(points.len() * k);
        for e in points.iter() {
            for c in centers.iter() {
                raw.push(cfg.cost(&e.point, c));
            }
        }
        CostTable { k, raw }
    }

    fn get(&self, entry: usize, center: usize) -> f64 {
        self.raw[entry * self.k + center]
    }
}

/// Bounds on cluster sizes and, optionally, on per-cluster per-color counts.
struct Bounds {
    cluster: Vec<(u64, u64)>,
    /// Row-major `k x l` when present.
    cell: Option<Vec<(u64, u64)>>,
}

struct Problem<'a> {
    points: &'a PointSet,
    table: CostTable,
    k: usize,
    colors: usize,
    free: usize,
}

impl<'a> Problem<'a> {
    fn new(points: &'a PointSet, centers: &CenterSet, cfg: MetricConfig, free: usize) -> Self {
        Problem {
            points,
            table: CostTable::new(points, centers, cfg),
            k: centers.len(),
            colors: points.color_count(),
            free,
        }
    }

    fn finish(&self, mut flows: Vec<Flow>) -> Assignment {
        flows.retain(|f| f.mass > 0);
        flows.sort();
        let mut m = ColorMatrix::zeros(self.k, self.colors);
        let mut total = 0.0;
        let mut objective = 0.0;
        for f in &flows {
            let c = f.mass as f64 * self.table.get(f.entry, f.center);
            total += c;
            if f.center >= self.free {
                objective += c;
            }
            m.add(f.center, self.points.entries()[f.entry].color as usize, f.mass);
        }
        Assignment {
            flows,
            total_cost: total,
            objective,
            realized_matrix: m,
        }
    }

    fn nearest(&self) -> Assignment {
        let flows = self
            .points
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut best = 0;
                for c in 1..self.k {
                    if self.table.get(i, c) < self.table.get(i, best) {
                        best = c;
                    }
                }
                Flow {
                    entry: i,
                    center: best,
                    mass: e.weight,
                }
            })
            .collect();
        self.finish(flows)
    }

    fn solve(&self, bounds: &Bounds) -> Option<Assignment> {
        let n_entries = self.points.len();
        let (k, l) = (self.k, self.colors);
        let source = 0;
        let first_entry = 1;
        let first_cluster = first_entry + n_entries;
        let first_cell = first_cluster + k;
        let cells = if bounds.cell.is_some() { k * l } else { 0 };
        let sink = first_cell + cells;
        let mut g = FlowNetwork::new(sink + 1);
        let n = self.points.total_weight() as i64;
        let cap = |(lo, hi): (u64, u64)| (lo, hi.min(n as u64));
        let unsatisfiable = |b: &(u64, u64)| cap(*b).0 > cap(*b).1;
        if bounds.cluster.iter().any(unsatisfiable)
            || bounds.cell.as_ref().is_some_and(|c| c.iter().any(unsatisfiable))
        {
            return None;
        }
        let mut arcs: Vec<(usize, usize, EdgeId)> = Vec::with_capacity(n_entries * k);
        for (e, entry) in self.points.iter().enumerate() {
            let w = entry.weight as i64;
            g.add_edge(source, first_entry + e, w, w, 0.0);
            for c in 0..k {
                if let Some(cell) = &bounds.cell {
                    if cell[c * l + entry.color as usize].1 == 0 {
                        continue;
                    }
                }
                if bounds.cluster[c].1 == 0 {
                    continue;
                }
                let cost = if c < self.free { 0.0 } else { self.table.get(e, c) };
                let target = match bounds.cell {
                    Some(_) => first_cell + c * l + entry.color as usize,
                    None => first_cluster + c,
                };
                arcs.push((e, c, g.add_edge(first_entry + e, target, 0, w, cost)));
            }
        }
        if let Some(cell) = &bounds.cell {
            for c in 0..k {
                for j in 0..l {
                    let (lo, hi) = cell[c * l + j];
                    let (lo, hi) = cap((lo, hi));
                    g.add_edge(first_cell + c * l + j, first_cluster + c, lo as i64, hi as i64, 0.0);
                }
            }
        }
        for (c, &b) in bounds.cluster.iter().enumerate() {
            let (lo, hi) = cap(b);
            g.add_edge(first_cluster + c, sink, lo as i64, hi as i64, 0.0);
        }
        g.solve(source, sink, n).ok()?;
        let flows = arcs
            .into_iter()
            .map(|(entry, center, id)| Flow {
                entry,
                center,
                mass: g.flow(id) as u64,
            })
            .collect();
        Some(self.finish(flows))
    }

    fn exact(&self, m: &ColorMatrix) -> Option<Assignment> {
        if m.cols() == 1 && self.colors > 1 {
            let cluster = m.row_sums().into_iter().map(|s| (s, s)).collect();
            return self.solve(&Bounds { cluster, cell: None });
        }
        let n = self.points.total_weight();
        let cell = (0..self.k)
            .flat_map(|i| (0..self.colors).map(move |j| (i, j)))
            .map(|(i, j)| {
                let v = if j < m.cols() { m.get(i, j) } else { 0 };
                (v, v)
            })
            .collect();
        self.solve(&Bounds {
            cluster: vec![(0, n); self.k],
            cell: Some(cell),
        })
    }
}

/// `a` beats `b`: lower objective, or a tie broken by the smaller realized matrix.
fn better(a: &Assignment, b: &Assignment) -> bool {
    let tol = 1e-12 * a.objective.abs().max(b.objective.abs()).max(1.0);
    if (a.objective - b.objective).abs() <= tol {
        a.realized_matrix < b.realized_matrix
    } else {
        a.objective < b.objective
    }
}

fn keep_best(best: &mut Option<Assignment>, candidate: Option<Assignment>) {
    if let Some(c) = candidate {
        if best.as_ref().is_none_or(|b| better(&c, b)) {
            *best = Some(c);
        }
    }
}

fn infeasible() -> Error {
    Error::Infeasible("no admitted matrix can be realized".into())
}

fn check_inputs(points: &PointSet, centers: &CenterSet) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::EmptyCenters);
    }
    centers.check_dim(points.dim())?;
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Optimal assignment realizing exactly `m`. A `k x 1` matrix on a
/// multi-color input fixes cluster sizes only.
pub fn assign_exact_matrix(
    points: &PointSet,
    centers: &CenterSet,
    m: &ColorMatrix,
    cfg: MetricConfig,
) -> Result<Assignment> {
    check_inputs(points, centers)?;
    check_matrix(points, centers, m)?;
    Problem::new(points, centers, cfg, 0).exact(m).ok_or_else(infeasible)
}

fn check_matrix(points: &PointSet, centers: &CenterSet, m: &ColorMatrix) -> Result<()> {
    if m.rows() != centers.len() {
        return Err(Error::ArityMismatch(format!(
            "matrix has {} rows for {} centers",
            m.rows(),
            centers.len()
        )));
    }
    let ok = if m.cols() == 1 {
        m.row_sums().iter().sum::<u64>() == points.total_weight()
    } else {
        let cols = m.col_sums();
        let masses = points.color_masses();
        (0..cols.len().max(masses.len()))
            .all(|j| cols.get(j).copied().unwrap_or(0) == masses.get(j).copied().unwrap_or(0))
    };
    if !ok {
        return Err(Error::ArityMismatch(format!(
            "matrix column sums {:?} do not match color masses {:?}",
            m.col_sums(),
            points.color_masses()
        )));
    }
    Ok(())
}

/// Minimum-cost assignment whose realized matrix the family admits.
pub fn optimal_assignment(
    points: &PointSet,
    centers: &CenterSet,
    family: &ConstraintFamily,
    cfg: MetricConfig,
) -> Result<Assignment> {
    optimal_assignment_with_cap(points, centers, family, cfg, DEFAULT_ENUMERATION_CAP)
}

pub fn optimal_assignment_with_cap(
    points: &PointSet,
    centers: &CenterSet,
    family: &ConstraintFamily,
    cfg: MetricConfig,
    cap: u128,
) -> Result<Assignment> {
    check_inputs(points, centers)?;
    family.check_instance(points.color_masses(), centers.len())?;
    let prob = Problem::new(points, centers, cfg, family.free_slots());
    let k = centers.len();
    let l = points.color_count();
    let n = points.total_weight();
    let masses = points.color_masses();
    let all = |lo: u64| vec![(lo, n); k];
    let best = match &family.kind {
        FamilyKind::Unconstrained => Some(prob.nearest()),
        FamilyKind::LowerBounds {
            bounds,
            mode: LowerBoundMode::Strict,
        } => prob.solve(&Bounds {
            cluster: bounds.iter().map(|&b| (b, n)).collect(),
            cell: None,
        }),
        FamilyKind::LowerBounds {
            bounds,
            mode: LowerBoundMode::OpenCenters,
        } => {
            if k >= 24 {
                return Err(Error::CapExceeded {
                    count: 1u128 << k,
                    cap,
                    hint: "too many centers for open-center enumeration".into(),
                });
            }
            let mut best = None;
            for open in 1u32..(1 << k) {
                let cluster = (0..k)
                    .map(|i| if open >> i & 1 == 1 { (bounds[i], n) } else { (0, 0) })
                    .collect();
                keep_best(&mut best, prob.solve(&Bounds { cluster, cell: None }));
            }
            best
        }
        FamilyKind::UpperBounds { bounds } => prob.solve(&Bounds {
            cluster: bounds.iter().map(|&u| (0, u)).collect(),
            cell: None,
        }),
        FamilyKind::Outliers { z } => prob.solve(&Bounds {
            cluster: (0..k).map(|i| if i < *z { (1, 1) } else { (0, n) }).collect(),
            cell: None,
        }),
        FamilyKind::Chromatic => prob.solve(&Bounds {
            cluster: all(0),
            cell: Some(vec![(0, 1); k * l]),
        }),
        FamilyKind::PerColorCaps { caps } => prob.solve(&Bounds {
            cluster: all(0),
            cell: Some(
                (0..k)
                    .flat_map(|i| (0..l).map(move |j| (i, j)))
                    .map(|(i, j)| (0, if j < caps.cols() { caps.get(i, j) } else { 0 }))
                    .collect(),
            ),
        }),
        FamilyKind::LDiversity { l: div } => {
            let count = composition_count(n, k);
            if count > cap {
                return Err(Error::CapExceeded {
                    count,
                    cap,
                    hint: "too many cluster-size profiles".into(),
                });
            }
            let mut best = None;
            for sizes in compositions(n, k) {
                let cell = (0..k)
                    .flat_map(|i| (0..l).map(move |j| (i, j)))
                    .map(|(i, _)| (0, sizes[i] / div))
                    .collect();
                let cluster = sizes.iter().map(|&s| (s, s)).collect();
                keep_best(&mut best, prob.solve(&Bounds { cluster, cell: Some(cell) }));
            }
            best
        }
        FamilyKind::MustLink { linked_colors } => {
            let linked = *linked_colors;
            let count = (k as u128).checked_pow(linked as u32).unwrap_or(u128::MAX);
            if count > cap {
                return Err(Error::CapExceeded {
                    count,
                    cap,
                    hint: "too many linked components for the number of centers".into(),
                });
            }
            let mut best = None;
            let mut choice = vec![0usize; linked];
            loop {
                let cell = (0..k)
                    .flat_map(|i| (0..l).map(move |j| (i, j)))
                    .map(|(i, j)| {
                        let open = j >= linked || choice[j] == i;
                        (0, if open { masses[j] } else { 0 })
                    })
                    .collect();
                keep_best(&mut best, prob.solve(&Bounds { cluster: all(0), cell: Some(cell) }));
                let mut pos = 0;
                while pos < linked {
                    choice[pos] += 1;
                    if choice[pos] < k {
                        break;
                    }
                    choice[pos] = 0;
                    pos += 1;
                }
                if pos == linked {
                    break;
                }
            }
            best
        }
        FamilyKind::Explicit { .. } | FamilyKind::CannotLink { .. } => {
            return by_enumeration(&prob, family, cap);
        }
    };
    best.ok_or_else(infeasible)
}

fn by_enumeration(prob: &Problem<'_>, family: &ConstraintFamily, cap: u128) -> Result<Assignment> {
    let mut best = None;
    for m in family.enumerate(cap)? {
        keep_best(&mut best, prob.exact(&m));
    }
    best.ok_or_else(infeasible)
}

/// Same optimum as [`optimal_assignment`], computed by solving one
/// transportation problem per admitted matrix. Used to cross-check the
/// specialized flow formulations.
pub fn optimal_assignment_by_enumeration(
    points: &PointSet,
    centers: &CenterSet,
    family: &ConstraintFamily,
    cfg: MetricConfig,
    cap: u128,
) -> Result<Assignment> {
    check_inputs(points, centers)?;
    family.check_instance(points.color_masses(), centers.len())?;
    let prob = Problem::new(points, centers, cfg, family.free_slots());
    by_enumeration(&prob, family, cap)
}

/// Constrained cost of a weighted summary: the optimal assignment of its
/// expanded version, computed without expanding.
pub fn wcost(
    coreset: &Coreset,
    centers: &CenterSet,
    family: &ConstraintFamily,
    cfg: MetricConfig,
) -> Result<f64> {
    Ok(optimal_assignment(&coreset.points, centers, family, cfg)?.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::*;
    use crate::geometry::{expand, Point, WeightedColoredPoint};

    fn p(x: &[f64]) -> Point {
        Point::new(x.to_vec()).unwrap()
    }

    fn line(xs: &[(f64, u64, u32)]) -> PointSet {
        let mut s = PointSet::new(1);
        for &(x, w, c) in xs {
            s.push(WeightedColoredPoint::new(p(&[x]), w, c)).unwrap();
        }
        s
    }

    fn centers(xs: &[f64]) -> CenterSet {
        CenterSet::new(xs.iter().map(|&x| p(&[x])).collect()).unwrap()
    }

    #[test]
    fn coincident_centers_cost_nothing() {
        let s = line(&[(0.0, 1, 0), (1.0, 1, 0)]);
        let a = optimal_assignment(
            &s,
            &centers(&[0.0, 1.0]),
            &ConstraintFamily::unconstrained(2, &[2]).unwrap(),
            MetricConfig::K_MEANS,
        )
        .unwrap();
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn assignment_cost_direct_sum() {
        let s = line(&[(0.0, 1, 0), (1.0, 1, 0)]);
        let c = centers(&[0.0]);
        let a = Assignment {
            flows: vec![
                Flow { entry: 0, center: 0, mass: 1 },
                Flow { entry: 1, center: 0, mass: 1 },
            ],
            total_cost: 0.0,
            objective: 0.0,
            realized_matrix: ColorMatrix::from_sizes(&[2]),
        };
        assert_eq!(assignment_cost(&a, &s, &c, MetricConfig::K_MEDIAN).unwrap(), 1.0);
        let mut short = a.clone();
        short.flows.pop();
        assert!(assignment_cost(&short, &s, &c, MetricConfig::K_MEDIAN).is_err());
    }

    #[test]
    fn exact_matrix_on_four_points() {
        let s = line(&[(0.0, 1, 0), (0.0, 1, 0), (1.0, 1, 0), (1.0, 1, 0)]);
        let c = centers(&[0.0, 1.0]);
        for cfg in [MetricConfig::K_MEDIAN, MetricConfig::K_MEANS] {
            let a = assign_exact_matrix(&s, &c, &ColorMatrix::from_sizes(&[2, 2]), cfg).unwrap();
            assert_eq!(a.total_cost, 0.0);
            let a = assign_exact_matrix(&s, &c, &ColorMatrix::from_sizes(&[3, 1]), cfg).unwrap();
            assert_eq!(a.total_cost, 1.0);
        }
        assert!(assign_exact_matrix(&s, &c, &ColorMatrix::from_sizes(&[3, 2]), MetricConfig::K_MEANS).is_err());
    }

    #[test]
    fn lower_bounds_costs_nothing_on_balanced_line() {
        let s = line(&[(0.0, 4, 0), (1.0, 4, 0)]);
        let f = encode_lower_bounds(&[4, 4], 8, LowerBoundMode::Strict).unwrap();
        let a = optimal_assignment(&s, &centers(&[0.0, 1.0]), &f, MetricConfig::K_MEANS).unwrap();
        assert_eq!(a.objective, 0.0);
        assert_eq!(a.realized_matrix, ColorMatrix::from_sizes(&[4, 4]));
    }

    #[test]
    fn open_centers_single_cluster() {
        let s = line(&[(0.0, 2, 0), (1.0, 2, 0)]);
        let f = encode_lower_bounds(&[4, 4], 4, LowerBoundMode::OpenCenters).unwrap();
        let a = optimal_assignment(&s, &centers(&[0.5, 7.0]), &f, MetricConfig::K_MEANS).unwrap();
        assert_eq!(a.objective, 1.0);
        assert_eq!(a.realized_matrix, ColorMatrix::from_sizes(&[4, 0]));
    }

    #[test]
    fn outliers_discount_free_slots() {
        let s = line(&[(0.0, 1, 0), (1.0, 1, 0), (10.0, 1, 0)]);
        let f = encode_outliers(1, 1, 3).unwrap();
        let a = optimal_assignment(&s, &centers(&[0.0, 0.5]), &f, MetricConfig::K_MEANS).unwrap();
        assert_eq!(a.objective, 0.5);
        assert!(a.total_cost > a.objective);
    }

    #[test]
    fn chromatic_splits_colors() {
        let mut s = PointSet::new(2);
        for (x, c) in [(0.0, 0), (1.0, 0), (0.0, 1), (1.0, 1)] {
            s.push(WeightedColoredPoint::new(p(&[x, 0.0]), 1, c)).unwrap();
        }
        let c = CenterSet::new(vec![p(&[0.0, 0.0]), p(&[1.0, 0.0])]).unwrap();
        let f = encode_chromatic(2, &[2, 2]).unwrap();
        let a = optimal_assignment(&s, &c, &f, MetricConfig::K_MEANS).unwrap();
        assert_eq!(a.objective, 0.0);
        assert_eq!(a.realized_matrix, ColorMatrix::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap());
    }

    #[test]
    fn unconstrained_matches_nearest_center() {
        let s = line(&[(0.0, 2, 0), (0.4, 1, 0), (3.0, 5, 0)]);
        let c = centers(&[0.1, 2.0]);
        let a = optimal_assignment(&s, &c, &ConstraintFamily::unconstrained(2, &[8]).unwrap(), MetricConfig::K_MEANS)
            .unwrap();
        let direct = crate::geometry::clustering_cost(&s, &c, MetricConfig::K_MEANS).unwrap();
        assert!((a.total_cost - direct).abs() < 1e-12);
    }

    #[test]
    fn flow_dispatch_matches_enumeration() {
        let s = line(&[(0.0, 2, 0), (0.3, 1, 1), (2.0, 2, 1), (2.5, 1, 0), (4.0, 1, 1)]);
        let c = centers(&[0.0, 2.2, 4.1]);
        let masses = s.color_masses().to_vec();
        let families = vec![
            encode_lower_bounds(&[2, 2, 2], 7, LowerBoundMode::Strict).unwrap(),
            encode_lower_bounds(&[3, 3, 4], 7, LowerBoundMode::OpenCenters).unwrap(),
            encode_upper_bounds(&[3, 2, 2], 7).unwrap(),
            encode_per_color_caps(
                ColorMatrix::from_rows(&[vec![2, 1], vec![1, 2], vec![1, 2]]).unwrap(),
                &masses,
            )
            .unwrap(),
            encode_l_diversity(3, 2, &masses).unwrap(),
        ];
        for f in families {
            for cfg in [MetricConfig::K_MEDIAN, MetricConfig::K_MEANS] {
                let fast = optimal_assignment(&s, &c, &f, cfg);
                let slow = optimal_assignment_by_enumeration(&s, &c, &f, cfg, 1_000_000);
                match (fast, slow) {
                    (Ok(a), Ok(b)) => assert!((a.objective - b.objective).abs() < 1e-9, "{f:?}"),
                    (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => {}
                    (a, b) => panic!("{f:?}: {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn weighted_equals_expanded() {
        let s = line(&[(0.0, 3, 0), (1.0, 2, 1), (5.0, 2, 0)]);
        let e = expand(&s);
        let c = centers(&[0.5, 4.0]);
        let f = encode_upper_bounds(&[4, 4], 7).unwrap();
        let a = optimal_assignment(&s, &c, &f, MetricConfig::K_MEANS).unwrap();
        let b = optimal_assignment(&e, &c, &f, MetricConfig::K_MEANS).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
    }

    #[test]
    fn infeasible_family_is_reported() {
        let s = line(&[(0.0, 1, 0), (1.0, 1, 0), (2.0, 1, 0)]);
        let (s2, f) = encode_cannot_link(1, &[(0, 1)], &s, CannotLinkColoring::Greedy).unwrap();
        assert!(matches!(
            optimal_assignment(&s2, &centers(&[0.0]), &f, MetricConfig::K_MEANS),
            Err(Error::Infeasible(_))
        ));
    }
}
