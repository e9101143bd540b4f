//! Brute-force ground truth for tiny instances.
//!
//! Weighted inputs are expanded into unit points first, so every unit may go
//! to its own cluster. Centers are free in `R^d`: once a partition is fixed,
//! each part gets its optimal single center (centroid for `m = 2`, geometric
//! median for `m = 1`). Everything here is exhaustive and refuses instances
//! beyond its [`OracleBudget`] instead of approximating.

use crate::constraints::{ColorMatrix, ConstraintFamily};
use crate::error::{Error, Result};
use crate::geometry::{expand, squared_distance, CenterSet, MetricConfig, Point, PointSet, Provenance};

/// Hard caps on instance size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    /// Expanded point count.
    pub max_points: usize,
    /// Clusters, including outlier slots.
    pub max_k: usize,
    /// Labelings (or partitions) scanned.
    pub max_candidates: u128,
}

impl OracleBudget {
    pub const UNCONSTRAINED: OracleBudget = OracleBudget {
        max_points: 12,
        max_k: 4,
        max_candidates: 10_000_000,
    };
    pub const CONSTRAINED: OracleBudget = OracleBudget {
        max_points: 10,
        max_k: 6,
        max_candidates: 10_000_000,
    };

    fn check(&self, n: usize, k: usize, candidates: u128) -> Result<()> {
        let refuse = |count: u128, cap: u128, what: &str| Error::CapExceeded {
            count,
            cap,
            hint: format!("oracle {what} limit; shrink the instance"),
        };
        if n > self.max_points {
            return Err(refuse(n as u128, self.max_points as u128, "point"));
        }
        if k > self.max_k {
            return Err(refuse(k as u128, self.max_k as u128, "cluster"));
        }
        if candidates > self.max_candidates {
            return Err(refuse(candidates, self.max_candidates, "enumeration"));
        }
        Ok(())
    }
}

/// An optimal clustering of the expanded input.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub cost: f64,
    /// One center per cluster. Empty clusters sit on the first point.
    pub centers: CenterSet,
    /// Cluster of each expanded unit point.
    pub labels: Vec<usize>,
    pub realized_matrix: ColorMatrix,
    /// Partitions or labelings scanned.
    pub examined: u64,
}

const WEISZFELD_MAX_ITERS: usize = 100_000;
const WEISZFELD_TOL: f64 = 1e-13;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn median_cost(locs: &[(Vec<f64>, f64)], y: &[f64]) -> f64 {
    locs.iter().map(|(x, w)| w * squared_distance(x, y).sqrt()).sum()
}

/// Weighted geometric median by Weiszfeld iteration with the Vardi-Zhang
/// modification at data points. A data point whose pull from the others
/// does not exceed its own weight is optimal and returned directly.
pub fn geometric_median(points: &[&[f64]], weights: &[f64]) -> Point {
    assert!(!points.is_empty() && points.len() == weights.len());
    let d = points[0].len();
    let mut locs: Vec<(Vec<f64>, f64)> = Vec::new();
    for (p, &w) in points.iter().zip(weights) {
        match locs.iter_mut().find(|(q, _)| q.as_slice() == *p) {
            Some(e) => e.1 += w,
            None => locs.push((p.to_vec(), w)),
        }
    }
    if locs.len() == 1 {
        return Point::from_vec(locs.swap_remove(0).0);
    }
    let pull = |y: &[f64]| -> (Vec<f64>, f64) {
        // resultant of unit vectors toward the other points, and weight at y
        let mut r = vec![0.0; d];
        let mut at = 0.0;
        for (x, w) in &locs {
            let dist = squared_distance(x, y).sqrt();
            if dist == 0.0 {
                at += w;
                continue;
            }
            for t in 0..d {
                r[t] += w * (x[t] - y[t]) / dist;
            }
        }
        (r, at)
    };
    for (x, _) in &locs {
        let (r, at) = pull(x);
        if norm(&r) <= at {
            return Point::from_vec(x.clone());
        }
    }
    let total: f64 = locs.iter().map(|(_, w)| w).sum();
    let mut y: Vec<f64> = (0..d)
        .map(|t| locs.iter().map(|(x, w)| w * x[t]).sum::<f64>() / total)
        .collect();
    for _ in 0..WEISZFELD_MAX_ITERS {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for (x, w) in &locs {
            let dist = squared_distance(x, &y).sqrt();
            if dist == 0.0 {
                continue;
            }
            for t in 0..d {
                num[t] += w * x[t] / dist;
            }
            den += w / dist;
        }
        let target: Vec<f64> = num.iter().map(|v| v / den).collect();
        let (r, at) = pull(&y);
        let next: Vec<f64> = if at > 0.0 {
            let rn = norm(&r);
            if rn <= at {
                break;
            }
            let s = at / rn;
            (0..d).map(|t| (1.0 - s) * target[t] + s * y[t]).collect()
        } else {
            target
        };
        let step = squared_distance(&next, &y).sqrt();
        y = next;
        if step <= WEISZFELD_TOL * (1.0 + norm(&y)) {
            break;
        }
    }
    let mut best = (median_cost(&locs, &y), y);
    for (x, _) in &locs {
        let c = median_cost(&locs, x);
        if c < best.0 {
            best = (c, x.clone());
        }
    }
    Point::from_vec(best.1)
}

/// Optimal single-center cost of every subset, by bit mask; centers are
/// recomputed only for the winning partition.
struct PartTable<'a> {
    points: &'a PointSet,
    cfg: MetricConfig,
    cost: Vec<f64>,
}

impl<'a> PartTable<'a> {
    fn new(points: &'a PointSet, cfg: MetricConfig) -> Result<Self> {
        if !matches!(cfg.power(), 1 | 2) {
            return Err(Error::invalid(format!(
                "the oracle supports m = 1 and m = 2, got m = {}",
                cfg.power()
            )));
        }
        let n = points.len();
        let mut table = PartTable {
            points,
            cfg,
            cost: vec![0.0; 1usize << n],
        };
        let mut members: Vec<&[f64]> = Vec::with_capacity(n);
        let mut center = vec![0.0; points.dim()];
        for mask in 1..table.cost.len() {
            table.members(mask, &mut members);
            table.center_into(&members, &mut center);
            table.cost[mask] = members
                .iter()
                .map(|x| cfg.cost_from_sq(squared_distance(x, &center)))
                .sum();
        }
        Ok(table)
    }

    fn members(&self, mask: usize, out: &mut Vec<&'a [f64]>) {
        out.clear();
        let entries = self.points.entries();
        out.extend((0..entries.len()).filter(|&i| mask >> i & 1 == 1).map(|i| entries[i].point.coords()));
    }

    fn center_into(&self, members: &[&[f64]], out: &mut [f64]) {
        if self.cfg.power() == 2 {
            let inv = 1.0 / members.len() as f64;
            for (t, o) in out.iter_mut().enumerate() {
                *o = members.iter().map(|x| x[t]).sum::<f64>() * inv;
            }
        } else {
            out.copy_from_slice(geometric_median(members, &vec![1.0; members.len()]).coords());
        }
    }

    fn center(&self, mask: usize) -> Option<Point> {
        if mask == 0 {
            return None;
        }
        let mut members = Vec::new();
        self.members(mask, &mut members);
        let mut c = vec![0.0; self.points.dim()];
        self.center_into(&members, &mut c);
        Some(Point::from_vec(c))
    }
}

fn realized(points: &PointSet, labels: &[usize], k: usize) -> ColorMatrix {
    let mut m = ColorMatrix::zeros(k, points.color_count());
    for (e, &l) in points.iter().zip(labels) {
        m.add(l, e.color as usize, 1);
    }
    m
}

fn solution(points: &PointSet, table: &PartTable, labels: Vec<usize>, k: usize, free: usize, examined: u64) -> Result<OracleSolution> {
    let mut masks = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        masks[l] |= 1 << i;
    }
    let first = points.entries()[0].point.clone();
    let centers: Vec<Point> = masks
        .iter()
        .map(|&m| table.center(m).unwrap_or_else(|| first.clone()))
        .collect();
    let cost = masks[free..].iter().map(|&m| table.cost[m]).sum();
    Ok(OracleSolution {
        cost,
        centers: CenterSet::with_provenance(centers, Provenance::OracleWitness)?,
        realized_matrix: realized(points, &labels, k),
        labels,
        examined,
    })
}

fn expanded_nonempty(points: &PointSet) -> Result<PointSet> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(expand(points))
}

/// Optimal unconstrained cost over all partitions of the expanded input into
/// at most `k` parts, by dynamic programming over subsets.
pub fn brute_force_unconstrained_opt(
    points: &PointSet,
    k: usize,
    cfg: MetricConfig,
    budget: &OracleBudget,
) -> Result<OracleSolution> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let units = expanded_nonempty(points)?;
    let n = units.len();
    budget.check(n, k, 3u128.pow(n as u32).saturating_mul(k as u128))?;
    let table = PartTable::new(&units, cfg)?;
    let full = (1usize << n) - 1;
    let parts = k.min(n);
    // best[j][mask]: cheapest split of mask into at most j + 1 parts; choice
    // records the part holding the lowest member
    let mut best = vec![table.cost.clone()];
    let mut choice = vec![(0..=full).collect::<Vec<usize>>()];
    let mut examined = 0u64;
    for j in 1..parts {
        let prev = &best[j - 1];
        let mut cur = prev.clone();
        let mut pick = choice[j - 1].clone();
        for mask in 1..=full {
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            let mut sub = rest;
            loop {
                let part = sub | low;
                if part != mask {
                    examined += 1;
                    let c = table.cost[part] + prev[mask ^ part];
                    if c < cur[mask] {
                        cur[mask] = c;
                        pick[mask] = part;
                    }
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        best.push(cur);
        choice.push(pick);
    }
    let mut labels = vec![0usize; n];
    let mut mask = full;
    let mut j = parts - 1;
    let mut label = 0;
    while mask != 0 {
        let part = choice[j][mask];
        for (i, l) in labels.iter_mut().enumerate() {
            if part >> i & 1 == 1 {
                *l = label;
            }
        }
        label += 1;
        mask ^= part;
        j = j.saturating_sub(1);
    }
    solution(&units, &table, labels, k, 0, examined)
}

/// Depth-first scan over labelings of `n` units into `k` clusters, pruned by
/// per-cluster size bounds. `leaf` sees each complete labeling.
fn for_each_labeling(n: usize, bounds: &[(u64, u64)], mut leaf: impl FnMut(&[usize])) -> u64 {
    let mut labels = vec![0usize; n];
    let mut sizes = vec![0u64; bounds.len()];
    let mut count = 0u64;
    fn rec(
        i: usize,
        labels: &mut [usize],
        sizes: &mut [u64],
        bounds: &[(u64, u64)],
        count: &mut u64,
        leaf: &mut dyn FnMut(&[usize]),
    ) {
        let n = labels.len();
        let missing: u64 = sizes.iter().zip(bounds).map(|(&s, &(lo, _))| lo.saturating_sub(s)).sum();
        if missing > (n - i) as u64 {
            return;
        }
        if i == n {
            *count += 1;
            leaf(labels);
            return;
        }
        for c in 0..sizes.len() {
            if sizes[c] >= bounds[c].1 {
                continue;
            }
            sizes[c] += 1;
            labels[i] = c;
            rec(i + 1, labels, sizes, bounds, count, leaf);
            sizes[c] -= 1;
        }
    }
    rec(0, &mut labels, &mut sizes, bounds, &mut count, &mut leaf);
    count
}

/// Optimal constrained cost: every labeled partition of the expanded input
/// into the family's clusters whose realized matrix the family admits, each
/// part served by its optimal center; outlier slots cost nothing.
pub fn brute_force_constrained_opt(
    points: &PointSet,
    family: &ConstraintFamily,
    cfg: MetricConfig,
    budget: &OracleBudget,
) -> Result<OracleSolution> {
    let units = expanded_nonempty(points)?;
    let n = units.len();
    let k = family.clusters();
    family.check_instance(units.color_masses(), k)?;
    budget.check(n, k, (k as u128).saturating_pow(n as u32))?;
    let table = PartTable::new(&units, cfg)?;
    let free = family.free_slots();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let examined = for_each_labeling(n, &family.row_bounds(), |labels| {
        let m = realized(&units, labels, k);
        if !family.admits(&m) {
            return;
        }
        let mut masks = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            masks[l] |= 1 << i;
        }
        let cost: f64 = masks[free..].iter().map(|&s| table.cost[s]).sum();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, labels.to_vec()));
        }
    });
    let (_, labels) = best.ok_or_else(|| Error::Infeasible("no admitted partition exists".into()))?;
    solution(&units, &table, labels, k, free, examined)
}

/// Optimal constrained assignment to fixed centers by scanning every
/// labeling of the expanded input. Returns the cost and the labels.
pub fn brute_force_assignment(
    points: &PointSet,
    centers: &CenterSet,
    family: &ConstraintFamily,
    cfg: MetricConfig,
    budget: &OracleBudget,
) -> Result<(f64, Vec<usize>)> {
    let units = expanded_nonempty(points)?;
    let n = units.len();
    let k = centers.len();
    centers.check_dim(units.dim())?;
    family.check_instance(units.color_masses(), k)?;
    budget.check(n, k, (k as u128).saturating_pow(n as u32))?;
    let free = family.free_slots();
    let costs: Vec<Vec<f64>> = units
        .iter()
        .map(|e| {
            centers
                .iter()
                .enumerate()
                .map(|(c, p)| if c < free { 0.0 } else { cfg.cost(&e.point, p) })
                .collect()
        })
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_labeling(n, &family.row_bounds(), |labels| {
        if !family.admits(&realized(&units, labels, k)) {
            return;
        }
        let cost: f64 = labels.iter().enumerate().map(|(i, &l)| costs[i][l]).sum();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, labels.to_vec()));
        }
    });
    best.ok_or_else(|| Error::Infeasible("no admitted assignment exists".into()))
}
