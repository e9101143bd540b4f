//! Movement-based coresets.
//!
//! Every input entry is moved, whole, to a representative of the same color;
//! the representative's weight is the mass moved onto it. If the total
//! movement `sum w * dist^m` stays below `(eps / 2m)^m` times a lower bound on
//! the optimal unconstrained cost, the summary approximates every (size- or
//! color-) constrained cost of the input within a factor `1 +- eps`.
//!
//! Representatives come from exponential-ring grids around a D^m-sampled
//! bicriteria solution: points far from every seed live in coarser cells.
//! Each representative is the weighted mean of the entries in its cell.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    weighted_mean_of, CenterSet, MetricConfig, Point, PointSet, Provenance, WeightedColoredPoint,
};

/// Assumed approximation factor of the refined k-center solution;
/// `cost_estimate / SEED_FACTOR` is used as the lower bound on the optimum.
pub const SEED_FACTOR: f64 = 4.0;

/// Independent k-center refinements; the cheapest one sets the estimate.
const RESTARTS: usize = 3;
const LLOYD_ROUNDS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct MovementCertificate {
    /// Input entry index -> coreset entry index.
    pub mapping: Vec<usize>,
    pub movement_cost: f64,
    pub opt_lower_bound: f64,
    pub budget: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coreset {
    pub points: PointSet,
    pub k: usize,
    pub eps: f64,
    pub cfg: MetricConfig,
    pub certificate: Option<MovementCertificate>,
}

impl Coreset {
    pub fn empty(dim: usize, k: usize, eps: f64, cfg: MetricConfig) -> Self {
        Coreset {
            points: PointSet::new(dim),
            k,
            eps,
            cfg,
            certificate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn colors(&self) -> usize {
        self.points.color_count()
    }
}

/// `(eps / 2m)^m`.
pub fn budget_factor(eps: f64, cfg: MetricConfig) -> f64 {
    let m = cfg.power() as f64;
    (eps / (2.0 * m)).powi(cfg.power() as i32)
}

#[derive(Clone, Debug)]
pub struct Seeding {
    /// The `O(k log k)` sampled centers.
    pub centers: CenterSet,
    /// Cost of the best refined `k`-center solution found.
    pub cost_estimate: f64,
    pub opt_lower_bound: f64,
    /// At most `k` distinct locations: the optimum is zero.
    pub degenerate: bool,
}

/// Number of D^m draws for `k` clusters.
pub fn seed_draws(k: usize) -> usize {
    2 * k * ((k as f64).ln().ceil() as usize + 1)
}

/// `draws` rounds of D^m sampling (the first draw is proportional to weight).
fn dm_sample(points: &PointSet, draws: usize, cfg: MetricConfig, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let entries = points.entries();
    let weights: Vec<f64> = entries.iter().map(|e| e.weight as f64).collect();
    let mut chosen: Vec<Point> = Vec::new();
    let mut contrib = weights.clone();
    let mut nearest = vec![f64::INFINITY; entries.len()];
    for _ in 0..draws {
        let total: f64 = contrib.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = entries.len() - 1;
        for (i, &c) in contrib.iter().enumerate() {
            if target < c {
                pick = i;
                break;
            }
            target -= c;
        }
        // rounding can leave the target past the last live entry
        while contrib[pick] <= 0.0 && pick > 0 {
            pick -= 1;
        }
        let c = entries[pick].point.clone();
        for (i, e) in entries.iter().enumerate() {
            nearest[i] = nearest[i].min(cfg.cost(&e.point, &c));
            contrib[i] = weights[i] * nearest[i];
        }
        chosen.push(c);
    }
    chosen
}

/// Alternates nearest-center assignment and weighted means; returns the
/// lowest cost seen.
fn lloyd(points: &PointSet, mut centers: Vec<Point>, cfg: MetricConfig) -> f64 {
    let dim = points.dim();
    let mut best = f64::INFINITY;
    for _ in 0..LLOYD_ROUNDS {
        let set = CenterSet::new(centers.clone()).expect("nonempty");
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut mass = vec![0u64; centers.len()];
        let mut cost = 0.0;
        for e in points.iter() {
            let (c, d2) = set.nearest(&e.point);
            cost += e.weight as f64 * cfg.cost_from_sq(d2);
            for (s, x) in sums[c].iter_mut().zip(e.point.coords()) {
                *s += e.weight as f64 * x;
            }
            mass[c] += e.weight;
        }
        best = best.min(cost);
        for (c, (s, &w)) in centers.iter_mut().zip(sums.iter().zip(&mass)) {
            if w > 0 {
                *c = Point::from_vec(s.iter().map(|v| v / w as f64).collect());
            }
        }
    }
    best
}

/// D^m sampling with `2k(ceil(ln k) + 1)` draws for the ring centers, plus a
/// refined `k`-center solution whose cost, divided by [`SEED_FACTOR`], is the
/// lower bound on the optimal cost.
pub fn bicriteria_seed(points: &PointSet, k: usize, cfg: MetricConfig, seed: u64) -> Result<Seeding> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut distinct: Vec<&Point> = points.iter().map(|e| &e.point).collect();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup_by(|a, b| a.coords() == b.coords());
    if distinct.len() <= k {
        let centers = distinct.into_iter().cloned().collect();
        return Ok(Seeding {
            centers: CenterSet::with_provenance(centers, Provenance::Seeding)?,
            cost_estimate: 0.0,
            opt_lower_bound: 0.0,
            degenerate: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rings = dm_sample(points, seed_draws(k), cfg, &mut rng);
    let mut cost_estimate = f64::INFINITY;
    for _ in 0..RESTARTS {
        let init = dm_sample(points, k, cfg, &mut rng);
        cost_estimate = cost_estimate.min(lloyd(points, init, cfg));
    }
    Ok(Seeding {
        centers: CenterSet::with_provenance(rings, Provenance::Seeding)?,
        cost_estimate,
        opt_lower_bound: cost_estimate / SEED_FACTOR,
        degenerate: false,
    })
}

/// Result of snapping weighted entries to representatives.
#[derive(Clone, Debug)]
pub(crate) struct Summary {
    pub points: PointSet,
    pub mapping: Vec<usize>,
    /// Movement accumulated on each new entry, including what its inputs carried.
    pub carried: Vec<f64>,
    pub movement: f64,
}

/// Groups entries by `key`, one representative (weighted mean) per group.
fn group_by<K: std::hash::Hash + Eq>(
    points: &PointSet,
    carried: &[f64],
    cfg: MetricConfig,
    key: impl Fn(usize) -> K,
) -> Summary {
    let mut index: HashMap<K, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut mapping = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let g = *index.entry(key(i)).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[g].push(i);
        mapping.push(g);
    }
    let entries = points.entries();
    let mut out = PointSet::with_colors(points.dim(), points.color_count());
    let mut out_carried = Vec::with_capacity(members.len());
    let mut movement = 0.0;
    for group in &members {
        let first = &entries[group[0]];
        let rep = if group.iter().all(|&i| entries[i].point.coords() == first.point.coords()) {
            first.point.clone()
        } else {
            weighted_mean_of(
                group.iter().map(|&i| (entries[i].point.coords(), entries[i].weight)),
                points.dim(),
            )
        };
        let mut weight = 0;
        let mut moved = 0.0;
        for &i in group {
            weight += entries[i].weight;
            moved += carried[i] + entries[i].weight as f64 * cfg.cost(&entries[i].point, &rep);
        }
        movement += moved;
        out_carried.push(moved);
        out.push(WeightedColoredPoint::new(rep, weight, first.color))
            .expect("valid entry");
    }
    Summary {
        points: out,
        mapping,
        carried: out_carried,
        movement,
    }
}

/// Merges entries with identical location and color; moves nothing new.
pub(crate) fn exact_summary(points: &PointSet, carried: &[f64], cfg: MetricConfig) -> Summary {
    group_by(points, carried, cfg, |i| {
        let e = &points.entries()[i];
        (e.point.bits(), e.color)
    })
}

fn log2_ceil(x: f64) -> i32 {
    x.log2().ceil() as i32
}

/// Coarsest ring grid whose accumulated movement fits `allowance`; falls
/// back to exact duplicate merging.
pub(crate) fn grid_summary(
    points: &PointSet,
    carried: &[f64],
    seeds: &CenterSet,
    lower_bound: f64,
    allowance: f64,
    cfg: MetricConfig,
) -> Summary {
    let exact = exact_summary(points, carried, cfg);
    let n_w = points.total_weight() as f64;
    let r0 = (lower_bound / n_w).powf(1.0 / cfg.power() as f64);
    if !(r0 > 0.0 && r0.is_finite()) || exact.movement > allowance {
        return exact;
    }
    let rings: Vec<i32> = points
        .iter()
        .map(|e| {
            let r = seeds.nearest(&e.point).1.sqrt();
            if r <= r0 {
                0
            } else {
                log2_ceil(r / r0).min(2000)
            }
        })
        .collect();
    let mut extent = 0.0f64;
    for j in 0..points.dim() {
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            let x = e.point.coords()[j];
            (lo.min(x), hi.max(x))
        });
        extent = extent.max(hi - lo).max(lo.abs()).max(hi.abs());
    }
    let base = r0.log2().floor() as i32;
    let top = log2_ceil(extent.max(r0)) - base + 1;
    for q in (top - 80..=top).rev() {
        let s = group_by(points, carried, cfg, |i| {
            let e = &points.entries()[i];
            let exp = (base + q + rings[i]).clamp(-1000, 1000);
            let side = 2f64.powi(exp);
            let cell: Vec<i64> = e.point.coords().iter().map(|x| (x / side).floor() as i64).collect();
            (exp, cell, e.color)
        });
        if s.movement <= allowance {
            return if s.points.len() < exact.points.len() { s } else { exact };
        }
        if s.points.len() >= exact.points.len() {
            break;
        }
    }
    exact
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

/// Builds a movement-based (k, eps)-coreset of `points`; colors are kept
/// apart, so it is a color coreset for the input's coloring as well.
pub fn build_movement_coreset(
    points: &PointSet,
    k: usize,
    eps: f64,
    cfg: MetricConfig,
    seed: u64,
) -> Result<Coreset> {
    check_eps(eps)?;
    let seeding = bicriteria_seed(points, k, cfg, seed)?;
    let zeros = vec![0.0; points.len()];
    let (summary, lb, budget) = if seeding.degenerate || seeding.opt_lower_bound <= 0.0 {
        (exact_summary(points, &zeros, cfg), 0.0, 0.0)
    } else {
        let lb = seeding.opt_lower_bound;
        let budget = budget_factor(eps, cfg) * lb;
        (grid_summary(points, &zeros, &seeding.centers, lb, budget, cfg), lb, budget)
    };
    Ok(Coreset {
        points: summary.points,
        k,
        eps,
        cfg,
        certificate: Some(MovementCertificate {
            mapping: summary.mapping,
            movement_cost: summary.movement,
            opt_lower_bound: lb,
            budget,
        }),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    /// Movement recomputed from the mapping.
    pub movement: f64,
    pub problems: Vec<String>,
}

impl Verification {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Recomputes the movement of `coreset`'s certificate against `points` and
/// checks the budget, mass conservation and per-color conservation.
pub fn verify_certificate(points: &PointSet, coreset: &Coreset) -> Result<Verification> {
    let cert = coreset.certificate.as_ref().ok_or(Error::MissingCertificate)?;
    let mut problems = Vec::new();
    let entries = coreset.points.entries();
    if cert.mapping.len() != points.len() {
        problems.push(format!(
            "mapping covers {} entries, input has {}",
            cert.mapping.len(),
            points.len()
        ));
    }
    if points.dim() != coreset.points.dim() {
        problems.push("dimension mismatch".into());
        return Ok(Verification {
            movement: f64::NAN,
            problems,
        });
    }
    let mut mass = vec![0u64; entries.len()];
    let mut movement = 0.0;
    for (i, (e, &target)) in points.iter().zip(&cert.mapping).enumerate() {
        let Some(s) = entries.get(target) else {
            problems.push(format!("entry {i} maps to missing coreset entry {target}"));
            continue;
        };
        if s.color != e.color {
            problems.push(format!("entry {i} of color {} maps to color {}", e.color, s.color));
        }
        mass[target] += e.weight;
        movement += e.weight as f64 * coreset.cfg.cost(&e.point, &s.point);
    }
    for (j, s) in entries.iter().enumerate() {
        if mass[j] != s.weight {
            problems.push(format!(
                "coreset entry {j} has weight {} but receives mass {}",
                s.weight, mass[j]
            ));
        }
    }
    if points.total_weight() != coreset.points.total_weight() {
        problems.push(format!(
            "total weight {} != input weight {}",
            coreset.points.total_weight(),
            points.total_weight()
        ));
    }
    let n = points.color_count().max(coreset.points.color_count());
    for j in 0..n {
        let a = points.color_masses().get(j).copied().unwrap_or(0);
        let b = coreset.points.color_masses().get(j).copied().unwrap_or(0);
        if a != b {
            problems.push(format!("color {j}: input mass {a}, coreset mass {b}"));
        }
    }
    let slack = 1e-9 * cert.budget.abs().max(f64::MIN_POSITIVE);
    if movement > cert.budget + slack {
        problems.push(format!("movement {movement} exceeds budget {}", cert.budget));
    }
    let cap = budget_factor(coreset.eps, coreset.cfg) * cert.opt_lower_bound;
    if cert.budget > cap * (1.0 + 1e-9) {
        problems.push(format!("budget {} exceeds (eps/2m)^m * lower bound = {cap}", cert.budget));
    }
    Ok(Verification { movement, problems })
}

fn check_compatible(a: &Coreset, b: &Coreset) -> Result<()> {
    if a.points.dim() != b.points.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.points.dim(),
            got: b.points.dim(),
        });
    }
    if a.cfg != b.cfg || a.k != b.k {
        return Err(Error::invalid(format!(
            "cannot merge coresets built for (k={}, m={}) and (k={}, m={})",
            a.k,
            a.cfg.power(),
            b.k,
            b.cfg.power()
        )));
    }
    Ok(())
}

/// Union with summed weights. The certificate survives when both inputs
/// carry one; it then refers to the concatenation of the two inputs.
pub fn merge(a: &Coreset, b: &Coreset) -> Result<Coreset> {
    if b.is_empty() && b.certificate.is_none() {
        return Ok(a.clone());
    }
    if a.is_empty() && a.certificate.is_none() {
        return Ok(b.clone());
    }
    check_compatible(a, b)?;
    let mut union = PointSet::with_colors(a.points.dim(), a.colors().max(b.colors()));
    for e in a.points.iter().chain(b.points.iter()) {
        union.push(e.clone())?;
    }
    let merged = exact_summary(&union, &vec![0.0; union.len()], a.cfg);
    let certificate = match (&a.certificate, &b.certificate) {
        (Some(ca), Some(cb)) => {
            let offset = a.len();
            let mapping = ca
                .mapping
                .iter()
                .map(|&i| merged.mapping[i])
                .chain(cb.mapping.iter().map(|&i| merged.mapping[offset + i]))
                .collect();
            Some(MovementCertificate {
                mapping,
                movement_cost: ca.movement_cost + cb.movement_cost,
                opt_lower_bound: ca.opt_lower_bound + cb.opt_lower_bound,
                budget: ca.budget + cb.budget,
            })
        }
        _ => None,
    };
    Ok(Coreset {
        points: merged.points,
        k: a.k,
        eps: a.eps.max(b.eps),
        cfg: a.cfg,
        certificate,
    })
}

/// Rebuilds `coreset` from its own weighted entries at `target_eps`. The
/// result's certificate maps `coreset`'s entries, and its error parameter is
/// the composition `(1 + eps)(1 + target_eps) - 1`.
pub fn reduce(coreset: &Coreset, target_eps: f64, seed: u64) -> Result<Coreset> {
    let mut out = build_movement_coreset(&coreset.points, coreset.k, target_eps, coreset.cfg, seed)?;
    out.eps = (1.0 + coreset.eps) * (1.0 + target_eps) - 1.0;
    Ok(out)
}
