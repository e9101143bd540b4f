//! Constrained k-means on a summary by candidate enumeration.
//!
//! For any clustering of the expanded summary, the mean of a well-chosen
//! weight-proportional sample of `q = ceil(2 / eps)` points from each cluster
//! is a `(1 + eps)`-approximate center for it. Enumerating the centroids of
//! every `q`-multiset of summary locations and every way to choose `k` of
//! them therefore reaches a `(1 + eps)`-approximate center set; each
//! candidate is scored by its optimal constrained assignment.
//!
//! For `m = 1` no such sampling argument exists, so candidates are `k`
//! summary locations (discrete k-median, within a factor 2).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assignment::{optimal_assignment_with_cap, Assignment};
use crate::constraints::{composition_count, compositions, ConstraintFamily, DEFAULT_ENUMERATION_CAP};
use crate::coreset::{build_movement_coreset, Coreset};
use crate::error::{Error, Result};
use crate::geometry::{CenterSet, MetricConfig, Point, PointSet, Provenance};
use crate::stream::{process_stream, StreamConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InabaParams {
    /// Draws per sample (`m_s`).
    pub sample_size: usize,
    /// Failure probability `delta`; only the statistical check uses it.
    pub failure_prob: f64,
    pub seed: u64,
}

/// Draws `m_s` entries independently with probability proportional to
/// weight; returns the drawn locations and their unweighted mean.
pub fn inaba_sample(points: &PointSet, params: &InabaParams) -> Result<(Vec<Point>, Point)> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if params.sample_size == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    if !(params.failure_prob > 0.0 && params.failure_prob <= 1.0) {
        return Err(Error::invalid("failure probability must lie in (0, 1]"));
    }
    let index = WeightedIndex::new(points.iter().map(|e| e.weight))
        .map_err(|e| Error::invalid(format!("weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let drawn: Vec<Point> = (0..params.sample_size)
        .map(|_| points.entries()[index.sample(&mut rng)].point.clone())
        .collect();
    let d = points.dim();
    let inv = 1.0 / drawn.len() as f64;
    let mean = Point::from_vec((0..d).map(|t| drawn.iter().map(|p| p.coords()[t]).sum::<f64>() * inv).collect());
    Ok((drawn, mean))
}

/// Sample size per cluster for accuracy `eps`.
pub fn samples_per_cluster(eps: f64) -> usize {
    (2.0 / eps - 1e-9).ceil().max(1.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    /// Largest number of candidate center sets to evaluate.
    pub cap: u128,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            cap: DEFAULT_ENUMERATION_CAP,
            jobs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    /// One center per cluster of the family, outlier slots first.
    pub centers: CenterSet,
    /// Optimal assignment of the evaluated input to `centers`.
    pub assignment: Assignment,
    /// Objective on the summary the candidates were scored on.
    pub coreset_cost: f64,
    /// Objective on the original input, after transfer.
    pub original_cost: Option<f64>,
    /// Proven worst-case ratio to the optimum of the evaluated input.
    pub certified_factor: f64,
    pub candidates_examined: u64,
    pub coreset_size: usize,
}

fn multiset_count(items: u128, k: usize) -> u128 {
    // C(items + k - 1, k)
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = match acc.checked_mul(items + i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn tuple_count(items: u128, k: usize, symmetric: bool) -> u128 {
    if symmetric {
        multiset_count(items, k)
    } else {
        items.saturating_pow(k as u32)
    }
}

/// Candidate center sets scanned for `locations` distinct summary locations.
pub fn candidate_count(locations: usize, k: usize, eps: f64, symmetric: bool, cfg: MetricConfig) -> u128 {
    let items = if cfg.power() == 1 {
        locations as u128
    } else {
        composition_count(samples_per_cluster(eps) as u64, locations)
    };
    tuple_count(items, k, symmetric)
}

/// Smallest `eps` whose candidate count fits under `cap`, if any.
pub fn smallest_feasible_eps(locations: usize, k: usize, symmetric: bool, cap: u128) -> Option<f64> {
    let mut q = 1usize;
    if tuple_count(composition_count(1, locations), k, symmetric) > cap {
        return None;
    }
    while tuple_count(composition_count(q as u64 + 1, locations), k, symmetric) <= cap {
        q += 1;
        if q > 10_000 {
            break;
        }
    }
    Some(2.0 / q as f64)
}

fn distinct_locations(points: &PointSet) -> Vec<Point> {
    let mut locs: Vec<Point> = points.iter().map(|e| e.point.clone()).collect();
    locs.sort_by(|a, b| a.total_cmp(b));
    locs.dedup_by(|a, b| a.coords() == b.coords());
    locs
}

fn cap_error(count: u128, cap: u128, locations: usize, k: usize, symmetric: bool, cfg: MetricConfig) -> Error {
    let hint = if cfg.power() == 1 {
        "shrink the summary".to_string()
    } else {
        match smallest_feasible_eps(locations, k, symmetric, cap) {
            Some(e) => format!("smallest feasible eps for this summary is {e:.4}; raise eps or shrink the summary"),
            None => "no eps fits; shrink the summary".to_string(),
        }
    };
    Error::CapExceeded { count, cap, hint }
}

/// Centroids of every `ceil(2/eps)`-multiset of distinct locations of `points`,
/// deduplicated by exact coordinates and sorted.
pub fn candidate_centroids(points: &PointSet, eps: f64, cap: u128) -> Result<Vec<Point>> {
    let locs = distinct_locations(points);
    let q = samples_per_cluster(eps);
    let count = composition_count(q as u64, locs.len());
    if count > cap {
        return Err(Error::CapExceeded {
            count,
            cap,
            hint: "too many sample multisets; raise eps or shrink the summary".into(),
        });
    }
    let d = points.dim();
    let inv = 1.0 / q as f64;
    let mut out: Vec<Point> = compositions(q as u64, locs.len())
        .into_iter()
        .map(|mult| {
            let mut c = vec![0.0; d];
            for (loc, &times) in locs.iter().zip(&mult) {
                for (acc, &x) in c.iter_mut().zip(loc.coords()) {
                    *acc += times as f64 * x;
                }
            }
            Point::from_vec(c.into_iter().map(|v| v * inv).collect())
        })
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup_by(|a, b| a.coords() == b.coords());
    Ok(out)
}

/// Index tuples over `items` choices: nondecreasing when `symmetric`,
/// otherwise all of them, in lexicographic order and flattened.
fn index_tuples(items: usize, k: usize, symmetric: bool) -> Vec<u32> {
    let mut out = Vec::new();
    if items == 0 {
        return out;
    }
    let mut cur = vec![0u32; k];
    loop {
        out.extend_from_slice(&cur);
        let mut j = k;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            if (cur[j] as usize) + 1 < items {
                cur[j] += 1;
                let v = if symmetric { cur[j] } else { 0 };
                for t in cur.iter_mut().skip(j + 1) {
                    *t = v;
                }
                break;
            }
        }
    }
}

/// Every candidate center set for `k` clusters.
pub fn candidate_centers(points: &PointSet, k: usize, eps: f64, cap: u128) -> Result<Vec<CenterSet>> {
    let cents = candidate_centroids(points, eps, cap)?;
    let count = tuple_count(cents.len() as u128, k, true);
    if count > cap {
        return Err(cap_error(count, cap, distinct_locations(points).len(), k, true, MetricConfig::K_MEANS));
    }
    index_tuples(cents.len(), k, true)
        .chunks(k)
        .map(|idx| {
            CenterSet::with_provenance(
                idx.iter().map(|&i| cents[i as usize].clone()).collect(),
                Provenance::SampleCentroids,
            )
        })
        .collect()
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Scores every candidate center set on `points` and returns the cheapest,
/// ties going to the lexicographically smallest centers. `family` counts
/// outlier slots; candidates cover only the regular clusters.
pub fn ptas_solve(
    points: &PointSet,
    family: &ConstraintFamily,
    eps: f64,
    cfg: MetricConfig,
    options: &SolveOptions,
) -> Result<SolveResult> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if eps.is_nan() || eps <= 0.0 || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let free = family.free_slots();
    let k = family.clusters() - free;
    if k == 0 {
        return Err(Error::invalid("the family has no regular cluster"));
    }
    let symmetric = family.is_row_symmetric();
    let locations = distinct_locations(points);
    let upfront = candidate_count(locations.len(), k, eps, symmetric, cfg);
    if upfront > options.cap {
        return Err(cap_error(upfront, options.cap, locations.len(), k, symmetric, cfg));
    }
    let (items, provenance, factor) = match cfg.power() {
        2 => (candidate_centroids(points, eps, options.cap)?, Provenance::SampleCentroids, 1.0 + eps),
        1 => (locations.clone(), Provenance::Discrete, 2.0),
        m => return Err(Error::invalid(format!("solving supports m = 1 and m = 2, got m = {m}"))),
    };
    let count = tuple_count(items.len() as u128, k, symmetric);
    if count > options.cap {
        return Err(cap_error(count, options.cap, locations.len(), k, symmetric, cfg));
    }
    let tuples = index_tuples(items.len(), k, symmetric);
    let placeholder = points.entries()[0].point.clone();
    let centers_of = |idx: &[u32]| -> CenterSet {
        let mut c = vec![placeholder.clone(); free];
        c.extend(idx.iter().map(|&i| items[i as usize].clone()));
        CenterSet::with_provenance(c, provenance.clone()).expect("nonempty, equal dimensions")
    };
    // infeasibility does not depend on the centers, so probe once
    let first = optimal_assignment_with_cap(points, &centers_of(&tuples[..k]), family, cfg, options.cap)?;
    let (best_cost, best_at) = with_pool(options.jobs, || {
        tuples
            .par_chunks(k)
            .enumerate()
            .map(|(t, idx)| {
                let cost = if t == 0 {
                    first.objective
                } else {
                    optimal_assignment_with_cap(points, &centers_of(idx), family, cfg, options.cap)
                        .map_or(f64::INFINITY, |a| a.objective)
                };
                (cost, t)
            })
            .reduce(
                || (f64::INFINITY, usize::MAX),
                |a, b| match a.0.total_cmp(&b.0) {
                    std::cmp::Ordering::Less => a,
                    std::cmp::Ordering::Greater => b,
                    std::cmp::Ordering::Equal => {
                        if a.1 <= b.1 {
                            a
                        } else {
                            b
                        }
                    }
                },
            )
    })?;
    let centers = centers_of(&tuples[best_at * k..(best_at + 1) * k]);
    let assignment = optimal_assignment_with_cap(points, &centers, family, cfg, options.cap)?;
    debug_assert_eq!(assignment.objective, best_cost);
    let (centers, assignment) = settle_outliers(points, centers, assignment, free);
    Ok(SolveResult {
        centers,
        coreset_cost: assignment.objective,
        assignment,
        original_cost: None,
        certified_factor: factor,
        candidates_examined: count as u64,
        coreset_size: points.len(),
    })
}

/// Moves each outlier slot's center onto the single point it holds, so the
/// raw cost of the assignment equals its objective.
fn settle_outliers(points: &PointSet, centers: CenterSet, mut assignment: Assignment, free: usize) -> (CenterSet, Assignment) {
    if free == 0 {
        return (centers, assignment);
    }
    let provenance = centers.provenance.clone();
    let mut pts = centers.into_points();
    for f in &assignment.flows {
        if f.center < free {
            pts[f.center] = points.entries()[f.entry].point.clone();
        }
    }
    assignment.total_cost = assignment.objective;
    (
        CenterSet::with_provenance(pts, provenance).expect("same shape"),
        assignment,
    )
}

/// How the original input reaches the summary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ingestion {
    Offline,
    Streamed { block_size: usize },
}

/// Summarizes `points` at `eps / 3`, solves the summary at `eps / 3`, and
/// re-evaluates the chosen centers on `points`.
#[allow(clippy::too_many_arguments)]
pub fn solve_with_transfer(
    points: &PointSet,
    family: &ConstraintFamily,
    eps: f64,
    cfg: MetricConfig,
    ingestion: Ingestion,
    seed: u64,
    options: &SolveOptions,
) -> Result<SolveResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let third = eps / 3.0;
    let k = family.clusters() - family.free_slots();
    let coreset: Coreset = match ingestion {
        Ingestion::Offline => build_movement_coreset(points, k, third, cfg, seed)?,
        Ingestion::Streamed { block_size } => {
            let config = StreamConfig::new(block_size.max(k), k, third, cfg, seed)?;
            let mut summary = process_stream(points.iter().cloned().map(Ok), config)?;
            summary.points.declare_colors(points.color_count());
            summary
        }
    };
    let on_summary = ptas_solve(&coreset.points, family, third, cfg, options).map_err(|e| match e {
        // restate the hint in terms of the caller's eps
        Error::CapExceeded { count, cap, .. } if cfg.power() == 2 => {
            let locations = coreset.points.distinct_locations();
            let hint = match smallest_feasible_eps(locations, k, family.is_row_symmetric(), cap)
                .map(|e| 3.0 * e)
                .filter(|&e| e < 1.0)
            {
                Some(e) => format!(
                    "smallest feasible eps for this summary is {e:.4}; raise eps, solve directly or shrink the input"
                ),
                None => "no eps below 1 fits this summary; solve directly or shrink the input".to_string(),
            };
            Error::CapExceeded { count, cap, hint }
        }
        other => other,
    })?;
    let assignment = optimal_assignment_with_cap(points, &on_summary.centers, family, cfg, options.cap)?;
    let free = family.free_slots();
    let (centers, assignment) = settle_outliers(points, on_summary.centers, assignment, free);
    // cost(P) <= wcost(S) / (1 - e) <= alpha * OPT(S) / (1 - e) <= alpha (1 + e) OPT(P) / (1 - e)
    let alpha = on_summary.certified_factor;
    Ok(SolveResult {
        centers,
        original_cost: Some(assignment.objective),
        assignment,
        coreset_cost: on_summary.coreset_cost,
        certified_factor: alpha * (1.0 + third) / (1.0 - third),
        candidates_examined: on_summary.candidates_examined,
        coreset_size: coreset.len(),
    })
}
