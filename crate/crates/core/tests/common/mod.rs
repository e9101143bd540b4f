//! Instance generators and small reference routines shared by the
//! integration tests.
#![allow(dead_code)]

use coreset_core::constraints::{
    encode_chromatic, encode_l_diversity, encode_lower_bounds, encode_outliers, encode_upper_bounds,
    ConstraintFamily, LowerBoundMode,
};
use coreset_core::geometry::{CenterSet, Color, MetricConfig, Point, PointSet, WeightedColoredPoint};
use coreset_core::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn pt(c: &[f64]) -> Point {
    Point::new(c.to_vec()).unwrap()
}

pub fn unit_set(dim: usize, pts: &[(Vec<f64>, Color)]) -> PointSet {
    let entries = pts
        .iter()
        .map(|(c, col)| WeightedColoredPoint::new(pt(c), 1, *col))
        .collect();
    PointSet::from_entries(dim, entries).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Point {
    pt(&(0..d).map(|_| rng.random_range(0.0..scale)).collect::<Vec<_>>())
}

pub fn random_centers(rng: &mut ChaCha8Rng, k: usize, d: usize, lo: f64, hi: f64) -> CenterSet {
    CenterSet::new((0..k).map(|_| pt(&(0..d).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>())).collect())
        .unwrap()
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` points drawn around 1-3 Gaussian blobs in `[0, 10]^d`.
pub fn blobs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let hubs: Vec<Vec<f64>> = (0..rng.random_range(1..=3))
        .map(|_| (0..d).map(|_| rng.random_range(0.0..10.0)).collect())
        .collect();
    let sd = rng.random_range(0.2..2.0);
    (0..n)
        .map(|_| {
            let h = &hubs[rng.random_range(0..hubs.len())];
            h.iter().map(|&x| x + sd * gaussian(rng)).collect()
        })
        .collect()
}

/// Colors `0, 1, 0, 1, ...` shuffled, so both colors have mass `n / 2`.
pub fn balanced_colors(rng: &mut ChaCha8Rng, n: usize) -> Vec<Color> {
    let mut c: Vec<Color> = (0..n).map(|i| (i % 2) as Color).collect();
    for i in (1..n).rev() {
        c.swap(i, rng.random_range(0..=i));
    }
    c
}

pub fn bounding_box(p: &PointSet) -> (f64, f64) {
    let all = p.iter().flat_map(|e| e.point.coords().iter().copied());
    all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// Plain weighted Lloyd iterations from a farthest-first start.
pub fn lloyd(p: &PointSet, k: usize, rounds: usize) -> CenterSet {
    let d = p.dim();
    let mut centers: Vec<Vec<f64>> = vec![p.entries()[0].point.coords().to_vec()];
    while centers.len() < k {
        let far = p
            .iter()
            .max_by(|a, b| nearest_sq(&centers, a.point.coords()).total_cmp(&nearest_sq(&centers, b.point.coords())))
            .unwrap();
        centers.push(far.point.coords().to_vec());
    }
    for _ in 0..rounds {
        let mut sums = vec![vec![0.0; d]; k];
        let mut mass = vec![0.0; k];
        for e in p.iter() {
            let c = nearest_index(&centers, e.point.coords());
            for (s, &x) in sums[c].iter_mut().zip(e.point.coords()) {
                *s += e.weight as f64 * x;
            }
            mass[c] += e.weight as f64;
        }
        for c in 0..k {
            if mass[c] > 0.0 {
                centers[c] = sums[c].iter().map(|s| s / mass[c]).collect();
            }
        }
    }
    CenterSet::new(centers.iter().map(|c| pt(c)).collect()).unwrap()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_sq(centers: &[Vec<f64>], x: &[f64]) -> f64 {
    centers.iter().map(|c| sq(c, x)).fold(f64::INFINITY, f64::min)
}

fn nearest_index(centers: &[Vec<f64>], x: &[f64]) -> usize {
    (0..centers.len()).min_by(|&a, &b| sq(&centers[a], x).total_cmp(&sq(&centers[b], x))).unwrap()
}

/// Reference cost: `sum w * min_c |p - c|^m`, written independently of the library.
pub fn reference_cost(p: &PointSet, c: &CenterSet, m: u32) -> f64 {
    p.iter()
        .map(|e| {
            let best = c.iter().map(|x| sq(x.coords(), e.point.coords()).sqrt()).fold(f64::INFINITY, f64::min);
            e.weight as f64 * best.powi(m as i32)
        })
        .sum()
}

pub fn cfg(m: u32) -> MetricConfig {
    MetricConfig::new(m).unwrap()
}

/// The six family kinds exercised by the acceptance checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Unconstrained,
    LowerStrict,
    Upper,
    Outliers,
    Chromatic,
    LDiversity,
}

pub const KINDS: [Kind; 6] = [
    Kind::Unconstrained,
    Kind::LowerStrict,
    Kind::Upper,
    Kind::Outliers,
    Kind::Chromatic,
    Kind::LDiversity,
];

/// Family of `kind` with `k` regular clusters over `p`'s masses. Lower
/// bounds are `lower` per cluster, upper bounds `upper`; outliers add one
/// free slot unless `outlier_in_k`, in which case one of the `k` clusters
/// becomes the free slot.
pub fn family(kind: Kind, k: usize, p: &PointSet, lower: u64, upper: u64, outlier_in_k: bool) -> Result<ConstraintFamily> {
    let n = p.total_weight();
    let masses = p.color_masses();
    match kind {
        Kind::Unconstrained => ConstraintFamily::unconstrained(k, masses),
        Kind::LowerStrict => encode_lower_bounds(&vec![lower; k], n, LowerBoundMode::Strict),
        Kind::Upper => encode_upper_bounds(&vec![upper; k], n),
        Kind::Outliers if outlier_in_k => encode_outliers(k - 1, 1, n),
        Kind::Outliers => encode_outliers(k, 1, n),
        Kind::Chromatic => encode_chromatic(k, masses),
        Kind::LDiversity => encode_l_diversity(k, 2, masses),
    }
}
