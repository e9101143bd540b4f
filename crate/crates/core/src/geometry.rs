//! Points, weighted colored multisets, distances and the clustering cost.
//!
//! A [`PointSet`] is a multiset of [`WeightedColoredPoint`]s in `R^d`. An entry
//! of weight `w` stands for `w` coincident unit points of the same color, so
//! every cost below is linear in the weights.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};

/// A location in `R^d` with finite coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Point(coords))
    }

    /// Builds a point without validation. Callers guarantee `d >= 1` and
    /// finite coordinates (e.g. means of validated points).
    pub(crate) fn from_vec(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        squared_distance(&self.0, &other.0)
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// Lexicographic order on coordinates using IEEE total ordering.
    pub fn total_cmp(&self, other: &Point) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }

    /// Bit pattern of the coordinates, used for exact-equality hashing.
    pub(crate) fn bits(&self) -> Vec<u64> {
        self.0.iter().map(|c| c.to_bits()).collect()
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Selects the cost power `m`: 1 for Euclidean k-median, 2 for k-means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MetricConfig {
    power: u32,
}

impl MetricConfig {
    pub const K_MEDIAN: MetricConfig = MetricConfig { power: 1 };
    pub const K_MEANS: MetricConfig = MetricConfig { power: 2 };

    /// Problem configuration; only `m = 1` and `m = 2` are accepted.
    pub fn new(power: u32) -> Result<Self> {
        match power {
            1 | 2 => Ok(MetricConfig { power }),
            _ => Err(Error::invalid(format!("power m must be 1 or 2, got {power}"))),
        }
    }

    /// Any power `m >= 1`. Only the generic cost functions accept this; the
    /// coreset and solver code paths assume `m` in {1, 2}.
    pub fn general(power: u32) -> Result<Self> {
        if power == 0 {
            return Err(Error::invalid("power m must be >= 1"));
        }
        Ok(MetricConfig { power })
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    /// `dist^m` from a squared distance.
    #[inline]
    pub fn cost_from_sq(&self, dist_sq: f64) -> f64 {
        match self.power {
            1 => dist_sq.sqrt(),
            2 => dist_sq,
            p => dist_sq.sqrt().powi(p as i32),
        }
    }

    #[inline]
    pub fn cost(&self, a: &Point, b: &Point) -> f64 {
        self.cost_from_sq(a.dist_sq(b))
    }
}

pub type Color = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedColoredPoint {
    pub point: Point,
    pub weight: u64,
    pub color: Color,
}

impl WeightedColoredPoint {
    pub fn new(point: Point, weight: u64, color: Color) -> Self {
        WeightedColoredPoint {
            point,
            weight,
            color,
        }
    }

    pub fn unit(point: Point) -> Self {
        Self::new(point, 1, 0)
    }
}

/// Weighted colored multiset with tracked totals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    entries: Vec<WeightedColoredPoint>,
    color_masses: Vec<u64>,
    total_weight: u64,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet {
            dim,
            entries: Vec::new(),
            color_masses: vec![0],
            total_weight: 0,
        }
    }

    /// Empty set that declares `colors` colors up front (per-color masses may be zero).
    pub fn with_colors(dim: usize, colors: usize) -> Self {
        PointSet {
            dim,
            entries: Vec::new(),
            color_masses: vec![0; colors.max(1)],
            total_weight: 0,
        }
    }

    /// Unit-weight, single-color set.
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyInput)?.dim();
        let mut set = PointSet::new(dim);
        for p in points {
            set.push(WeightedColoredPoint::unit(p))?;
        }
        Ok(set)
    }

    pub fn from_entries(dim: usize, entries: Vec<WeightedColoredPoint>) -> Result<Self> {
        let mut set = PointSet::new(dim);
        for e in entries {
            set.push(e)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, entry: WeightedColoredPoint) -> Result<()> {
        if entry.point.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: entry.point.dim(),
            });
        }
        if entry.weight == 0 {
            return Err(Error::invalid("weights must be positive integers"));
        }
        let c = entry.color as usize;
        if c >= self.color_masses.len() {
            self.color_masses.resize(c + 1, 0);
        }
        self.color_masses[c] += entry.weight;
        self.total_weight += entry.weight;
        self.entries.push(entry);
        Ok(())
    }

    /// Raises the declared color count to at least `colors`.
    pub fn declare_colors(&mut self, colors: usize) {
        if colors > self.color_masses.len() {
            self.color_masses.resize(colors, 0);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[WeightedColoredPoint] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<WeightedColoredPoint> {
        self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, WeightedColoredPoint> {
        self.entries.iter()
    }

    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn color_count(&self) -> usize {
        self.color_masses.len()
    }

    pub fn color_masses(&self) -> &[u64] {
        &self.color_masses
    }

    /// Merges entries sharing the exact same location and color, summing
    /// their weights. Order of first occurrence is kept.
    pub fn merged(&self) -> PointSet {
        let mut index: HashMap<(Vec<u64>, Color), usize> = HashMap::new();
        let mut out = PointSet::with_colors(self.dim, self.color_count());
        for e in &self.entries {
            let key = (e.point.bits(), e.color);
            match index.get(&key) {
                Some(&i) => {
                    out.entries[i].weight += e.weight;
                    out.color_masses[e.color as usize] += e.weight;
                    out.total_weight += e.weight;
                }
                None => {
                    index.insert(key, out.entries.len());
                    // cannot fail: same dim, positive weight
                    out.push(e.clone()).expect("valid entry");
                }
            }
        }
        out
    }

    /// Number of distinct coordinate vectors, ignoring color.
    pub fn distinct_locations(&self) -> usize {
        let mut seen: Vec<Vec<u64>> = self.entries.iter().map(|e| e.point.bits()).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// Where a center set came from.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Provenance {
    #[default]
    Given,
    /// D^m seeding.
    Seeding,
    /// Centroids of sampled multisets `R_1..R_k`.
    SampleCentroids,
    /// Centers picked among summary locations.
    Discrete,
    /// Per-part optimal centers of a brute-force witness partition.
    OracleWitness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CenterSet {
    centers: Vec<Point>,
    pub provenance: Provenance,
}

impl CenterSet {
    pub fn new(centers: Vec<Point>) -> Result<Self> {
        Self::with_provenance(centers, Provenance::Given)
    }

    pub fn with_provenance(centers: Vec<Point>, provenance: Provenance) -> Result<Self> {
        let dim = centers.first().ok_or(Error::EmptyCenters)?.dim();
        if let Some(bad) = centers.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(CenterSet {
            centers,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.centers.iter()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.centers
    }

    /// Index and squared distance of the nearest center; ties go to the lowest index.
    pub fn nearest(&self, p: &Point) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = p.dist_sq(c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// `sum_p w(p) * min_c dist(p, c)^m` over the weighted entries of `points`.
pub fn clustering_cost(points: &PointSet, centers: &CenterSet, cfg: MetricConfig) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::EmptyCenters);
    }
    centers.check_dim(points.dim())?;
    Ok(points
        .iter()
        .map(|e| e.weight as f64 * cfg.cost_from_sq(centers.nearest(&e.point).1))
        .sum())
}

/// `(1 / w(S)) * sum_s w(s) * s`.
pub fn weighted_mean(points: &PointSet) -> Result<Point> {
    if points.total_weight() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(weighted_mean_of(
        points.iter().map(|e| (e.point.coords(), e.weight)),
        points.dim(),
    ))
}

pub(crate) fn weighted_mean_of<'a>(
    items: impl Iterator<Item = (&'a [f64], u64)>,
    dim: usize,
) -> Point {
    let mut sum = vec![0.0; dim];
    let mut total = 0u64;
    for (coords, w) in items {
        for (s, c) in sum.iter_mut().zip(coords) {
            *s += w as f64 * c;
        }
        total += w;
    }
    for s in &mut sum {
        *s /= total as f64;
    }
    Point::from_vec(sum)
}

/// Replaces every entry of weight `w` by `w` unit copies.
pub fn expand(points: &PointSet) -> PointSet {
    let mut out = PointSet::with_colors(points.dim(), points.color_count());
    for e in points.iter() {
        for _ in 0..e.weight {
            out.push(WeightedColoredPoint::new(e.point.clone(), 1, e.color))
                .expect("valid entry");
        }
    }
    out
}

/// Maximum over minimum pairwise distance among distinct locations.
pub fn spread(points: &PointSet) -> Result<f64> {
    let mut locs: Vec<&Point> = points.iter().map(|e| &e.point).collect();
    locs.sort_by(|a, b| a.total_cmp(b));
    locs.dedup_by(|a, b| a.coords() == b.coords());
    if locs.len() < 2 {
        return Err(Error::Degenerate(
            "spread is undefined when all points coincide".into(),
        ));
    }
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    for i in 0..locs.len() {
        for j in i + 1..locs.len() {
            let d = locs[i].dist(locs[j]);
            min = min.min(d);
            max = max.max(d);
        }
    }
    Ok(max / min)
}
