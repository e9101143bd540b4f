//! Size and color constraints.
//!
//! A color constraint for a colored input is a set of `k x l` integer
//! matrices whose column sums equal the per-color masses; a clustering
//! satisfies it when its realized matrix (points of color `j` in cluster `i`)
//! is one of them. Size constraints are the single-color case and act on the
//! row sums of the realized matrix, whatever the input's coloring.
//!
//! Families are kept symbolic; the admitted matrix set is only materialized by
//! [`ConstraintFamily::enumerate`], under a cap.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CenterSet, PointSet, WeightedColoredPoint};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl ColorMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ColorMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("matrix rows must be nonempty and equally long"));
        }
        Ok(ColorMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// A `k x 1` matrix from a cluster-size vector.
    pub fn from_sizes(sizes: &[u64]) -> Self {
        ColorMatrix {
            rows: sizes.len(),
            cols: 1,
            data: sizes.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

impl fmt::Display for ColorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "[")?;
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBoundMode {
    /// Every cluster holds at least its bound.
    Strict,
    /// A cluster is either empty (its center is not opened) or meets its bound.
    OpenCenters,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CannotLinkColoring {
    /// Greedy coloring of the conflict graph; fewer colors, may exclude some
    /// link-respecting clusterings.
    #[default]
    Greedy,
    /// Every linked point gets its own color; exact.
    Distinct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FamilyKind {
    Unconstrained,
    /// Sorted, deduplicated admitted matrices.
    Explicit { matrices: Vec<ColorMatrix> },
    LowerBounds { bounds: Vec<u64>, mode: LowerBoundMode },
    UpperBounds { bounds: Vec<u64> },
    /// The first `z` clusters hold exactly one point each and cost nothing.
    Outliers { z: usize },
    Chromatic,
    LDiversity { l: u64 },
    PerColorCaps { caps: ColorMatrix },
    /// The first `linked_colors` columns each have at most one nonzero entry.
    MustLink { linked_colors: usize },
    /// No row may have both colors of a pair nonzero.
    CannotLink { conflicts: Vec<(usize, usize)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFamily {
    pub kind: FamilyKind,
    clusters: usize,
    masses: Vec<u64>,
}

fn binomial(n: u128, r: u128) -> u128 {
    let r = r.min(n.saturating_sub(r));
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of compositions of `n` into `k` nonnegative parts.
pub(crate) fn composition_count(n: u64, k: usize) -> u128 {
    if k == 0 {
        return u128::from(n == 0);
    }
    binomial(n as u128 + k as u128 - 1, k as u128 - 1)
}

/// All compositions of `n` into `k` nonnegative parts, lexicographically.
pub(crate) fn compositions(n: u64, k: usize) -> Vec<Vec<u64>> {
    fn rec(rest: u64, k: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() + 1 == k {
            cur.push(rest);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 0..=rest {
            cur.push(v);
            rec(rest - v, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

impl ConstraintFamily {
    fn new(kind: FamilyKind, clusters: usize, masses: Vec<u64>) -> Result<Self> {
        if clusters == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if masses.is_empty() {
            return Err(Error::invalid("at least one color mass is required"));
        }
        Ok(ConstraintFamily {
            kind,
            clusters,
            masses,
        })
    }

    pub fn unconstrained(k: usize, masses: &[u64]) -> Result<Self> {
        Self::new(FamilyKind::Unconstrained, k, masses.to_vec())
    }

    /// Number of clusters (centers) the family is stated for.
    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn masses(&self) -> &[u64] {
        &self.masses
    }

    pub fn total_mass(&self) -> u64 {
        self.masses.iter().sum()
    }

    /// Size families constrain row sums only and accept any coloring.
    pub fn is_size_family(&self) -> bool {
        match &self.kind {
            FamilyKind::Unconstrained
            | FamilyKind::LowerBounds { .. }
            | FamilyKind::UpperBounds { .. }
            | FamilyKind::Outliers { .. } => true,
            FamilyKind::Explicit { .. } => self.masses.len() == 1,
            _ => false,
        }
    }

    /// Leading clusters whose assignment cost is not counted.
    pub fn free_slots(&self) -> usize {
        match self.kind {
            FamilyKind::Outliers { z } => z,
            _ => 0,
        }
    }

    /// Checks that the family applies to an input with these per-color masses
    /// and this many centers.
    pub fn check_instance(&self, masses: &[u64], centers: usize) -> Result<()> {
        if centers != self.clusters {
            return Err(Error::ArityMismatch(format!(
                "family expects {} centers, got {centers}",
                self.clusters
            )));
        }
        let total: u64 = masses.iter().sum();
        if self.is_size_family() {
            if total != self.total_mass() {
                return Err(Error::ArityMismatch(format!(
                    "family expects total mass {}, input has {total}",
                    self.total_mass()
                )));
            }
            return Ok(());
        }
        let trim = |m: &[u64]| {
            let end = m.iter().rposition(|&v| v > 0).map_or(0, |p| p + 1);
            m[..end].to_vec()
        };
        if trim(masses) != trim(&self.masses) {
            return Err(Error::ArityMismatch(format!(
                "family expects color masses {:?}, input has {:?}",
                self.masses, masses
            )));
        }
        Ok(())
    }

    /// Exact membership test for a realized `k x l` matrix.
    pub fn admits(&self, m: &ColorMatrix) -> bool {
        if m.rows() != self.clusters {
            return false;
        }
        let rows = m.row_sums();
        if self.is_size_family() {
            if rows.iter().sum::<u64>() != self.total_mass() {
                return false;
            }
        } else {
            let cols = m.col_sums();
            let n = cols.len().max(self.masses.len());
            for j in 0..n {
                let have = cols.get(j).copied().unwrap_or(0);
                let want = self.masses.get(j).copied().unwrap_or(0);
                if have != want {
                    return false;
                }
            }
        }
        let k = self.clusters;
        match &self.kind {
            FamilyKind::Unconstrained => true,
            FamilyKind::Explicit { matrices } => {
                if self.is_size_family() {
                    matrices
                        .binary_search(&ColorMatrix::from_sizes(&rows))
                        .is_ok()
                } else {
                    matrices.binary_search(m).is_ok()
                }
            }
            FamilyKind::LowerBounds { bounds, mode } => match mode {
                LowerBoundMode::Strict => rows.iter().zip(bounds).all(|(r, b)| r >= b),
                LowerBoundMode::OpenCenters => {
                    rows.iter().zip(bounds).all(|(r, b)| *r == 0 || r >= b)
                }
            },
            FamilyKind::UpperBounds { bounds } => rows.iter().zip(bounds).all(|(r, b)| r <= b),
            FamilyKind::Outliers { z } => rows[..*z].iter().all(|&r| r == 1),
            FamilyKind::Chromatic => (0..k).all(|i| m.row(i).iter().all(|&v| v <= 1)),
            FamilyKind::LDiversity { l } => (0..k).all(|i| {
                let s = rows[i];
                m.row(i).iter().all(|&v| v * l <= s)
            }),
            FamilyKind::PerColorCaps { caps } => (0..k).all(|i| {
                (0..m.cols()).all(|j| m.get(i, j) <= if j < caps.cols() { caps.get(i, j) } else { 0 })
            }),
            FamilyKind::MustLink { linked_colors } => (0..(*linked_colors).min(m.cols()))
                .all(|j| (0..k).filter(|&i| m.get(i, j) > 0).count() <= 1),
            FamilyKind::CannotLink { conflicts } => conflicts.iter().all(|&(a, b)| {
                a >= m.cols()
                    || b >= m.cols()
                    || (0..k).all(|i| m.get(i, a) == 0 || m.get(i, b) == 0)
            }),
        }
    }

    /// Upper bound on the number of matrices [`ConstraintFamily::enumerate`] scans.
    pub fn candidate_count(&self) -> u128 {
        if let FamilyKind::Explicit { matrices } = &self.kind {
            return matrices.len() as u128;
        }
        if self.is_size_family() {
            return composition_count(self.total_mass(), self.clusters);
        }
        self.masses
            .iter()
            .map(|&m| composition_count(m, self.clusters))
            .fold(1u128, |a, b| a.saturating_mul(b))
    }

    /// Every admitted matrix, once each, in lexicographic order. Size
    /// families yield `k x 1` size vectors.
    pub fn enumerate(&self, cap: u128) -> Result<Vec<ColorMatrix>> {
        let count = self.candidate_count();
        if count > cap {
            return Err(Error::CapExceeded {
                count,
                cap,
                hint: "family too large to enumerate; use a smaller instance".into(),
            });
        }
        if let FamilyKind::Explicit { matrices } = &self.kind {
            return Ok(matrices.clone());
        }
        let k = self.clusters;
        if self.is_size_family() {
            return Ok(compositions(self.total_mass(), k)
                .into_iter()
                .map(|c| ColorMatrix::from_sizes(&c))
                .filter(|m| self.admits(m))
                .collect());
        }
        let columns: Vec<Vec<Vec<u64>>> =
            self.masses.iter().map(|&m| compositions(m, k)).collect();
        let l = columns.len();
        let mut idx = vec![0usize; l];
        let mut out = Vec::new();
        loop {
            let mut m = ColorMatrix::zeros(k, l);
            for (j, col) in columns.iter().enumerate() {
                for (i, &v) in col[idx[j]].iter().enumerate() {
                    m.set(i, j, v);
                }
            }
            if self.admits(&m) {
                out.push(m);
            }
            // odometer, last column fastest
            let mut j = l;
            loop {
                if j == 0 {
                    out.sort();
                    return Ok(out);
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < columns[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    /// True when permuting the regular (non-free) clusters maps admitted
    /// matrices to admitted matrices, so center sets may be treated as
    /// multisets.
    pub fn is_row_symmetric(&self) -> bool {
        let all_equal = |v: &[u64]| v.windows(2).all(|w| w[0] == w[1]);
        match &self.kind {
            FamilyKind::Unconstrained
            | FamilyKind::Outliers { .. }
            | FamilyKind::Chromatic
            | FamilyKind::LDiversity { .. }
            | FamilyKind::MustLink { .. }
            | FamilyKind::CannotLink { .. } => true,
            FamilyKind::LowerBounds { bounds, .. } | FamilyKind::UpperBounds { bounds } => all_equal(bounds),
            FamilyKind::PerColorCaps { caps } => (1..caps.rows()).all(|i| caps.row(i) == caps.row(0)),
            FamilyKind::Explicit { matrices } => {
                // closure under adjacent transpositions implies closure under
                // every permutation
                matrices.iter().all(|m| {
                    (1..m.rows()).all(|i| {
                        let mut swapped = m.clone();
                        for j in 0..m.cols() {
                            swapped.set(i - 1, j, m.get(i, j));
                            swapped.set(i, j, m.get(i - 1, j));
                        }
                        matrices.binary_search(&swapped).is_ok()
                    })
                })
            }
        }
    }

    /// Prepends placeholder centers for the free slots when `centers` holds
    /// only the regular clusters. Free slots cost nothing, so their location
    /// is irrelevant.
    pub fn pad_centers(&self, centers: &CenterSet) -> Result<CenterSet> {
        let free = self.free_slots();
        if free == 0 || centers.len() == self.clusters {
            return Ok(centers.clone());
        }
        if centers.len() + free != self.clusters || centers.is_empty() {
            return Err(Error::ArityMismatch(format!(
                "family expects {} centers ({} regular), got {}",
                self.clusters,
                self.clusters - free,
                centers.len()
            )));
        }
        let mut all = vec![centers.centers()[0].clone(); free];
        all.extend(centers.iter().cloned());
        CenterSet::with_provenance(all, centers.provenance.clone())
    }

    /// Per-cluster bounds `(lo, hi)` implied on cluster sizes.
    pub fn row_bounds(&self) -> Vec<(u64, u64)> {
        let n = self.total_mass();
        let k = self.clusters;
        match &self.kind {
            FamilyKind::LowerBounds {
                bounds,
                mode: LowerBoundMode::Strict,
            } => bounds.iter().map(|&b| (b, n)).collect(),
            FamilyKind::UpperBounds { bounds } => bounds.iter().map(|&b| (0, b.min(n))).collect(),
            FamilyKind::Outliers { z } => (0..k)
                .map(|i| if i < *z { (1, 1) } else { (0, n) })
                .collect(),
            FamilyKind::Chromatic => {
                let colors = self.masses.iter().filter(|&&m| m > 0).count() as u64;
                vec![(0, colors); k]
            }
            FamilyKind::PerColorCaps { caps } => {
                (0..k).map(|i| (0, caps.row(i).iter().sum::<u64>().min(n))).collect()
            }
            FamilyKind::Explicit { matrices } => (0..k)
                .map(|i| {
                    let sums = matrices.iter().map(|m| m.row(i).iter().sum::<u64>());
                    let lo = sums.clone().min().unwrap_or(0);
                    let hi = sums.max().unwrap_or(n);
                    (lo, hi)
                })
                .collect(),
            _ => vec![(0, n); k],
        }
    }
}

fn check_len(bounds: &[u64], k: usize) -> Result<()> {
    if bounds.len() != k || k == 0 {
        return Err(Error::invalid(format!(
            "expected {k} bounds, got {}",
            bounds.len()
        )));
    }
    Ok(())
}

/// `{K : l_i <= K_i <= n}` (strict) or `{K : K_i = 0 or K_i >= l_i}` (open centers).
pub fn encode_lower_bounds(bounds: &[u64], n: u64, mode: LowerBoundMode) -> Result<ConstraintFamily> {
    check_len(bounds, bounds.len())?;
    match mode {
        LowerBoundMode::Strict => {
            let need: u64 = bounds.iter().sum();
            if need > n {
                return Err(Error::Infeasible(format!(
                    "lower bounds sum to {need} but only {n} points exist"
                )));
            }
        }
        LowerBoundMode::OpenCenters => {
            if n > 0 && bounds.iter().all(|&b| b > n) {
                return Err(Error::Infeasible(format!(
                    "every lower bound exceeds the {n} available points"
                )));
            }
        }
    }
    ConstraintFamily::new(
        FamilyKind::LowerBounds {
            bounds: bounds.to_vec(),
            mode,
        },
        bounds.len(),
        vec![n],
    )
}

/// `{K : 0 <= K_i <= u_i}`.
pub fn encode_upper_bounds(bounds: &[u64], n: u64) -> Result<ConstraintFamily> {
    check_len(bounds, bounds.len())?;
    let cap: u64 = bounds.iter().sum();
    if cap < n {
        return Err(Error::Infeasible(format!(
            "upper bounds sum to {cap} but {n} points must be assigned"
        )));
    }
    ConstraintFamily::new(
        FamilyKind::UpperBounds {
            bounds: bounds.to_vec(),
        },
        bounds.len(),
        vec![n],
    )
}

/// A `(k + z)`-cluster family whose first `z` clusters are singletons.
pub fn encode_outliers(k: usize, z: usize, n: u64) -> Result<ConstraintFamily> {
    if z as u64 > n {
        return Err(Error::Infeasible(format!(
            "{z} outliers requested from {n} points"
        )));
    }
    if k == 0 && n > z as u64 {
        return Err(Error::Infeasible("no regular cluster for the inliers".into()));
    }
    ConstraintFamily::new(FamilyKind::Outliers { z }, k + z, vec![n])
}

/// 0/1 matrices: at most one point of each color per cluster.
pub fn encode_chromatic(k: usize, masses: &[u64]) -> Result<ConstraintFamily> {
    if let Some(&worst) = masses.iter().max() {
        if worst > k as u64 {
            return Err(Error::Infeasible(format!(
                "a color has {worst} points but only {k} clusters exist"
            )));
        }
    }
    ConstraintFamily::new(FamilyKind::Chromatic, k, masses.to_vec())
}

/// No color exceeds a `1/l` fraction of any nonempty cluster.
pub fn encode_l_diversity(k: usize, l: u64, masses: &[u64]) -> Result<ConstraintFamily> {
    if l == 0 {
        return Err(Error::invalid("l must be >= 1"));
    }
    ConstraintFamily::new(FamilyKind::LDiversity { l }, k, masses.to_vec())
}

pub fn encode_per_color_caps(caps: ColorMatrix, masses: &[u64]) -> Result<ConstraintFamily> {
    for (j, &mass) in masses.iter().enumerate() {
        let room: u64 = if j < caps.cols() {
            (0..caps.rows()).map(|i| caps.get(i, j)).sum()
        } else {
            0
        };
        if room < mass {
            return Err(Error::Infeasible(format!("caps for color {j} sum to {room} < mass {mass}")));
        }
    }
    let k = caps.rows();
    ConstraintFamily::new(FamilyKind::PerColorCaps { caps }, k, masses.to_vec())
}

/// Validated, sorted and deduplicated explicit family. Single-column
/// matrices over a single mass form a size family.
pub fn encode_explicit(matrices: Vec<ColorMatrix>, masses: &[u64]) -> Result<ConstraintFamily> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Infeasible("explicit family is empty".into()))?;
    let (k, l) = (first.rows(), first.cols());
    for m in &matrices {
        if m.rows() != k || m.cols() != l {
            return Err(Error::invalid("explicit matrices differ in shape"));
        }
        if m.col_sums() != masses {
            return Err(Error::invalid(format!(
                "matrix {m} has column sums {:?}, expected {masses:?}",
                m.col_sums()
            )));
        }
    }
    let set: BTreeSet<ColorMatrix> = matrices.into_iter().collect();
    ConstraintFamily::new(
        FamilyKind::Explicit {
            matrices: set.into_iter().collect(),
        },
        k,
        masses.to_vec(),
    )
}

fn check_links(links: &[(usize, usize)], n: usize) -> Result<()> {
    for &(a, b) in links {
        if a >= n || b >= n {
            return Err(Error::invalid(format!(
                "link ({a}, {b}) references a point outside 0..{n}"
            )));
        }
    }
    Ok(())
}

fn recolor(points: &PointSet, colors: &[u32], count: usize) -> PointSet {
    let mut out = PointSet::with_colors(points.dim(), count);
    for (e, &c) in points.iter().zip(colors) {
        out.push(WeightedColoredPoint::new(e.point.clone(), e.weight, c))
            .expect("valid entry");
    }
    out
}

/// Recolors `points` so each non-singleton link component gets its own color
/// (the remaining points share the last color) and returns the family that
/// keeps every component in one cluster. Link ids index `points.entries()`.
pub fn encode_must_link(
    k: usize,
    links: &[(usize, usize)],
    points: &PointSet,
) -> Result<(PointSet, ConstraintFamily)> {
    let n = points.len();
    check_links(links, n)?;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for &(a, b) in links {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut size = vec![0usize; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        size[r] += 1;
    }
    let mut color_of_root = vec![u32::MAX; n];
    let mut next = 0u32;
    for i in 0..n {
        let r = find(&mut parent, i);
        if size[r] > 1 && color_of_root[r] == u32::MAX {
            color_of_root[r] = next;
            next += 1;
        }
    }
    let linked = next as usize;
    let colors: Vec<u32> = (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if size[r] > 1 {
                color_of_root[r]
            } else {
                linked as u32
            }
        })
        .collect();
    let free_used = colors.iter().any(|&c| c as usize == linked);
    let count = (linked + usize::from(free_used)).max(1);
    let recolored = recolor(points, &colors, count);
    let masses = recolored.color_masses().to_vec();
    let family = if linked == 0 {
        ConstraintFamily::unconstrained(k, &masses)?
    } else {
        ConstraintFamily::new(FamilyKind::MustLink { linked_colors: linked }, k, masses)?
    };
    Ok((recolored, family))
}

/// Gives linked points distinct colors (unlinked points share one more
/// color) and returns the family forbidding any row that mixes two colors
/// joined by a link.
pub fn encode_cannot_link(
    k: usize,
    links: &[(usize, usize)],
    points: &PointSet,
    coloring: CannotLinkColoring,
) -> Result<(PointSet, ConstraintFamily)> {
    let n = points.len();
    check_links(links, n)?;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in links {
        if a == b {
            return Err(Error::Infeasible(format!("point {a} cannot-linked to itself")));
        }
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut color = vec![u32::MAX; n];
    let mut next = 0u32;
    for i in 0..n {
        if adj[i].is_empty() {
            continue;
        }
        color[i] = match coloring {
            CannotLinkColoring::Distinct => {
                next += 1;
                next - 1
            }
            CannotLinkColoring::Greedy => {
                let used: BTreeSet<u32> = adj[i].iter().map(|&j| color[j]).collect();
                let c = (0..).find(|c| !used.contains(c)).expect("unbounded range");
                next = next.max(c + 1);
                c
            }
        };
    }
    let linked = next;
    for c in color.iter_mut() {
        if *c == u32::MAX {
            *c = linked;
        }
    }
    let free_used = color.contains(&linked);
    let count = (linked as usize + usize::from(free_used)).max(1);
    let recolored = recolor(points, &color, count);
    let masses = recolored.color_masses().to_vec();
    let conflicts: BTreeSet<(usize, usize)> = links
        .iter()
        .map(|&(a, b)| {
            let (ca, cb) = (color[a] as usize, color[b] as usize);
            (ca.min(cb), ca.max(cb))
        })
        .collect();
    let family = if conflicts.is_empty() {
        ConstraintFamily::unconstrained(k, &masses)?
    } else {
        ConstraintFamily::new(
            FamilyKind::CannotLink {
                conflicts: conflicts.into_iter().collect(),
            },
            k,
            masses,
        )?
    };
    Ok((recolored, family))
}

/// A constraint as written in a constraint file, before it is bound to an
/// input. Files hold `key=value` pairs separated by `;` or newlines, with
/// `#` starting a comment:
///
/// ```text
/// kind=lower_bounds; bounds=4,4; mode=strict
/// kind=outliers; z=3
/// kind=per_color_caps; caps=[[1,2],[2,1]]
/// kind=explicit; matrices=[[[4],[4]],[[3],[5]]]
/// kind=must_link; links=0-1,2-3
/// ```
///
/// A single bound broadcasts to all `k` clusters.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSpec {
    Unconstrained,
    LowerBounds { bounds: Vec<u64>, mode: LowerBoundMode },
    UpperBounds { bounds: Vec<u64> },
    Outliers { z: usize },
    Chromatic,
    LDiversity { l: u64 },
    PerColorCaps { caps: Vec<Vec<u64>> },
    Explicit { matrices: Vec<Vec<Vec<u64>>> },
    MustLink { links: Vec<(usize, usize)> },
    CannotLink { links: Vec<(usize, usize)>, coloring: CannotLinkColoring },
}

fn parse_list(key: &str, v: &str) -> Result<Vec<u64>> {
    v.trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("{key}: '{}' is not a nonnegative integer", t.trim())))
        })
        .collect()
}

fn parse_links(v: &str) -> Result<Vec<(usize, usize)>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|pair| {
            let (a, b) = pair
                .split_once('-')
                .ok_or_else(|| Error::invalid(format!("links: expected a-b, got '{}'", pair.trim())))?;
            let idx = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("links: bad point index '{}'", s.trim())))
            };
            Ok((idx(a)?, idx(b)?))
        })
        .collect()
}

fn parse_json<T: serde::de::DeserializeOwned>(key: &str, v: &str) -> Result<T> {
    serde_json::from_str(v).map_err(|e| Error::invalid(format!("{key}: {e}")))
}

impl FromStr for ConstraintSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut fields: Vec<(String, String)> = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for part in line.split(';') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("expected key=value, got '{part}'")))?;
                let key = k.trim().to_ascii_lowercase();
                if fields.iter().any(|(f, _)| *f == key) {
                    return Err(Error::invalid(format!("duplicate key '{key}'")));
                }
                fields.push((key, v.trim().to_string()));
            }
        }
        let get = |key: &str| fields.iter().find(|(f, _)| f == key).map(|(_, v)| v.as_str());
        let need = |key: &str| get(key).ok_or_else(|| Error::invalid(format!("missing key '{key}'")));
        let kind = need("kind")?;
        let allowed: &[&str] = match kind {
            "unconstrained" | "chromatic" => &[],
            "lower_bounds" => &["bounds", "mode"],
            "upper_bounds" => &["bounds"],
            "outliers" => &["z"],
            "l_diversity" => &["l"],
            "per_color_caps" => &["caps"],
            "explicit" => &["matrices"],
            "must_link" => &["links"],
            "cannot_link" => &["links", "coloring"],
            other => return Err(Error::invalid(format!("unknown constraint kind '{other}'"))),
        };
        if let Some((bad, _)) = fields.iter().find(|(f, _)| f != "kind" && !allowed.contains(&f.as_str())) {
            return Err(Error::invalid(format!("key '{bad}' does not apply to kind={kind}")));
        }
        Ok(match kind {
            "unconstrained" => ConstraintSpec::Unconstrained,
            "chromatic" => ConstraintSpec::Chromatic,
            "lower_bounds" => ConstraintSpec::LowerBounds {
                bounds: parse_list("bounds", need("bounds")?)?,
                mode: match get("mode").unwrap_or("strict") {
                    "strict" => LowerBoundMode::Strict,
                    "open_centers" => LowerBoundMode::OpenCenters,
                    other => return Err(Error::invalid(format!("mode: unknown value '{other}'"))),
                },
            },
            "upper_bounds" => ConstraintSpec::UpperBounds {
                bounds: parse_list("bounds", need("bounds")?)?,
            },
            "outliers" => ConstraintSpec::Outliers {
                z: need("z")?.parse().map_err(|_| Error::invalid("z: expected a nonnegative integer"))?,
            },
            "l_diversity" => ConstraintSpec::LDiversity {
                l: need("l")?.parse().map_err(|_| Error::invalid("l: expected a positive integer"))?,
            },
            "per_color_caps" => ConstraintSpec::PerColorCaps {
                caps: parse_json("caps", need("caps")?)?,
            },
            "explicit" => ConstraintSpec::Explicit {
                matrices: parse_json("matrices", need("matrices")?)?,
            },
            "must_link" => ConstraintSpec::MustLink {
                links: parse_links(need("links")?)?,
            },
            _ => ConstraintSpec::CannotLink {
                links: parse_links(need("links")?)?,
                coloring: match get("coloring").unwrap_or("greedy") {
                    "greedy" => CannotLinkColoring::Greedy,
                    "distinct" => CannotLinkColoring::Distinct,
                    other => return Err(Error::invalid(format!("coloring: unknown value '{other}'"))),
                },
            },
        })
    }
}

fn broadcast(bounds: &[u64], k: usize) -> Result<Vec<u64>> {
    match bounds.len() {
        1 => Ok(vec![bounds[0]; k]),
        n if n == k => Ok(bounds.to_vec()),
        n => Err(Error::ArityMismatch(format!("{n} bounds given for k = {k}"))),
    }
}

impl ConstraintSpec {
    /// Binds the constraint to `k` regular clusters and an input. Link
    /// constraints recolor the input, so the (possibly recolored) points are
    /// returned alongside the family.
    pub fn instantiate(&self, k: usize, points: &PointSet) -> Result<(PointSet, ConstraintFamily)> {
        let n = points.total_weight();
        let masses = points.color_masses().to_vec();
        let family = match self {
            ConstraintSpec::Unconstrained => ConstraintFamily::unconstrained(k, &masses)?,
            ConstraintSpec::LowerBounds { bounds, mode } => encode_lower_bounds(&broadcast(bounds, k)?, n, *mode)?,
            ConstraintSpec::UpperBounds { bounds } => encode_upper_bounds(&broadcast(bounds, k)?, n)?,
            ConstraintSpec::Outliers { z } => encode_outliers(k, *z, n)?,
            ConstraintSpec::Chromatic => encode_chromatic(k, &masses)?,
            ConstraintSpec::LDiversity { l } => encode_l_diversity(k, *l, &masses)?,
            ConstraintSpec::PerColorCaps { caps } => {
                let caps = ColorMatrix::from_rows(caps)?;
                if caps.rows() != k {
                    return Err(Error::ArityMismatch(format!("caps have {} rows for k = {k}", caps.rows())));
                }
                encode_per_color_caps(caps, &masses)?
            }
            ConstraintSpec::Explicit { matrices } => {
                let matrices = matrices
                    .iter()
                    .map(|m| ColorMatrix::from_rows(m))
                    .collect::<Result<Vec<_>>>()?;
                let single = matrices.first().is_some_and(|m| m.cols() == 1);
                let family = if single {
                    encode_explicit(matrices, &[n])?
                } else {
                    encode_explicit(matrices, &masses)?
                };
                if family.clusters() != k {
                    return Err(Error::ArityMismatch(format!(
                        "matrices have {} rows for k = {k}",
                        family.clusters()
                    )));
                }
                family
            }
            ConstraintSpec::MustLink { links } => return encode_must_link(k, links, points),
            ConstraintSpec::CannotLink { links, coloring } => {
                return encode_cannot_link(k, links, points, *coloring)
            }
        };
        Ok((points.clone(), family))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn sizes(family: &ConstraintFamily) -> Vec<Vec<u64>> {
        family
            .enumerate(DEFAULT_ENUMERATION_CAP)
            .unwrap()
            .iter()
            .map(|m| m.row_sums())
            .collect()
    }

    #[test]
    fn lower_bounds_strict() {
        let f = encode_lower_bounds(&[4, 4], 8, LowerBoundMode::Strict).unwrap();
        assert!(f.admits(&ColorMatrix::from_sizes(&[4, 4])));
        assert!(!f.admits(&ColorMatrix::from_sizes(&[5, 3])));
    }

    #[test]
    fn lower_bounds_open_centers() {
        assert!(matches!(
            encode_lower_bounds(&[4, 4], 4, LowerBoundMode::Strict),
            Err(Error::Infeasible(_))
        ));
        let f = encode_lower_bounds(&[4, 4], 4, LowerBoundMode::OpenCenters).unwrap();
        assert_eq!(sizes(&f), vec![vec![0, 4], vec![4, 0]]);
    }

    #[test]
    fn lower_bounds_match_composition_filter() {
        let f = encode_lower_bounds(&[2, 3], 6, LowerBoundMode::Strict).unwrap();
        let mut want = Vec::new();
        for a in 0..=6u64 {
            let b = 6 - a;
            if a >= 2 && b >= 3 {
                want.push(vec![a, b]);
            }
        }
        assert_eq!(sizes(&f), want);
    }

    #[test]
    fn upper_bounds() {
        let f = encode_upper_bounds(&[3, 3], 3).unwrap();
        assert_eq!(sizes(&f).len(), 4);
        let f = encode_upper_bounds(&[1, 1], 2).unwrap();
        assert_eq!(sizes(&f), vec![vec![1, 1]]);
        let f = encode_upper_bounds(&[2, 2, 2], 5).unwrap();
        let mut want = Vec::new();
        for a in 0..=5u64 {
            for b in 0..=5 - a {
                let c = 5 - a - b;
                if a <= 2 && b <= 2 && c <= 2 {
                    want.push(vec![a, b, c]);
                }
            }
        }
        assert_eq!(sizes(&f), want);
        assert!(encode_upper_bounds(&[1, 1], 3).is_err());
    }

    #[test]
    fn outliers() {
        let f = encode_outliers(2, 0, 5).unwrap();
        assert_eq!(f.clusters(), 2);
        assert_eq!(sizes(&f).len(), 6);
        let f = encode_outliers(1, 2, 4).unwrap();
        assert_eq!(f.clusters(), 3);
        assert_eq!(sizes(&f), vec![vec![1, 1, 2]]);
        assert!(encode_outliers(1, 5, 3).is_err());
    }

    #[test]
    fn unconstrained_enumeration() {
        let f = ConstraintFamily::unconstrained(2, &[3]).unwrap();
        assert_eq!(sizes(&f), vec![vec![0, 3], vec![1, 2], vec![2, 1], vec![3, 0]]);
    }

    #[test]
    fn chromatic() {
        let f = encode_chromatic(1, &[1]).unwrap();
        assert_eq!(f.enumerate(100).unwrap(), vec![ColorMatrix::from_sizes(&[1])]);
        let f = encode_chromatic(2, &[2, 2]).unwrap();
        let all = f.enumerate(100).unwrap();
        assert_eq!(all, vec![ColorMatrix::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap()]);
        assert!(encode_chromatic(2, &[3]).is_err());
    }

    #[test]
    fn chromatic_matches_filter() {
        let f = encode_chromatic(3, &[2, 1]).unwrap();
        let got = f.enumerate(1000).unwrap();
        let mut want = Vec::new();
        for bits in 0..64u32 {
            let v: Vec<u64> = (0..6).map(|b| u64::from(bits >> b & 1)).collect();
            let m = ColorMatrix::from_rows(&[v[0..2].to_vec(), v[2..4].to_vec(), v[4..6].to_vec()])
                .unwrap();
            if m.col_sums() == [2, 1] {
                want.push(m);
            }
        }
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn l_diversity_rows() {
        let f = encode_l_diversity(1, 2, &[2, 1]).unwrap();
        assert!(!f.admits(&ColorMatrix::from_rows(&[vec![2, 1]]).unwrap()));
        let f = encode_l_diversity(1, 2, &[1, 1]).unwrap();
        assert!(f.admits(&ColorMatrix::from_rows(&[vec![1, 1]]).unwrap()));
        let f = encode_l_diversity(2, 1, &[2, 1]).unwrap();
        assert_eq!(
            f.enumerate(100).unwrap().len() as u128,
            f.candidate_count()
        );
    }

    #[test]
    fn l_diversity_matches_filter() {
        let f = encode_l_diversity(2, 2, &[2, 2]).unwrap();
        let got = f.enumerate(100).unwrap();
        let mut want = Vec::new();
        for a in 0..=2u64 {
            for b in 0..=2u64 {
                let rows = [[a, b], [2 - a, 2 - b]];
                let ok = rows.iter().all(|r| {
                    let s = r[0] + r[1];
                    s == 0 || r.iter().all(|&v| 2 * v <= s)
                });
                if ok {
                    want.push(ColorMatrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap());
                }
            }
        }
        want.sort();
        assert_eq!(got, want);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn enumerate_respects_cap() {
        let f = ConstraintFamily::unconstrained(4, &[100]).unwrap();
        assert!(matches!(f.enumerate(10), Err(Error::CapExceeded { .. })));
    }

    fn line(n: usize) -> PointSet {
        PointSet::from_points((0..n).map(|i| Point::new(vec![i as f64]).unwrap()).collect()).unwrap()
    }

    #[test]
    fn must_link_components() {
        let (p, f) = encode_must_link(2, &[], &line(4)).unwrap();
        assert_eq!(p.color_count(), 1);
        assert_eq!(f.kind, FamilyKind::Unconstrained);
        let (p, f) = encode_must_link(2, &[(0, 1), (1, 2)], &line(4)).unwrap();
        assert_eq!(p.color_masses(), &[3, 1]);
        assert!(f.admits(&ColorMatrix::from_rows(&[vec![3, 0], vec![0, 1]]).unwrap()));
        assert!(!f.admits(&ColorMatrix::from_rows(&[vec![2, 1], vec![1, 0]]).unwrap()));
        assert!(encode_must_link(2, &[(0, 9)], &line(4)).is_err());
    }

    #[test]
    fn cannot_link_separates() {
        let (p, f) = encode_cannot_link(2, &[(0, 1)], &line(2), CannotLinkColoring::Greedy).unwrap();
        assert_eq!(p.color_masses(), &[1, 1]);
        for m in f.enumerate(100).unwrap() {
            assert!((0..2).all(|i| m.get(i, 0) == 0 || m.get(i, 1) == 0));
        }
        let (_, f) = encode_cannot_link(2, &[], &line(3), CannotLinkColoring::Greedy).unwrap();
        assert_eq!(f.kind, FamilyKind::Unconstrained);
    }

    #[test]
    fn greedy_coloring_reuses_colors() {
        // path 0-1-2: greedy uses 2 colors, distinct uses 3
        let links = [(0, 1), (1, 2)];
        let (p, _) = encode_cannot_link(2, &links, &line(4), CannotLinkColoring::Greedy).unwrap();
        assert_eq!(p.color_masses(), &[2, 1, 1]);
        let (p, _) = encode_cannot_link(2, &links, &line(4), CannotLinkColoring::Distinct).unwrap();
        assert_eq!(p.color_masses(), &[1, 1, 1, 1]);
    }

    #[test]
    fn explicit_sorted_and_deduplicated() {
        let a = ColorMatrix::from_sizes(&[2, 1]);
        let b = ColorMatrix::from_sizes(&[1, 2]);
        let f = encode_explicit(vec![a.clone(), b.clone(), a.clone()], &[3]).unwrap();
        assert_eq!(f.enumerate(10).unwrap(), vec![b, a]);
        assert!(encode_explicit(vec![], &[3]).is_err());
        assert!(encode_explicit(vec![ColorMatrix::from_sizes(&[1, 1])], &[3]).is_err());
    }

    #[test]
    fn size_family_on_colored_matrix() {
        let f = encode_upper_bounds(&[2, 2], 3).unwrap();
        let m = ColorMatrix::from_rows(&[vec![1, 1], vec![1, 0]]).unwrap();
        assert!(f.admits(&m));
        let m = ColorMatrix::from_rows(&[vec![2, 1], vec![0, 0]]).unwrap();
        assert!(!f.admits(&m));
    }

    #[test]
    fn spec_parsing_and_broadcast() {
        let spec: ConstraintSpec = "kind=lower_bounds; bounds=4; mode=strict".parse().unwrap();
        let (_, f) = spec.instantiate(2, &line(8)).unwrap();
        assert_eq!(
            f.kind,
            FamilyKind::LowerBounds {
                bounds: vec![4, 4],
                mode: LowerBoundMode::Strict
            }
        );
        let spec: ConstraintSpec = "kind=explicit\n# sizes\nmatrices=[[[1],[3]],[[3],[1]]]".parse().unwrap();
        let (_, f) = spec.instantiate(2, &line(4)).unwrap();
        assert_eq!(f.enumerate(10).unwrap().len(), 2);
        let spec: ConstraintSpec = "kind=must_link; links=0-1, 2-3".parse().unwrap();
        assert_eq!(
            spec,
            ConstraintSpec::MustLink {
                links: vec![(0, 1), (2, 3)]
            }
        );
        assert!("kind=outliers".parse::<ConstraintSpec>().is_err());
        assert!("kind=chromatic; z=1".parse::<ConstraintSpec>().is_err());
        assert!("kind=bogus".parse::<ConstraintSpec>().is_err());
        assert!("bounds=1".parse::<ConstraintSpec>().is_err());
        let spec: ConstraintSpec = "kind=upper_bounds; bounds=1,2,3".parse().unwrap();
        assert!(matches!(spec.instantiate(2, &line(4)), Err(Error::ArityMismatch(_))));
        let spec: ConstraintSpec = "kind=lower_bounds; bounds=3,3".parse().unwrap();
        assert!(matches!(spec.instantiate(2, &line(4)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn row_symmetry() {
        assert!(encode_lower_bounds(&[2, 2], 4, LowerBoundMode::Strict).unwrap().is_row_symmetric());
        assert!(!encode_lower_bounds(&[1, 2], 4, LowerBoundMode::Strict).unwrap().is_row_symmetric());
        let sym = encode_explicit(
            vec![ColorMatrix::from_sizes(&[1, 3]), ColorMatrix::from_sizes(&[3, 1])],
            &[4],
        )
        .unwrap();
        assert!(sym.is_row_symmetric());
        let asym = encode_explicit(vec![ColorMatrix::from_sizes(&[1, 3])], &[4]).unwrap();
        assert!(!asym.is_row_symmetric());
    }

    #[test]
    fn pad_centers_for_outliers() {
        let f = encode_outliers(1, 2, 5).unwrap();
        let c = CenterSet::new(vec![Point::new(vec![7.0]).unwrap()]).unwrap();
        let padded = f.pad_centers(&c).unwrap();
        assert_eq!(padded.len(), 3);
        assert_eq!(padded.centers()[2].coords(), &[7.0]);
        let two = CenterSet::new(vec![Point::new(vec![0.0]).unwrap(); 2]).unwrap();
        assert!(f.pad_centers(&two).is_err());
    }
}
