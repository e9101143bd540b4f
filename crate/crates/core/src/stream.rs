//! Insertion-only streaming by merge-and-reduce.
//!
//! Blocks of `B` entries become level-0 buckets; two buckets on one level are
//! merged and reduced into a bucket on the next level, like carries in a
//! binary counter. Each entry remembers the movement it has accumulated since
//! the original points, and a level-`j` bucket keeps that total below a
//! fraction `(j + 1) / (j + 2)` of its movement budget. The fractions stay
//! below one, so the union of all buckets is itself a movement coreset of
//! everything seen, and one last reduce may spend what is left.
//!
//! Representatives are weighted means of the original points they absorb, so
//! for `m = 2` the accumulated movement is exact (parallel-axis identity); for
//! `m = 1` it is an upper bound by the triangle inequality.

use std::io::{BufRead, Write};

use crate::coreset::{
    bicriteria_seed, budget_factor, exact_summary, grid_summary, Coreset, MovementCertificate, Summary,
};
use crate::error::{Error, Result};
use crate::geometry::{MetricConfig, PointSet, WeightedColoredPoint};
use crate::io::{
    content_lines, coreset_header, format_entry, header_field, parse_entry, parse_header, read_coreset_lines,
};

#[derive(Clone, Debug, PartialEq)]
pub struct StreamConfig {
    pub block_size: usize,
    pub k: usize,
    pub eps: f64,
    pub cfg: MetricConfig,
    pub seed: u64,
    /// Keep, for every stream entry, the summary entry it ends up in, so the
    /// final coreset carries a checkable certificate. Costs `O(n)` memory.
    pub track_mapping: bool,
}

impl StreamConfig {
    pub fn new(block_size: usize, k: usize, eps: f64, cfg: MetricConfig, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if block_size < k {
            return Err(Error::invalid(format!("block size {block_size} is smaller than k = {k}")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
        }
        Ok(StreamConfig {
            block_size,
            k,
            eps,
            cfg,
            seed,
            track_mapping: false,
        })
    }

    pub fn tracking(mut self, on: bool) -> Self {
        self.track_mapping = on;
        self
    }

    /// Share of a level's movement budget its accumulated movement may use.
    pub fn level_fraction(level: usize) -> f64 {
        (level as f64 + 1.0) / (level as f64 + 2.0)
    }
}

#[derive(Clone, Debug)]
struct Bucket {
    points: PointSet,
    carried: Vec<f64>,
    lower_bound: f64,
    /// Stream entry ids absorbed by each entry, when tracking.
    members: Option<Vec<Vec<u64>>>,
}

impl Bucket {
    fn len(&self) -> usize {
        self.points.len()
    }
}

fn mix(seed: u64, step: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Points, carried movement, tracked members and summed lower bound.
type Union = (PointSet, Vec<f64>, Option<Vec<Vec<u64>>>, f64);

#[derive(Clone, Debug)]
pub struct StreamState {
    config: StreamConfig,
    dim: Option<usize>,
    colors: usize,
    levels: Vec<Option<Bucket>>,
    pending: Vec<WeightedColoredPoint>,
    entries_seen: u64,
    points_seen: u64,
    reductions: u64,
    peak_entries: usize,
}

impl StreamState {
    pub fn new(config: StreamConfig) -> Self {
        StreamState {
            config,
            dim: None,
            colors: 1,
            levels: Vec::new(),
            pending: Vec::new(),
            entries_seen: 0,
            points_seen: 0,
            reductions: 0,
            peak_entries: 0,
        }
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    /// Total weight ingested so far.
    pub fn points_seen(&self) -> u64 {
        self.points_seen
    }

    pub fn entries_seen(&self) -> u64 {
        self.entries_seen
    }

    /// Entries currently held in buckets and the partial block.
    pub fn stored_entries(&self) -> usize {
        self.levels.iter().flatten().map(Bucket::len).sum::<usize>() + self.pending.len()
    }

    pub fn peak_entries(&self) -> usize {
        self.peak_entries
    }

    /// Levels currently holding a bucket.
    pub fn occupied_levels(&self) -> Vec<usize> {
        (0..self.levels.len()).filter(|&j| self.levels[j].is_some()).collect()
    }

    pub fn push(&mut self, entry: WeightedColoredPoint) -> Result<()> {
        let d = *self.dim.get_or_insert(entry.point.dim());
        if entry.point.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: entry.point.dim(),
            });
        }
        if entry.weight == 0 {
            return Err(Error::invalid("weights must be positive integers"));
        }
        self.colors = self.colors.max(entry.color as usize + 1);
        self.points_seen += entry.weight;
        self.entries_seen += 1;
        self.pending.push(entry);
        self.peak_entries = self.peak_entries.max(self.stored_entries());
        if self.pending.len() >= self.config.block_size {
            self.flush_block()?;
        }
        Ok(())
    }

    fn next_seed(&mut self) -> u64 {
        self.reductions += 1;
        mix(self.config.seed, self.reductions)
    }

    fn pending_bucket(&mut self) -> Result<Option<Bucket>> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let dim = self.dim.expect("dimension known once a point arrived");
        let mut points = PointSet::with_colors(dim, self.colors);
        for e in self.pending.drain(..) {
            points.push(e)?;
        }
        let first_id = self.entries_seen - points.len() as u64;
        let members = self
            .config
            .track_mapping
            .then(|| (0..points.len() as u64).map(|i| vec![first_id + i]).collect());
        let carried = vec![0.0; points.len()];
        let seed = self.next_seed();
        Ok(Some(self.summarize(points, carried, members, 0.0, 0, seed, false)?))
    }

    fn flush_block(&mut self) -> Result<()> {
        if let Some(b) = self.pending_bucket()? {
            self.carry(b)?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn summarize(
        &self,
        points: PointSet,
        carried: Vec<f64>,
        members: Option<Vec<Vec<u64>>>,
        children_bound: f64,
        level: usize,
        seed: u64,
        merged: bool,
    ) -> Result<Bucket> {
        let c = &self.config;
        let seeding = bicriteria_seed(&points, c.k, c.cfg, seed)?;
        let own = if seeding.degenerate {
            0.0
        } else if merged {
            seeding.opt_lower_bound / (1.0 + c.eps)
        } else {
            seeding.opt_lower_bound
        };
        let lower_bound = children_bound.max(own);
        let summary: Summary = if lower_bound > 0.0 {
            let allowance = StreamConfig::level_fraction(level) * budget_factor(c.eps, c.cfg) * lower_bound;
            grid_summary(&points, &carried, &seeding.centers, lower_bound, allowance, c.cfg)
        } else {
            exact_summary(&points, &carried, c.cfg)
        };
        let members = members.map(|old| {
            let mut out = vec![Vec::new(); summary.points.len()];
            for (i, ids) in old.into_iter().enumerate() {
                out[summary.mapping[i]].extend(ids);
            }
            out
        });
        Ok(Bucket {
            points: summary.points,
            carried: summary.carried,
            lower_bound,
            members,
        })
    }

    fn union(&self, buckets: Vec<Bucket>) -> Result<Union> {
        let dim = self.dim.expect("dimension known");
        let mut points = PointSet::with_colors(dim, self.colors);
        let mut carried = Vec::new();
        let mut members = self.config.track_mapping.then(Vec::new);
        let mut bound = 0.0;
        for b in buckets {
            for e in b.points.into_entries() {
                points.push(e)?;
            }
            carried.extend(b.carried);
            if let (Some(all), Some(m)) = (members.as_mut(), b.members) {
                all.extend(m);
            }
            bound += b.lower_bound;
        }
        Ok((points, carried, members, bound))
    }

    fn carry(&mut self, mut bucket: Bucket) -> Result<()> {
        let mut level = 0;
        loop {
            if self.levels.len() <= level {
                self.levels.resize(level + 1, None);
            }
            match self.levels[level].take() {
                None => {
                    self.levels[level] = Some(bucket);
                    break;
                }
                Some(older) => {
                    let (points, carried, members, bound) = self.union(vec![older, bucket])?;
                    self.peak_entries = self.peak_entries.max(self.stored_entries() + points.len());
                    let seed = self.next_seed();
                    bucket = self.summarize(points, carried, members, bound, level + 1, seed, true)?;
                    level += 1;
                }
            }
        }
        self.peak_entries = self.peak_entries.max(self.stored_entries());
        Ok(())
    }

    /// Summary of everything seen so far; the state is left untouched.
    pub fn snapshot(&self) -> Result<Coreset> {
        let mut copy = self.clone();
        copy.finalize()
    }

    /// Consumes the state and returns the final summary.
    pub fn finish(mut self) -> Result<Coreset> {
        self.finalize()
    }

    fn finalize(&mut self) -> Result<Coreset> {
        self.flush_block()?;
        let buckets: Vec<Bucket> = self.levels.iter_mut().rev().filter_map(Option::take).collect();
        if buckets.is_empty() {
            return Err(Error::EmptyInput);
        }
        let (points, carried, members, bound) = self.union(buckets)?;
        let seed = self.next_seed();
        let c = self.config.clone();
        // the union of the buckets is a coreset of the stream, so its own
        // seeding bound is divided by 1 + eps
        let last = self.summarize(points, carried, members, bound, usize::MAX - 1, seed, true)?;
        let certificate = last.members.as_ref().map(|members| {
            let mut mapping = vec![0usize; self.entries_seen as usize];
            for (j, ids) in members.iter().enumerate() {
                for &id in ids {
                    mapping[id as usize] = j;
                }
            }
            MovementCertificate {
                mapping,
                movement_cost: last.carried.iter().sum(),
                opt_lower_bound: last.lower_bound,
                budget: budget_factor(c.eps, c.cfg) * last.lower_bound,
            }
        });
        Ok(Coreset {
            points: last.points,
            k: c.k,
            eps: c.eps,
            cfg: c.cfg,
            certificate,
        })
    }

    /// Writes a resumable checkpoint: a state line, each bucket as a coreset
    /// block with its accumulated movement, then the partial block.
    /// Member tracking is not saved.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let c = &self.config;
        let buckets: Vec<(usize, &Bucket)> = self
            .levels
            .iter()
            .enumerate()
            .filter_map(|(j, b)| b.as_ref().map(|b| (j, b)))
            .collect();
        writeln!(
            w,
            "stream v1 d={} k={} eps={} m={} block={} seed={} colors={} entries={} weight={} reductions={} peak={} buckets={} pending={}",
            self.dim.unwrap_or(0),
            c.k,
            c.eps,
            c.cfg.power(),
            c.block_size,
            c.seed,
            self.colors,
            self.entries_seen,
            self.points_seen,
            self.reductions,
            self.peak_entries,
            buckets.len(),
            self.pending.len()
        )?;
        for (level, b) in buckets {
            writeln!(w, "bucket v1 level={level} lower_bound={}", b.lower_bound)?;
            let coreset = Coreset {
                points: b.points.clone(),
                k: c.k,
                eps: c.eps,
                cfg: c.cfg,
                certificate: None,
            };
            writeln!(w, "{}", coreset_header(&coreset))?;
            for e in b.points.iter() {
                writeln!(w, "{}", format_entry(e))?;
            }
            let carried: Vec<String> = b.carried.iter().map(|v| v.to_string()).collect();
            writeln!(w, "carried {}", carried.join(","))?;
        }
        for e in &self.pending {
            writeln!(w, "{}", format_entry(e))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<StreamState> {
        let lines: Vec<(usize, String)> = content_lines(reader).collect::<Result<_>>()?;
        let mut it = lines.into_iter();
        let (no, header) = it.next().ok_or(Error::EmptyInput)?;
        let f = parse_header(&header, "stream", no)?;
        let dim: usize = header_field(&f, "d", no)?;
        let m: u32 = header_field(&f, "m", no)?;
        let cfg = MetricConfig::new(m).map_err(|e| Error::parse(no, e.to_string()))?;
        let config = StreamConfig::new(
            header_field(&f, "block", no)?,
            header_field(&f, "k", no)?,
            header_field(&f, "eps", no)?,
            cfg,
            header_field(&f, "seed", no)?,
        )
        .map_err(|e| Error::parse(no, e.to_string()))?;
        let mut state = StreamState::new(config);
        state.dim = (dim > 0).then_some(dim);
        state.colors = header_field(&f, "colors", no)?;
        state.entries_seen = header_field(&f, "entries", no)?;
        state.points_seen = header_field(&f, "weight", no)?;
        state.reductions = header_field(&f, "reductions", no)?;
        state.peak_entries = header_field(&f, "peak", no)?;
        let buckets: usize = header_field(&f, "buckets", no)?;
        let pending: usize = header_field(&f, "pending", no)?;
        for _ in 0..buckets {
            let (bno, bline) = it.next().ok_or_else(|| Error::parse(no, "missing bucket"))?;
            let bf = parse_header(&bline, "bucket", bno)?;
            let level: usize = header_field(&bf, "level", bno)?;
            let lower_bound: f64 = header_field(&bf, "lower_bound", bno)?;
            let coreset = read_coreset_lines(&mut it)?;
            let (cno, cline) = it.next().ok_or_else(|| Error::parse(bno, "missing carried line"))?;
            let values = cline
                .strip_prefix("carried ")
                .ok_or_else(|| Error::parse(cno, "expected a carried line"))?;
            let carried = values
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::parse(cno, "bad carried value")))
                .collect::<Result<Vec<_>>>()?;
            if carried.len() != coreset.len() {
                return Err(Error::parse(cno, "carried values do not match the bucket entries"));
            }
            if state.levels.len() <= level {
                state.levels.resize(level + 1, None);
            }
            state.levels[level] = Some(Bucket {
                points: coreset.points,
                carried,
                lower_bound,
                members: None,
            });
        }
        for _ in 0..pending {
            let (pno, text) = it.next().ok_or_else(|| Error::parse(no, "missing pending entry"))?;
            state.pending.push(parse_entry(&text, dim, pno)?);
        }
        if let Some((extra, _)) = it.next() {
            return Err(Error::parse(extra, "trailing data after the checkpoint"));
        }
        Ok(state)
    }
}

/// Runs merge-and-reduce over `source` and returns the final summary.
pub fn process_stream<I>(source: I, config: StreamConfig) -> Result<Coreset>
where
    I: IntoIterator<Item = Result<WeightedColoredPoint>>,
{
    let mut state = StreamState::new(config);
    for e in source {
        state.push(e?)?;
    }
    state.finish()
}
