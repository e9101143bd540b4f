//! Text formats: point CSV, coreset files, certificates and center lists.
//!
//! Point lines hold `d` comma-separated coordinates, optionally followed by
//! an integer color (0-based) and an integer weight:
//!
//! ```text
//! # dim=2
//! 0.5,1.25
//! 3,4,1
//! 3,4,1,7
//! ```
//!
//! Blank lines and lines starting with `#` are ignored; `# dim=<d>` fixes the
//! dimension, otherwise it is taken from the caller or the first data line.

use std::io::{BufRead, Write};

use crate::coreset::{Coreset, MovementCertificate};
use crate::error::{Error, Result};
use crate::geometry::{CenterSet, MetricConfig, Point, PointSet, WeightedColoredPoint};

fn dim_directive(line: &str) -> Option<&str> {
    line.strip_prefix('#')?.trim().strip_prefix("dim=")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("not a number: {:?}", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, "non-finite coordinate"));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{what} must be a nonnegative integer, got {:?}", s.trim())))
}

/// Streaming reader of point lines.
pub struct PointReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    dim: Option<usize>,
}

impl<R: BufRead> PointReader<R> {
    pub fn new(reader: R, dim: Option<usize>) -> Self {
        PointReader {
            lines: reader.lines(),
            line: 0,
            dim,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn parse(&mut self, text: &str) -> Result<WeightedColoredPoint> {
        let fields: Vec<&str> = text.split(',').collect();
        let d = *self.dim.get_or_insert(fields.len());
        if fields.len() < d || fields.len() > d + 2 {
            return Err(Error::parse(
                self.line,
                format!("expected {d} to {} fields, found {}", d + 2, fields.len()),
            ));
        }
        let coords = fields[..d]
            .iter()
            .map(|f| parse_f64(f, self.line))
            .collect::<Result<Vec<_>>>()?;
        let color = match fields.get(d) {
            Some(f) => parse_int::<u32>(f, self.line, "color")?,
            None => 0,
        };
        let weight = match fields.get(d + 1) {
            Some(f) => parse_int::<u64>(f, self.line, "weight")?,
            None => 1,
        };
        if weight == 0 {
            return Err(Error::parse(self.line, "weight must be positive"));
        }
        let point = Point::new(coords).map_err(|e| Error::parse(self.line, e.to_string()))?;
        Ok(WeightedColoredPoint::new(point, weight, color))
    }
}

impl<R: BufRead> Iterator for PointReader<R> {
    type Item = Result<WeightedColoredPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            let t = text.trim();
            if let Some(d) = dim_directive(t) {
                match d.trim().parse::<usize>() {
                    Ok(d) if d >= 1 => self.dim = Some(d),
                    _ => return Some(Err(Error::parse(self.line, "bad dim directive"))),
                }
                continue;
            }
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some(self.parse(t));
        }
    }
}

pub fn read_points<R: BufRead>(reader: R, dim: Option<usize>) -> Result<PointSet> {
    let mut it = PointReader::new(reader, dim);
    let mut set: Option<PointSet> = None;
    for e in &mut it {
        let e = e?;
        let s = set.get_or_insert_with(|| PointSet::new(e.point.dim()));
        s.push(e)?;
    }
    set.ok_or(Error::EmptyInput)
}

pub fn format_entry(e: &WeightedColoredPoint) -> String {
    let mut s = String::new();
    for c in e.point.coords() {
        s.push_str(&format!("{c},"));
    }
    s.push_str(&format!("{},{}", e.color, e.weight));
    s
}

pub fn coreset_header(c: &Coreset) -> String {
    format!(
        "coreset v1 d={} k={} eps={} m={} colors={} n={}",
        c.points.dim(),
        c.k,
        c.eps,
        c.cfg.power(),
        c.colors(),
        c.points.total_weight()
    )
}

pub fn write_coreset<W: Write>(mut w: W, c: &Coreset) -> Result<()> {
    writeln!(w, "{}", coreset_header(c))?;
    for e in c.points.iter() {
        writeln!(w, "{}", format_entry(e))?;
    }
    Ok(())
}

/// `key=value` pairs after a fixed `<tag> v1` prefix.
pub(crate) fn parse_header<'a>(line: &'a str, tag: &str, lineno: usize) -> Result<Vec<(&'a str, &'a str)>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) || parts.next() != Some("v1") {
        return Err(Error::parse(lineno, format!("expected a `{tag} v1` header")));
    }
    parts
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| Error::parse(lineno, format!("malformed field {p:?}")))
        })
        .collect()
}

pub(crate) fn header_field<T: std::str::FromStr>(
    fields: &[(&str, &str)],
    key: &str,
    lineno: usize,
) -> Result<T> {
    let raw = fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(lineno, format!("missing header field {key}")))?;
    raw.parse()
        .map_err(|_| Error::parse(lineno, format!("bad value for {key}: {raw:?}")))
}

/// Parses one `<coords...>,<color>,<weight>` line of a `dim`-dimensional summary.
pub(crate) fn parse_entry(text: &str, dim: usize, lineno: usize) -> Result<WeightedColoredPoint> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != dim + 2 {
        return Err(Error::parse(
            lineno,
            format!("expected {} fields, found {}", dim + 2, fields.len()),
        ));
    }
    let coords = fields[..dim]
        .iter()
        .map(|f| parse_f64(f, lineno))
        .collect::<Result<Vec<_>>>()?;
    let color = parse_int::<u32>(fields[dim], lineno, "color")?;
    let weight = parse_int::<u64>(fields[dim + 1], lineno, "weight")?;
    if weight == 0 {
        return Err(Error::parse(lineno, "weight must be positive"));
    }
    let point = Point::new(coords).map_err(|e| Error::parse(lineno, e.to_string()))?;
    Ok(WeightedColoredPoint::new(point, weight, color))
}

/// Reads a header and its `n` entries from an iterator of numbered lines.
pub(crate) fn read_coreset_lines(
    lines: &mut impl Iterator<Item = (usize, String)>,
) -> Result<Coreset> {
    let (lineno, header) = lines.next().ok_or(Error::EmptyInput)?;
    let fields = parse_header(&header, "coreset", lineno)?;
    let dim: usize = header_field(&fields, "d", lineno)?;
    let k: usize = header_field(&fields, "k", lineno)?;
    let eps: f64 = header_field(&fields, "eps", lineno)?;
    let m: u32 = header_field(&fields, "m", lineno)?;
    let colors: usize = header_field(&fields, "colors", lineno)?;
    let n: u64 = header_field(&fields, "n", lineno)?;
    if dim == 0 {
        return Err(Error::parse(lineno, "d must be >= 1"));
    }
    let cfg = MetricConfig::new(m).map_err(|e| Error::parse(lineno, e.to_string()))?;
    let mut points = PointSet::with_colors(dim, colors);
    let mut last = lineno;
    while points.total_weight() < n {
        let (no, text) = lines
            .next()
            .ok_or_else(|| Error::parse(last + 1, "coreset ends before its declared weight"))?;
        last = no;
        points.push(parse_entry(&text, dim, no)?)?;
    }
    if points.total_weight() != n {
        return Err(Error::parse(last, "entries exceed the declared weight"));
    }
    if points.color_count() != colors.max(1) {
        return Err(Error::parse(last, "entry colors exceed the declared color count"));
    }
    Ok(Coreset {
        points,
        k,
        eps,
        cfg,
        certificate: None,
    })
}

/// Numbered, trimmed lines with blanks and `#` comments removed.
pub(crate) fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(t) => {
            let t = t.trim();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
        Err(e) => Some(Err(Error::from(e))),
    })
}

pub fn read_coreset<R: BufRead>(reader: R) -> Result<Coreset> {
    let lines: Vec<(usize, String)> = content_lines(reader).collect::<Result<_>>()?;
    let mut it = lines.into_iter();
    let c = read_coreset_lines(&mut it)?;
    if let Some((no, _)) = it.next() {
        return Err(Error::parse(no, "trailing data after the coreset"));
    }
    Ok(c)
}

pub fn write_certificate<W: Write>(mut w: W, cert: &MovementCertificate) -> Result<()> {
    writeln!(
        w,
        "certificate v1 entries={} movement={} lower_bound={} budget={}",
        cert.mapping.len(),
        cert.movement_cost,
        cert.opt_lower_bound,
        cert.budget
    )?;
    for t in &cert.mapping {
        writeln!(w, "{t}")?;
    }
    Ok(())
}

pub fn read_certificate<R: BufRead>(reader: R) -> Result<MovementCertificate> {
    let mut lines = content_lines(reader);
    let (lineno, header) = lines.next().ok_or(Error::EmptyInput)??;
    let fields = parse_header(&header, "certificate", lineno)?;
    let n: usize = header_field(&fields, "entries", lineno)?;
    let mut mapping = Vec::with_capacity(n);
    for l in lines {
        let (no, text) = l?;
        mapping.push(parse_int::<usize>(&text, no, "mapping target")?);
    }
    if mapping.len() != n {
        return Err(Error::parse(lineno, format!("declared {n} mapping lines, found {}", mapping.len())));
    }
    Ok(MovementCertificate {
        mapping,
        movement_cost: header_field(&fields, "movement", lineno)?,
        opt_lower_bound: header_field(&fields, "lower_bound", lineno)?,
        budget: header_field(&fields, "budget", lineno)?,
    })
}

/// One center per line, `dim` comma-separated coordinates.
pub fn read_centers<R: BufRead>(reader: R, dim: usize) -> Result<CenterSet> {
    let mut centers = Vec::new();
    for l in content_lines(reader) {
        let (no, text) = l?;
        let coords = text
            .split(',')
            .map(|f| parse_f64(f, no))
            .collect::<Result<Vec<_>>>()?;
        if coords.len() != dim {
            return Err(Error::parse(no, format!("expected {dim} coordinates, found {}", coords.len())));
        }
        centers.push(Point::new(coords)?);
    }
    CenterSet::new(centers)
}
