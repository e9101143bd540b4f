//! Movement-based coresets for constrained k-means and k-median.
//!
//! A coreset here is a weighted, colored summary produced by moving every
//! input point to a representative while keeping the total movement within
//! `(eps / 2m)^m` times a lower bound on the optimal cost. Such a summary
//! preserves the cost of every center set, and of every size or color
//! constrained assignment, up to a `1 ± eps` factor. Summaries merge, so the
//! same construction runs over streams by merge-and-reduce.
//!
//! Modules, bottom up:
//! - [`geometry`]: points, weights, colors, center sets and clustering cost.
//! - [`flow`]: integral min-cost flow with arc lower bounds.
//! - [`constraints`]: size and color constraint families.
//! - [`assignment`]: optimal constrained assignment to fixed centers.
//! - [`coreset`]: offline construction, certificates, merge and reduce.
//! - [`stream`]: merge-and-reduce over an insertion-only stream.
//! - [`solver`]: candidate enumeration and coreset-to-input transfer.
//! - [`oracle`]: brute-force optima for tiny instances.
//! - [`io`], [`report`], [`cli`]: file formats and the command line.

pub mod assignment;
pub mod cli;
pub mod constraints;
pub mod coreset;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod report;
pub mod solver;
pub mod stream;

pub use error::{Error, Result};
