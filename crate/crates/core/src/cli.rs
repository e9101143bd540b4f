//! The `coreset` command line.
//!
//! Exit codes: 0 success, 1 infeasible constraint, 2 usage or input error,
//! 3 enumeration cap exceeded.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::assignment::optimal_assignment_with_cap;
use crate::constraints::{ConstraintFamily, ConstraintSpec, FamilyKind, DEFAULT_ENUMERATION_CAP};
use crate::coreset::{build_movement_coreset, verify_certificate, Coreset};
use crate::error::Error;
use crate::geometry::{MetricConfig, PointSet};
use crate::io::{read_centers, read_coreset, read_points, write_certificate, write_coreset, PointReader};
use crate::oracle::{brute_force_constrained_opt, brute_force_unconstrained_opt, OracleBudget};
use crate::report::{self, Format, Report};
use crate::solver::{ptas_solve, solve_with_transfer, Ingestion, SolveOptions, SolveResult};
use crate::stream::{StreamConfig, StreamState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "coreset", version, about = "Movement-based coresets and constrained k-means / k-median")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Io {
    /// Input file, `-` for standard input.
    #[arg(default_value = "-")]
    input: String,
    /// Point dimension; taken from the input when omitted.
    #[arg(short = 'd', long)]
    dim: Option<usize>,
    /// Output path; standard output when omitted.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct Model {
    /// Number of clusters.
    #[arg(short = 'k', long)]
    k: usize,
    /// Cost power: 1 for k-median, 2 for k-means.
    #[arg(short = 'm', long = "power", default_value_t = 2)]
    m: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveMode {
    /// Summarize offline at eps/3, solve the summary, evaluate on the input.
    Transfer,
    /// As `transfer`, with merge-and-reduce ingestion.
    Stream,
    /// Solve the input itself.
    Direct,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a certified movement coreset.
    BuildCoreset {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        #[arg(short = 'e', long)]
        eps: f64,
        /// Also write the movement certificate here.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Merge-and-reduce over a point stream.
    Stream {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        #[arg(short = 'e', long)]
        eps: f64,
        /// Entries per block.
        #[arg(long, default_value_t = 1000)]
        block: usize,
        /// Checkpoint file, written on request and at the end.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// When this file appears, a checkpoint is written and the file removed.
        #[arg(long)]
        flush_flag: Option<PathBuf>,
        /// Restore the checkpoint and skip the entries it already holds.
        #[arg(long, requires = "checkpoint")]
        resume: bool,
        /// Track every entry and write the final movement certificate here.
        #[arg(long, conflicts_with = "resume")]
        certificate: Option<PathBuf>,
    },
    /// Constrained cost of given centers on points or a coreset.
    Eval {
        #[command(flatten)]
        io: Io,
        /// One center per line.
        #[arg(long)]
        centers: PathBuf,
        #[arg(short = 'm', long = "power", default_value_t = 2)]
        m: u32,
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Include the `[entry, center, mass]` flows.
        #[arg(long)]
        flows: bool,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u128,
    },
    /// Solve constrained clustering on points or a coreset.
    Solve {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        #[arg(short = 'e', long)]
        eps: f64,
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Ignored for coreset inputs, which are always solved directly.
        #[arg(long, value_enum, default_value_t = SolveMode::Transfer)]
        mode: SolveMode,
        #[arg(long, default_value_t = 1000)]
        block: usize,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u128,
    },
    /// Exact optimum of a tiny instance, as a test fixture.
    Oracle {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        constraints: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::CapExceeded { .. } => EXIT_CAP,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("coreset: {e}");
            exit_code(&e)
        }
    }
}

fn open_input(path: &str) -> Result<Box<dyn BufRead>, Error> {
    if path == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        Ok(Box::new(BufReader::new(fs::File::open(path)?)))
    }
}

fn read_all(path: &str) -> Result<String, Error> {
    let mut s = String::new();
    open_input(path)?.read_to_string(&mut s)?;
    Ok(s)
}

enum Input {
    Points(PointSet),
    Coreset(Coreset),
}

impl Input {
    fn points(&self) -> &PointSet {
        match self {
            Input::Points(p) => p,
            Input::Coreset(c) => &c.points,
        }
    }
}

fn is_coreset(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("coreset "))
}

fn load(path: &str, dim: Option<usize>) -> Result<Input, Error> {
    let text = read_all(path)?;
    if is_coreset(&text) {
        Ok(Input::Coreset(read_coreset(text.as_bytes())?))
    } else {
        Ok(Input::Points(read_points(text.as_bytes(), dim)?))
    }
}

fn load_points(path: &str, dim: Option<usize>) -> Result<PointSet, Error> {
    match load(path, dim)? {
        Input::Points(p) => Ok(p),
        Input::Coreset(_) => Err(Error::invalid("expected points, got a coreset file")),
    }
}

fn load_spec(path: Option<&Path>) -> Result<ConstraintSpec, Error> {
    match path {
        None => Ok(ConstraintSpec::Unconstrained),
        Some(p) => fs::read_to_string(p)?.parse(),
    }
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn certificate_fields(r: &mut Report, coreset: &Coreset, points: Option<&PointSet>) -> Result<(), Error> {
    match &coreset.certificate {
        None => {
            r.set("certificate", Value::Null);
        }
        Some(cert) => {
            let mut v = serde_json::Map::new();
            v.insert("movement".into(), report::num(cert.movement_cost));
            v.insert("lower_bound".into(), report::num(cert.opt_lower_bound));
            v.insert("budget".into(), report::num(cert.budget));
            if let Some(p) = points {
                v.insert("verified".into(), Value::from(verify_certificate(p, coreset)?.ok()));
            }
            let v = Value::Object(v);
            r.set("certificate", v);
        }
    }
    Ok(())
}

fn coreset_fields(r: &mut Report, coreset: &Coreset, k: usize, eps: f64, cfg: MetricConfig) {
    r.set("k", k as u64)
        .set_num("eps", eps)
        .set("m", cfg.power())
        .set("coreset_entries", coreset.len() as u64)
        .set("coreset_weight", coreset.points.total_weight());
}

fn write_coreset_out(io: &Io, coreset: &Coreset, report: &Report) -> Result<(), Error> {
    let mut buf = Vec::new();
    write_coreset(&mut buf, coreset)?;
    match &io.output {
        Some(p) => {
            fs::write(p, &buf)?;
            emit(None, report.render(io.format).as_bytes())
        }
        None => emit(None, &buf),
    }
}

fn solve_report(result: &SolveResult, mode: &str, eps: f64, family: &ConstraintFamily) -> Report {
    let mut r = Report::new("solve");
    r.set("mode", mode)
        .set_num("eps", eps)
        .set("family", serde_json::to_value(&family.kind).expect("family serializes"))
        .set("centers", report::centers(&result.centers))
        .set("realized_matrix", report::matrix(&result.assignment.realized_matrix))
        .set_num("coreset_cost", result.coreset_cost)
        .set("original_cost", result.original_cost.map_or(Value::Null, report::num))
        .set_num("certified_factor", result.certified_factor)
        .set("candidates_examined", result.candidates_examined)
        .set("coreset_size", result.coreset_size as u64);
    r
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::BuildCoreset {
            io,
            model,
            eps,
            certificate,
        } => {
            let cfg = MetricConfig::new(model.m)?;
            let points = load_points(&io.input, io.dim)?;
            let coreset = build_movement_coreset(&points, model.k, eps, cfg, model.seed)?;
            if let (Some(path), Some(cert)) = (&certificate, &coreset.certificate) {
                let mut buf = Vec::new();
                write_certificate(&mut buf, cert)?;
                fs::write(path, buf)?;
            }
            let mut r = Report::new("build-coreset");
            coreset_fields(&mut r, &coreset, model.k, eps, cfg);
            r.set("input_entries", points.len() as u64)
                .set("input_weight", points.total_weight())
                .set("seed", model.seed);
            certificate_fields(&mut r, &coreset, Some(&points))?;
            write_coreset_out(&io, &coreset, &r)
        }
        Command::Stream {
            io,
            model,
            eps,
            block,
            checkpoint,
            flush_flag,
            resume,
            certificate,
        } => {
            let cfg = MetricConfig::new(model.m)?;
            let config = StreamConfig::new(block, model.k, eps, cfg, model.seed)?.tracking(certificate.is_some());
            let mut state = match (&checkpoint, resume) {
                (Some(path), true) if path.exists() => {
                    let state = StreamState::read_checkpoint(BufReader::new(fs::File::open(path)?))?;
                    let mut saved = state.config().clone();
                    saved.track_mapping = false;
                    if saved != config {
                        return Err(Error::invalid(
                            "checkpoint parameters differ from -k/-e/-m/--block/--seed",
                        ));
                    }
                    state
                }
                _ => StreamState::new(config),
            };
            let skip = state.entries_seen();
            let save = |state: &StreamState, path: &Path| -> Result<(), Error> {
                let mut buf = Vec::new();
                state.write_checkpoint(&mut buf)?;
                write_atomically(path, &buf)
            };
            for (i, entry) in PointReader::new(open_input(&io.input)?, io.dim).enumerate() {
                let entry = entry?;
                if (i as u64) < skip {
                    continue;
                }
                state.push(entry)?;
                if state.entries_seen() % block as u64 == 0 {
                    if let Some(flag) = flush_flag.as_deref().filter(|f| f.exists()) {
                        let path = checkpoint
                            .as_deref()
                            .ok_or_else(|| Error::invalid("--flush-flag needs --checkpoint"))?;
                        save(&state, path)?;
                        fs::remove_file(flag)?;
                    }
                }
            }
            if let Some(path) = &checkpoint {
                save(&state, path)?;
            }
            let mut r = Report::new("stream");
            r.set("block", block as u64)
                .set("input_entries", state.entries_seen())
                .set("input_weight", state.points_seen())
                .set("peak_entries", state.peak_entries() as u64)
                .set("levels", Value::from(state.occupied_levels().iter().map(|&l| l as u64).collect::<Vec<_>>()))
                .set("seed", model.seed);
            let coreset = state.finish()?;
            coreset_fields(&mut r, &coreset, model.k, eps, cfg);
            if let (Some(path), Some(cert)) = (&certificate, &coreset.certificate) {
                let mut buf = Vec::new();
                write_certificate(&mut buf, cert)?;
                fs::write(path, buf)?;
            }
            certificate_fields(&mut r, &coreset, None)?;
            write_coreset_out(&io, &coreset, &r)
        }
        Command::Eval {
            io,
            centers,
            m,
            constraints,
            flows,
            cap,
        } => {
            let cfg = MetricConfig::new(m)?;
            let input = load(&io.input, io.dim)?;
            let points = input.points();
            let centers = read_centers(BufReader::new(fs::File::open(&centers)?), points.dim())?;
            let (points, family) = load_spec(constraints.as_deref())?.instantiate(centers.len(), points)?;
            let padded = family.pad_centers(&centers)?;
            let a = optimal_assignment_with_cap(&points, &padded, &family, cfg, cap)?;
            let mut r = Report::new("eval");
            r.set("input", if matches!(input, Input::Coreset(_)) { "coreset" } else { "points" })
                .set("m", cfg.power())
                .set("family", serde_json::to_value(&family.kind).expect("family serializes"))
                .set("centers", report::centers(&padded))
                .set_num("cost", a.objective)
                .set_num("total_cost", a.total_cost)
                .set("realized_matrix", report::matrix(&a.realized_matrix));
            if flows {
                r.set("flows", report::flows(&a));
            }
            emit(io.output.as_deref(), r.render(io.format).as_bytes())
        }
        Command::Solve {
            io,
            model,
            eps,
            constraints,
            mode,
            block,
            jobs,
            cap,
        } => {
            let cfg = MetricConfig::new(model.m)?;
            let options = SolveOptions { cap, jobs };
            let spec = load_spec(constraints.as_deref())?;
            let input = load(&io.input, io.dim)?;
            let (points, family) = spec.instantiate(model.k, input.points())?;
            let (result, label) = match (&input, mode) {
                (Input::Coreset(_), _) | (_, SolveMode::Direct) => {
                    (ptas_solve(&points, &family, eps, cfg, &options)?, "direct")
                }
                (Input::Points(_), SolveMode::Transfer) => (
                    solve_with_transfer(&points, &family, eps, cfg, Ingestion::Offline, model.seed, &options)?,
                    "transfer",
                ),
                (Input::Points(_), SolveMode::Stream) => (
                    solve_with_transfer(
                        &points,
                        &family,
                        eps,
                        cfg,
                        Ingestion::Streamed { block_size: block },
                        model.seed,
                        &options,
                    )?,
                    "stream",
                ),
            };
            let mut r = solve_report(&result, label, eps, &family);
            r.set("m", cfg.power()).set("seed", model.seed);
            emit(io.output.as_deref(), r.render(io.format).as_bytes())
        }
        Command::Oracle { io, model, constraints } => {
            let cfg = MetricConfig::new(model.m)?;
            let input = load_points(&io.input, io.dim)?;
            let (points, family) = load_spec(constraints.as_deref())?.instantiate(model.k, &input)?;
            let solution = if matches!(family.kind, FamilyKind::Unconstrained) {
                brute_force_unconstrained_opt(&points, model.k, cfg, &OracleBudget::UNCONSTRAINED)?
            } else {
                brute_force_constrained_opt(&points, &family, cfg, &OracleBudget::CONSTRAINED)?
            };
            let instance: Vec<Value> = points
                .iter()
                .map(|e| {
                    let mut row: Vec<Value> = e.point.coords().iter().map(|&c| report::num(c)).collect();
                    row.push(Value::from(e.color));
                    row.push(Value::from(e.weight));
                    Value::Array(row)
                })
                .collect();
            let mut witness = serde_json::Map::new();
            witness.insert("labels".into(), Value::from(solution.labels.iter().map(|&l| l as u64).collect::<Vec<_>>()));
            witness.insert("centers".into(), report::centers(&solution.centers));
            witness.insert("realized_matrix".into(), report::matrix(&solution.realized_matrix));
            let mut r = Report::new("oracle");
            r.set("m", cfg.power())
                .set("k", model.k as u64)
                .set("instance", Value::Array(instance))
                .set("family", serde_json::to_value(&family).expect("family serializes"))
                .set_num("opt", solution.cost)
                .set("witness", Value::Object(witness))
                .set("examined", solution.examined);
            emit(io.output.as_deref(), r.render(io.format).as_bytes())
        }
    }
}
