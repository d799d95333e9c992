//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io;
use crate::mesh::EntityKind;
use crate::pipeline::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "fieldpipe", version, about = "Run mesh field processing pipelines")]
pub struct Cli {
    #[command(flatten)]
    pub verbosity: Verbosity,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Verbosity {
    /// Log debugging detail.
    #[arg(long, short, global = true, conflicts_with = "quiet")]
    pub verbose: bool,

    /// Only log errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a pipeline document.
    Run {
        config: PathBuf,
        /// Worker threads (default: number of hardware threads).
        #[arg(long)]
        threads: Option<usize>,
        /// Stop after checking the document.
        #[arg(long)]
        validate_only: bool,
    },
    /// Check a pipeline document without processing data.
    Validate { config: PathBuf },
    /// Copy the geometry of a container (or Ensight case) into an empty container.
    StripMesh { input: PathBuf, output: PathBuf },
    /// Describe a native container.
    Info { container: PathBuf },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Exit code for an error: 1 for document problems, 2 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

fn init_logging(v: &Verbosity) {
    let level = if v.quiet {
        log::LevelFilter::Error
    } else if v.verbose {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Info
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

pub fn validate(config: &Path) -> Result<Pipeline> {
    let p = Pipeline::load(config)?;
    log::info!(
        "{}: valid ({} steps, order {})",
        config.display(),
        p.num_entries(),
        p.execution_order().join(" -> ")
    );
    Ok(p)
}

pub fn run(config: &Path, threads: Option<usize>) -> Result<()> {
    let mut p = validate(config)?;
    let summary = p.run(threads)?;
    log::info!(
        "done: {} steps, quantities [{}], written to {} in {:.3} s",
        summary.entries,
        summary.quantities.join(", "),
        summary.outputs.iter().map(|o| o.display().to_string()).collect::<Vec<_>>().join(", "),
        summary.elapsed.as_secs_f64()
    );
    Ok(())
}

/// Human-readable description of a native container.
pub fn info_report(root: &Path) -> Result<String> {
    let data = io::read_native(root)?;
    let mesh = &data.mesh;
    let m = &data.manifest;
    let mut out = String::new();
    let _ = writeln!(out, "container: {}", root.display());
    let _ = writeln!(out, "analysis: {:?}", m.analysis);
    let _ = writeln!(out, "dimension: {}", mesh.dimension());
    let _ = writeln!(out, "nodes: {}", mesh.num_nodes());
    let _ = writeln!(out, "regions:");
    for r in mesh.regions() {
        let blocks: Vec<String> = r
            .blocks()
            .iter()
            .map(|b| format!("{:?} x{}", b.etype, b.num_elements()))
            .collect();
        let _ = writeln!(
            out,
            "  {}: {} elements, {} nodes ({})",
            r.name(),
            r.num_elements(),
            r.num_entities(EntityKind::Node),
            blocks.join(", ")
        );
    }
    if m.steps.is_empty() {
        let _ = writeln!(out, "steps: none");
    } else {
        let _ = writeln!(
            out,
            "steps: {} (index {}..{}, values {:e}..{:e})",
            m.steps.len(),
            m.steps[0].index,
            m.steps[m.steps.len() - 1].index,
            m.steps[0].value,
            m.steps[m.steps.len() - 1].value
        );
    }
    if m.quantities.is_empty() {
        let _ = writeln!(out, "no quantities");
        return Ok(out);
    }
    let _ = writeln!(out, "quantities:");
    for q in &m.quantities {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &q.steps {
            for rv in data.steps.read_step(&q.name, s)?.values {
                for v in rv.data {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        let range = if lo <= hi { format!("range [{lo:e}, {hi:e}]") } else { "no values".to_string() };
        let regions: Vec<&str> = q.regions.iter().map(|r| r.name.as_str()).collect();
        let _ = writeln!(
            out,
            "  {}: {:?} x{} {:?} on [{}], {} steps, {range}",
            q.name,
            q.defined_on,
            q.components,
            q.value_kind,
            regions.join(", "),
            q.steps.len()
        );
    }
    Ok(out)
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Run {
            config,
            threads,
            validate_only,
        } => {
            if *validate_only {
                validate(config).map(|_| ())
            } else {
                run(config, *threads)
            }
        }
        Command::Validate { config } => validate(config).map(|_| ()),
        Command::StripMesh { input, output } => {
            io::strip_mesh(input, output)?;
            log::info!("wrote geometry of {} to {}", input.display(), output.display());
            Ok(())
        }
        Command::Info { container } => {
            print!("{}", info_report(container)?);
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    init_logging(&cli.verbosity);
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            exit_code(&e)
        }
    }
}
