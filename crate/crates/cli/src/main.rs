//! `nearmem-sim`: runs single simulations, PU-count sweeps and device-assist
//! comparisons, and emits CSV or JSON reports.

mod commands;
mod failure;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::{classify, ExitKind};

#[derive(Debug, Parser)]
#[command(
    name = "nearmem-sim",
    version,
    about = "DIMM-PIM vs CXL-PIM data-movement simulator"
)]
pub struct Cli {
    /// System config file (flat dotted-key JSON).
    #[arg(long, global = true, env = "NEARMEM_SIM_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Config override, e.g. `--set cxl.devices=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Report failures on stderr as a JSON object.
    #[arg(long, global = true)]
    pub json_errors: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one workload on one architecture.
    Run(RunArgs),
    /// Simulate the cross product of workloads, architectures and PU counts.
    Sweep(SweepArgs),
    /// Compare a CXL run with and without device-assisted PU management.
    CompareAssist(CompareArgs),
    /// Write the synthetic trace of a workload.
    GenTrace(GenTraceArgs),
    /// Check a config file and print it with its derived fields.
    ValidateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    DimmPim,
    CxlUnopt,
    CxlOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Colocate,
    Stripe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeTo {
    Cpu,
    DimmPim,
    Best,
}

/// Where a single workload comes from.
#[derive(Debug, Clone, Args)]
pub struct WorkloadSource {
    /// Built-in workload name (VA, UNI, SEL, GEMV, SPMV, TS, BS, MLP, ...).
    #[arg(long, conflicts_with = "workload_file")]
    pub workload: Option<String>,

    /// Workload descriptor file (flat dotted-key JSON).
    #[arg(long, value_name = "PATH")]
    pub workload_file: Option<PathBuf>,

    /// Workload field override, e.g. `--workload-set comm.rounds=0`. Repeatable.
    #[arg(long = "workload-set", value_name = "KEY=VALUE")]
    pub workload_overrides: Vec<String>,

    /// Multiply every data volume by this factor.
    #[arg(long)]
    pub scale: Option<f64>,
}

/// CXL-side extensions and multi-device placement.
#[derive(Debug, Clone, Args)]
pub struct Extensions {
    /// Split transfers and kernels into up to N pipelined batches.
    #[arg(long, value_name = "N")]
    pub pipeline: Option<u32>,

    /// Route PU-to-PU exchanges inside the device.
    #[arg(long)]
    pub device_assist: bool,

    /// Number of CXL devices the PUs are spread over.
    #[arg(long, default_value_t = 1, value_name = "K")]
    pub devices: u32,

    /// PU-to-device mapping; defaults to colocate for exchanging workloads.
    #[arg(long)]
    pub placement: Option<PlacementArg>,
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,

    /// Write the report here instead of stdout.
    #[arg(short, long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: WorkloadSource,

    /// Simulate this trace file instead of generating one.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["workload", "workload_file", "scale", "pus", "normalize_to"])]
    pub trace: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub arch: ArchArg,

    /// PU count; defaults to every PU of the configured system.
    #[arg(long)]
    pub pus: Option<u32>,

    #[command(flatten)]
    pub ext: Extensions,

    /// Add a normalized total-time column.
    #[arg(long, value_enum)]
    pub normalize_to: Option<NormalizeTo>,

    /// Dump the timed events as newline-delimited JSON.
    #[arg(long, value_name = "PATH")]
    pub emit_timeline: Option<PathBuf>,

    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Built-in workloads; all fourteen when neither this nor a file is given.
    #[arg(long = "workload", value_delimiter = ',')]
    pub workloads: Vec<String>,

    /// Workload descriptor files. Repeatable.
    #[arg(long = "workload-file", value_name = "PATH")]
    pub workload_files: Vec<PathBuf>,

    /// Override applied to every selected workload. Repeatable.
    #[arg(long = "workload-set", value_name = "KEY=VALUE")]
    pub workload_overrides: Vec<String>,

    #[arg(long)]
    pub scale: Option<f64>,

    /// Architectures; all three by default.
    #[arg(long = "arch", value_enum, value_delimiter = ',')]
    pub archs: Vec<ArchArg>,

    /// PU grid; powers of two from 1 to 512 by default.
    #[arg(long, value_delimiter = ',')]
    pub pus: Vec<u32>,

    #[command(flatten)]
    pub ext: Extensions,

    #[arg(long, value_enum)]
    pub normalize_to: Option<NormalizeTo>,

    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: WorkloadSource,

    /// CXL variant to compare on.
    #[arg(long, value_enum, default_value = "cxl-opt")]
    pub arch: ArchArg,

    #[arg(long)]
    pub pus: Option<u32>,

    #[arg(long, value_name = "N")]
    pub pipeline: Option<u32>,

    #[arg(long, default_value_t = 1, value_name = "K")]
    pub devices: u32,

    #[arg(long)]
    pub placement: Option<PlacementArg>,

    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[command(flatten)]
    pub source: WorkloadSource,

    #[arg(long)]
    pub pus: Option<u32>,

    /// Architecture the trace is recorded for (sets the staged tag).
    #[arg(long, value_enum, default_value = "dimm-pim")]
    pub arch: ArchArg,

    #[arg(short, long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitKind::Arch.code()
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json_errors = cli.json_errors;
    match commands::dispatch(cli, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = classify(&e);
            if json_errors {
                let doc = serde_json::json!({
                    "error": {
                        "code": kind.code(),
                        "kind": kind.label(),
                        "message": format!("{e:#}"),
                    }
                });
                eprintln!("{doc}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(kind.code())
        }
    }
}
