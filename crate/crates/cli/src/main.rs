//! `paaf`: synthesis, replay, sweeps, reports and live probing.

mod commands;
mod manifest;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paaf_core::probe::ProbeError;
use paaf_core::replay::{ReplayError, SweepParam};
use paaf_core::trace::{Operator, TraceError};

#[derive(Debug, Parser)]
#[command(name = "paaf", version, about = "Primary-anchored multi-connectivity: synthesis, replay and probing")]
struct Cli {
    /// Root for output directories when --out is not given.
    #[arg(long, global = true, env = "PAAF_OUT_DIR", default_value = "paaf-out")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dual-operator trace.
    Synth(SynthArgs),
    /// Replay a trace through baselines, FD, aggregation and PAAF policies.
    Replay(ReplayArgs),
    /// Sweep one threshold of a policy and record the trade-off curve.
    Sweep(SweepArgs),
    /// Combine outcome tables, add cost columns and extract the Pareto set.
    Report(ReportArgs),
    /// Send a constant-bit-rate probe stream and log echoes.
    ProbeSend(ProbeSendArgs),
    /// Echo probe packets back to their sender.
    ProbeEcho(ProbeEchoArgs),
    /// Join sender and echo logs into one-way latency records.
    ProbeJoin(ProbeJoinArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// SynthConfig JSON file.
    #[arg(long, required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration instead of a file.
    #[arg(long, value_parser = ["rural", "flat"], conflicts_with = "config")]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub rate_bps: Option<f64>,
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    /// TimingConfig JSON file.
    #[arg(long)]
    pub timing: Option<PathBuf>,
    #[arg(long)]
    pub heartbeat_ms: Option<f64>,
    #[arg(long)]
    pub radio_obs_delay_ms: Option<f64>,
    #[arg(long)]
    pub warmup_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PolicyOverrides {
    #[arg(long, allow_negative_numbers = true)]
    pub theta_r: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_u: Option<f64>,
    #[arg(long)]
    pub theta_l: Option<f64>,
    #[arg(long)]
    pub dwell_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Trace directory with packets.jsonl, radio.jsonl and optional meta.json.
    #[arg(long)]
    pub trace: PathBuf,
    /// Skip unparseable lines instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Do not check packet spacing against the target rate.
    #[arg(long)]
    pub no_rate_check: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub input: TraceArgs,
    /// Policy JSON file: one object or an array.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[command(flatten)]
    pub timing: TimingArgs,
    #[command(flatten)]
    pub overrides: PolicyOverrides,
    /// Comma-separated: baseline_A, baseline_B, fd, aggregation, policies,
    /// switching_table, pd_table.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<String>,
    /// Primary operator for FD and the preset tables.
    #[arg(long, default_value = "A")]
    pub primary: Operator,
    /// Half-rate trace of the primary, for link aggregation.
    #[arg(long)]
    pub agg_primary: Option<PathBuf>,
    /// Half-rate trace of the secondary, for link aggregation.
    #[arg(long)]
    pub agg_secondary: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: TraceArgs,
    /// Policy JSON file; the first policy (or --policy-name) is swept.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub policy_name: Option<String>,
    #[arg(long)]
    pub param: SweepParam,
    /// Comma-separated threshold values; `-inf` disables the metric.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, allow_hyphen_values = true)]
    pub grid: Vec<f64>,
    #[command(flatten)]
    pub timing: TimingArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Outcome CSV files written by `replay`.
    #[arg(long, num_args = 1.., required = true)]
    pub outcomes: Vec<PathBuf>,
    /// Secondary-link cost weights.
    #[arg(long, value_delimiter = ',', default_value = "1.2,1.5,2,3")]
    pub weights: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeSendArgs {
    #[arg(long)]
    pub rate_bps: f64,
    #[arg(long)]
    pub dest: SocketAddr,
    #[arg(long, default_value = "A")]
    pub operator: Operator,
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    /// Packet-jsonl output: sent UL packets and received echoes.
    #[arg(long)]
    pub log: PathBuf,
    /// JSON array of telemetry snapshots, embedded one per second.
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    #[arg(long, default_value = "probe")]
    pub run_id: String,
}

#[derive(Debug, Args)]
pub struct ProbeEchoArgs {
    #[arg(long)]
    pub listen: SocketAddr,
    /// Packet-jsonl output of received UL packets.
    #[arg(long)]
    pub log: PathBuf,
    /// Stop after this long; runs until killed otherwise.
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, default_value = "probe")]
    pub run_id: String,
}

#[derive(Debug, Args)]
pub struct ProbeJoinArgs {
    /// Log written by probe-send; repeat for both operators.
    #[arg(long = "sender-log", required = true)]
    pub sender_logs: Vec<PathBuf>,
    /// Log written by probe-echo.
    #[arg(long)]
    pub echo_log: PathBuf,
    /// Echo-server clock minus sender clock.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub clock_offset_us: i64,
    /// Radio samples to place next to the packets.
    #[arg(long)]
    pub radio: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Invariant breach inside the tool itself.
#[derive(Debug, thiserror::Error)]
#[error("internal invariant violated: {0}")]
pub struct Internal(pub String);

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn trace_code(e: &TraceError) -> u8 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}

/// 1 for bad input, 2 for I/O failures, 3 for internal invariant breaches.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Internal>() {
            return EXIT_INTERNAL;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<TraceError>() {
            return trace_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ReplayError>() {
            return match e {
                ReplayError::Io(_) => EXIT_IO,
                ReplayError::Csv(c) if c.is_io_error() => EXIT_IO,
                ReplayError::Trace(t) => trace_code(t),
                ReplayError::Kpi(_) => EXIT_INTERNAL,
                _ => EXIT_VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<ProbeError>() {
            return if matches!(e, ProbeError::Io(_)) { EXIT_IO } else { EXIT_VALIDATION };
        }
        if let Some(e) = cause.downcast_ref::<serde_json::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        }
    }
    EXIT_VALIDATION
}

/// Cause chain without the repeats of messages that already embed their source.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let root = cli.out_root;
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a, &root),
        Command::Replay(a) => commands::replay(a, &root),
        Command::Sweep(a) => commands::sweep(a, &root),
        Command::Report(a) => commands::report(a, &root),
        Command::ProbeSend(a) => commands::probe_send(a),
        Command::ProbeEcho(a) => commands::probe_echo(a),
        Command::ProbeJoin(a) => commands::probe_join(a, &root),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
